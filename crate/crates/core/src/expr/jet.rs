//! Second-order forward-mode carriers.

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Numeric carrier an [`Expr`](super::Expr) can be evaluated with.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    /// Power with a constant exponent.
    fn powf(self, p: f64) -> Self;
    /// Power with a variable exponent.
    fn pow(self, e: Self) -> Self;
    /// `max(0, x)`, propagating NaN.
    fn macaulay(self) -> Self;
}

pub(crate) fn macaulay_f64(x: f64) -> f64 {
    if x > 0.0 || x.is_nan() {
        x
    } else {
        0.0
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    fn pow(self, e: Self) -> Self {
        f64::powf(self, e)
    }
    fn macaulay(self) -> Self {
        macaulay_f64(self)
    }
}

/// Value, gradient and Hessian with respect to `N` seeded variables.
///
/// Only the upper triangle is computed; the lower one is mirrored, so the
/// Hessian is symmetric bit for bit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
    pub h: [[f64; N]; N],
}

impl<const N: usize> Jet<N> {
    pub fn constant(v: f64) -> Self {
        Jet {
            v,
            g: [0.0; N],
            h: [[0.0; N]; N],
        }
    }

    /// The `i`-th independent variable at value `v`.
    pub fn variable(v: f64, i: usize) -> Self {
        let mut j = Jet::constant(v);
        j.g[i] = 1.0;
        j
    }

    pub fn variables(values: [f64; N]) -> [Self; N] {
        std::array::from_fn(|i| Jet::variable(values[i], i))
    }

    /// Applies a scalar function with derivatives `d1`, `d2` at `self.v`.
    #[inline]
    fn chain(self, v: f64, d1: f64, d2: f64) -> Self {
        let mut out = Jet::constant(v);
        for i in 0..N {
            out.g[i] = d1 * self.g[i];
        }
        for i in 0..N {
            for j in i..N {
                let x = d1 * self.h[i][j] + d2 * self.g[i] * self.g[j];
                out.h[i][j] = x;
                out.h[j][i] = x;
            }
        }
        out
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut out = Jet::constant(self.v + o.v);
        for i in 0..N {
            out.g[i] = self.g[i] + o.g[i];
            for j in i..N {
                let x = self.h[i][j] + o.h[i][j];
                out.h[i][j] = x;
                out.h[j][i] = x;
            }
        }
        out
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut out = Jet::constant(self.v - o.v);
        for i in 0..N {
            out.g[i] = self.g[i] - o.g[i];
            for j in i..N {
                let x = self.h[i][j] - o.h[i][j];
                out.h[i][j] = x;
                out.h[j][i] = x;
            }
        }
        out
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    fn neg(self) -> Self {
        let mut out = Jet::constant(-self.v);
        for i in 0..N {
            out.g[i] = -self.g[i];
            for j in i..N {
                let x = -self.h[i][j];
                out.h[i][j] = x;
                out.h[j][i] = x;
            }
        }
        out
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Jet::constant(self.v * o.v);
        for i in 0..N {
            out.g[i] = self.g[i] * o.v + self.v * o.g[i];
        }
        for i in 0..N {
            for j in i..N {
                let x = self.h[i][j] * o.v
                    + self.v * o.h[i][j]
                    + (self.g[i] * o.g[j] + self.g[j] * o.g[i]);
                out.h[i][j] = x;
                out.h[j][i] = x;
            }
        }
        out
    }
}

impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        // q = a/b, q' = (a' - q b')/b, q'' = (a'' - q' b'ᵀ - b' q'ᵀ - q b'')/b
        let q = self.v / o.v;
        let mut out = Jet::constant(q);
        for i in 0..N {
            out.g[i] = (self.g[i] - q * o.g[i]) / o.v;
        }
        for i in 0..N {
            for j in i..N {
                let x = (self.h[i][j] - (out.g[i] * o.g[j] + o.g[i] * out.g[j]) - q * o.h[i][j]) / o.v;
                out.h[i][j] = x;
                out.h[j][i] = x;
            }
        }
        out
    }
}

impl<const N: usize> Scalar for Jet<N> {
    fn from_f64(v: f64) -> Self {
        Jet::constant(v)
    }

    fn value(&self) -> f64 {
        self.v
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    fn ln(self) -> Self {
        let x = self.v;
        self.chain(x.ln(), 1.0 / x, -1.0 / (x * x))
    }

    fn sqrt(self) -> Self {
        let x = self.v;
        let s = x.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * x))
    }

    fn powf(self, p: f64) -> Self {
        let x = self.v;
        if p == 1.0 {
            return self;
        }
        if p == 0.0 {
            return Jet::constant(x.powf(0.0));
        }
        let d2 = if p == 2.0 { 2.0 } else { p * (p - 1.0) * x.powf(p - 2.0) };
        self.chain(x.powf(p), p * x.powf(p - 1.0), d2)
    }

    fn pow(self, e: Self) -> Self {
        // a^b = exp(b ln a); value taken from powf to match the f64 path.
        let mut out = (e * self.ln()).exp();
        out.v = self.v.powf(e.v);
        out
    }

    fn macaulay(self) -> Self {
        let x = self.v;
        if x.is_nan() {
            self.chain(x, x, x)
        } else if x > 0.0 {
            self
        } else {
            Jet::constant(0.0)
        }
    }
}

/// Value, gradient and Hessian of a scalar function of `k` features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderValue {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
}

impl SecondOrderValue {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.gradient.iter().all(|g| g.is_finite())
            && self.hessian.iter().flatten().all(|h| h.is_finite())
    }
}

impl<const N: usize> From<Jet<N>> for SecondOrderValue {
    fn from(j: Jet<N>) -> Self {
        SecondOrderValue {
            value: j.v,
            gradient: j.g.to_vec(),
            hessian: j.h.iter().map(|row| row.to_vec()).collect(),
        }
    }
}
