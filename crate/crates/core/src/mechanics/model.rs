use serde::{Deserialize, Serialize};

use super::{check_stretch, path_derivatives, path_invariants, stress_factors, DeformationMode, MechanicsError};
use crate::expr::{Expr, Jet};

/// A strain-energy function, either discovered (symbolic) or a classical baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaterialModel {
    /// `W(Ĩ1, Ĩ2)` given by an expression over features `I1`, `I2`.
    Symbolic { expr: Expr },
    /// `W = C1·Ĩ1`.
    NeoHookean { c1: f64 },
    /// `W = C10·Ĩ1 + C01·Ĩ2`.
    MooneyRivlin { c10: f64, c01: f64 },
    /// `W = C10·Ĩ1 + C20·Ĩ1² + C30·Ĩ1³`.
    Yeoh3 { c10: f64, c20: f64, c30: f64 },
    /// `W = Σ μᵢ/αᵢ (λ1^αᵢ + λ2^αᵢ + λ3^αᵢ − 3)`.
    Ogden3 { mu: [f64; 3], alpha: [f64; 3] },
}

/// Energy and its invariant-space derivatives at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct InvariantDerivatives {
    pub w: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

impl MaterialModel {
    pub fn symbolic(expr: Expr) -> MaterialModel {
        MaterialModel::Symbolic { expr }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MaterialModel::Symbolic { .. } => "symbolic",
            MaterialModel::NeoHookean { .. } => "neo-hookean",
            MaterialModel::MooneyRivlin { .. } => "mooney-rivlin",
            MaterialModel::Yeoh3 { .. } => "yeoh3",
            MaterialModel::Ogden3 { .. } => "ogden3",
        }
    }

    /// Equivalent expression tree, for every model written in invariants.
    pub fn to_expr(&self) -> Option<Expr> {
        let i1 = || Expr::var(0);
        match self {
            MaterialModel::Symbolic { expr } => Some(expr.clone()),
            MaterialModel::NeoHookean { c1 } => Some(*c1 * i1()),
            MaterialModel::MooneyRivlin { c10, c01 } => Some(*c10 * i1() + *c01 * Expr::var(1)),
            MaterialModel::Yeoh3 { c10, c20, c30 } => Some(
                *c10 * i1() + *c20 * i1().pow(Expr::constant(2.0)) + *c30 * i1().pow(Expr::constant(3.0)),
            ),
            MaterialModel::Ogden3 { .. } => None,
        }
    }

    fn check_features(&self) -> Result<(), MechanicsError> {
        if let MaterialModel::Symbolic { expr } = self {
            if let Some(v) = expr.max_var().filter(|&v| v >= 2) {
                return Err(MechanicsError::FeatureCount { expected: v + 1 });
            }
        }
        Ok(())
    }

    /// Value, gradient and Hessian in invariant space; `None` for Ogden.
    pub(crate) fn invariant_derivatives(&self, i1: f64, i2: f64) -> Option<InvariantDerivatives> {
        let (w, grad, hess) = match *self {
            MaterialModel::Symbolic { ref expr } => {
                let j: Jet<2> = expr.eval_generic(&Jet::variables([i1, i2]));
                (j.v, j.g, j.h)
            }
            MaterialModel::NeoHookean { c1 } => (c1 * i1, [c1, 0.0], [[0.0; 2]; 2]),
            MaterialModel::MooneyRivlin { c10, c01 } => (c10 * i1 + c01 * i2, [c10, c01], [[0.0; 2]; 2]),
            MaterialModel::Yeoh3 { c10, c20, c30 } => (
                c10 * i1 + c20 * i1 * i1 + c30 * i1 * i1 * i1,
                [c10 + 2.0 * c20 * i1 + 3.0 * c30 * i1 * i1, 0.0],
                [[2.0 * c20 + 6.0 * c30 * i1, 0.0], [0.0, 0.0]],
            ),
            MaterialModel::Ogden3 { .. } => return None,
        };
        Some(InvariantDerivatives { w, grad, hess })
    }

    /// Strain energy along a mode path. May be non-finite.
    pub fn energy(&self, mode: DeformationMode, lambda: f64) -> Result<f64, MechanicsError> {
        check_stretch(lambda)?;
        self.check_features()?;
        Ok(self.energy_unchecked(mode, lambda))
    }

    pub(crate) fn energy_unchecked(&self, mode: DeformationMode, lambda: f64) -> f64 {
        match self {
            MaterialModel::Ogden3 { mu, alpha } => {
                let ls = mode.principal_stretches(lambda);
                (0..3)
                    .map(|i| {
                        if alpha[i] == 0.0 {
                            0.0
                        } else {
                            mu[i] / alpha[i] * ls.iter().map(|l| l.powf(alpha[i]) - 1.0).sum::<f64>()
                        }
                    })
                    .sum()
            }
            MaterialModel::Symbolic { expr } => {
                let (i1, i2) = path_invariants(mode, lambda);
                expr.evaluate(&[i1, i2])
            }
            _ => {
                let (i1, i2) = path_invariants(mode, lambda);
                self.invariant_derivatives(i1, i2).map_or(f64::NAN, |d| d.w)
            }
        }
    }

    pub(crate) fn stress_unchecked(&self, mode: DeformationMode, l: f64) -> f64 {
        match self {
            MaterialModel::Ogden3 { mu, alpha } => (0..3)
                .map(|i| {
                    let a = alpha[i];
                    let lateral = match mode {
                        DeformationMode::UT => l.powf(-a / 2.0 - 1.0),
                        DeformationMode::ET => l.powf(-2.0 * a - 1.0),
                        DeformationMode::PS => l.powf(-a - 1.0),
                    };
                    mu[i] * (l.powf(a - 1.0) - lateral)
                })
                .sum(),
            _ => {
                let (i1, i2) = path_invariants(mode, l);
                let [a, b] = stress_factors(mode, l);
                match self.invariant_derivatives(i1, i2) {
                    Some(d) if d.w.is_finite() => a * d.grad[0] + b * d.grad[1],
                    Some(_) => f64::NAN,
                    None => f64::NAN,
                }
            }
        }
    }

    pub(crate) fn tangent_unchecked(&self, mode: DeformationMode, l: f64) -> f64 {
        match self {
            MaterialModel::Ogden3 { mu, alpha } => {
                let ls = mode.principal_stretches(l);
                let (d1, d2) = ogden_path_derivatives(mode, l);
                (0..3)
                    .map(|i| {
                        let a = alpha[i];
                        mu[i]
                            * (0..3)
                                .map(|k| {
                                    (a - 1.0) * ls[k].powf(a - 2.0) * d1[k] * d1[k] + ls[k].powf(a - 1.0) * d2[k]
                                })
                                .sum::<f64>()
                    })
                    .sum()
            }
            _ => {
                let (i1, i2) = path_invariants(mode, l);
                let (d1, d2) = path_derivatives(mode, l);
                match self.invariant_derivatives(i1, i2) {
                    Some(d) if d.w.is_finite() => {
                        let quad = d1[0] * d1[0] * d.hess[0][0]
                            + 2.0 * d1[0] * d1[1] * d.hess[0][1]
                            + d1[1] * d1[1] * d.hess[1][1];
                        d.grad[0] * d2[0] + d.grad[1] * d2[1] + quad
                    }
                    _ => f64::NAN,
                }
            }
        }
    }
}

/// `dλₖ/dλ` and `d²λₖ/dλ²` for the three principal stretches of a path.
fn ogden_path_derivatives(mode: DeformationMode, l: f64) -> ([f64; 3], [f64; 3]) {
    match mode {
        DeformationMode::UT => {
            let d1 = -0.5 * l.powf(-1.5);
            let d2 = 0.75 * l.powf(-2.5);
            ([1.0, d1, d1], [0.0, d2, d2])
        }
        DeformationMode::ET => ([1.0, 1.0, -2.0 * l.powi(-3)], [0.0, 0.0, 6.0 * l.powi(-4)]),
        DeformationMode::PS => ([1.0, 0.0, -l.powi(-2)], [0.0, 0.0, 2.0 * l.powi(-3)]),
    }
}

/// Nominal stress (MPa) along a mode path.
///
/// A non-finite result, such as past a locking singularity, is returned as
/// [`MechanicsError::NonFinite`].
pub fn nominal_stress(model: &MaterialModel, mode: DeformationMode, lambda: f64) -> Result<f64, MechanicsError> {
    check_stretch(lambda)?;
    model.check_features()?;
    let p = model.stress_unchecked(mode, lambda);
    if p.is_finite() {
        Ok(p)
    } else {
        Err(MechanicsError::NonFinite {
            quantity: "stress",
            mode,
            stretch: lambda,
        })
    }
}

/// `d²W/dλ²` along a mode path, from the exact invariant Hessian.
pub fn tangent_stiffness(model: &MaterialModel, mode: DeformationMode, lambda: f64) -> Result<f64, MechanicsError> {
    check_stretch(lambda)?;
    model.check_features()?;
    let k = model.tangent_unchecked(mode, lambda);
    if k.is_finite() {
        Ok(k)
    } else {
        Err(MechanicsError::NonFinite {
            quantity: "tangent stiffness",
            mode,
            stretch: lambda,
        })
    }
}

pub fn tangent_stiffness_ut(model: &MaterialModel, lambda: f64) -> Result<f64, MechanicsError> {
    tangent_stiffness(model, DeformationMode::UT, lambda)
}

const LOCKING_CAP: f64 = 100.0;
const LOCKING_SCAN_STEPS: usize = 4000;

/// Smallest `λ > 1` at which the energy diverges, if any on `(1, 100]`.
///
/// Scans geometrically for the first stretch where the energy is non-finite
/// or drops (a pole crossed between samples), then bisects the bracket.
pub fn locking_stretch(model: &MaterialModel, mode: DeformationMode) -> Option<f64> {
    if model.check_features().is_err() {
        return None;
    }
    let w = |l: f64| model.energy_unchecked(mode, l);
    let ratio = LOCKING_CAP.powf(1.0 / LOCKING_SCAN_STEPS as f64);
    let mut lo = 1.0;
    let mut w_lo = w(lo);
    if !w_lo.is_finite() {
        return None;
    }
    for k in 1..=LOCKING_SCAN_STEPS {
        let hi = if k == LOCKING_SCAN_STEPS { LOCKING_CAP } else { ratio.powi(k as i32) };
        let w_hi = w(hi);
        if w_hi.is_finite() && w_hi >= w_lo {
            lo = hi;
            w_lo = w_hi;
            continue;
        }
        let (mut a, mut b) = (lo, hi);
        let w_start = w_lo;
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let wm = w(m);
            if wm.is_finite() && wm >= w_start {
                a = m;
            } else {
                b = m;
            }
        }
        // A genuine singularity leaves the energy unbounded at the bracket edge.
        let edge = w(a);
        let scale = w_start.abs().max(w(1.0 + 1e-3).abs()).max(1e-12);
        if !edge.is_finite() || edge.abs() > 1e6 * scale || !w(b).is_finite() {
            return Some(0.5 * (a + b));
        }
        lo = hi;
        w_lo = w_hi;
        if !w_lo.is_finite() {
            return None;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn locking_law() -> MaterialModel {
        MaterialModel::symbolic(parse("0.031*(3.75*I1 + I2) + I1/(77.9 - 1.05*I1)").unwrap())
    }

    #[test]
    fn neo_hookean_ut_at_two() {
        let p = nominal_stress(&MaterialModel::NeoHookean { c1: 0.5 }, DeformationMode::UT, 2.0).unwrap();
        assert!((p - 1.75).abs() < 1e-14);
    }

    #[test]
    fn locking_law_ut_at_two() {
        let w1 = 0.11625 + 77.9 / (77.9f64 - 2.1).powi(2);
        let expected = 2.0 * 1.75 * (w1 + 0.5 * 0.031);
        let p = nominal_stress(&locking_law(), DeformationMode::UT, 2.0).unwrap();
        assert!((p - expected).abs() < 1e-13);
        assert!((p - 0.5087).abs() < 1e-3);
    }

    #[test]
    fn zero_stress_at_reference() {
        let models = [
            locking_law(),
            MaterialModel::MooneyRivlin { c10: 0.2, c01: 0.05 },
            MaterialModel::Yeoh3 { c10: 0.2, c20: -0.01, c30: 1e-4 },
            MaterialModel::Ogden3 {
                mu: [0.6, 0.003, -0.01],
                alpha: [1.3, 5.0, -2.0],
            },
        ];
        for m in &models {
            for mode in DeformationMode::ALL {
                assert_eq!(nominal_stress(m, mode, 1.0).unwrap(), 0.0, "{m:?} {mode}");
            }
        }
    }

    #[test]
    fn locking_law_tangent_at_reference() {
        let k = tangent_stiffness_ut(&locking_law(), 1.0).unwrap();
        let w1 = 0.031 * 3.75 + 1.0 / 77.9;
        assert!((k - 6.0 * (w1 + 0.031)).abs() < 1e-13);
        assert!((k - 0.9605).abs() < 1e-4);
    }

    #[test]
    fn locking_law_locking() {
        let ut = locking_stretch(&locking_law(), DeformationMode::UT).unwrap();
        // λ² + 2/λ − 3 = 77.9/1.05
        let target = 77.9 / 1.05;
        assert!((ut * ut + 2.0 / ut - 3.0 - target).abs() < 1e-6);
        assert!((ut - 8.77).abs() < 0.01);
        let et = locking_stretch(&locking_law(), DeformationMode::ET).unwrap();
        assert!((2.0 * et * et + et.powi(-4) - 3.0 - target).abs() < 1e-6);
        assert!((et - 6.21).abs() < 0.01);
    }

    #[test]
    fn no_locking_for_polynomials() {
        assert_eq!(locking_stretch(&MaterialModel::NeoHookean { c1: 0.3 }, DeformationMode::UT), None);
        let ogden = MaterialModel::Ogden3 {
            mu: [0.4, 0.001, -0.01],
            alpha: [1.5, 5.0, -2.0],
        };
        assert_eq!(locking_stretch(&ogden, DeformationMode::ET), None);
    }

    #[test]
    fn past_singularity_is_an_error() {
        let pole = locking_stretch(&locking_law(), DeformationMode::UT).unwrap();
        assert!(nominal_stress(&locking_law(), DeformationMode::UT, pole - 1e-6).unwrap() > 1e3);
        assert!(MaterialModel::energy(&locking_law(), DeformationMode::UT, pole + 1e-6).unwrap() < -1e3);
        let w = MaterialModel::symbolic(parse("log(I1 - 1)").unwrap());
        assert!(matches!(
            nominal_stress(&w, DeformationMode::UT, 1.2),
            Err(MechanicsError::NonFinite { .. })
        ));
    }

    #[test]
    fn symbolic_and_closed_forms_agree() {
        let m = MaterialModel::Yeoh3 { c10: 0.18, c20: -0.002, c30: 4e-5 };
        let s = MaterialModel::symbolic(m.to_expr().unwrap());
        for mode in DeformationMode::ALL {
            for &l in &[0.6, 1.3, 3.0, 7.0] {
                let a = nominal_stress(&m, mode, l).unwrap();
                let b = nominal_stress(&s, mode, l).unwrap();
                assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
                let a = tangent_stiffness(&m, mode, l).unwrap();
                let b = tangent_stiffness(&s, mode, l).unwrap();
                assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn ogden_matches_neo_hookean_at_alpha_two() {
        let og = MaterialModel::Ogden3 {
            mu: [1.0, 0.0, 0.0],
            alpha: [2.0, 1.0, 1.0],
        };
        let nh = MaterialModel::NeoHookean { c1: 0.5 };
        for mode in DeformationMode::ALL {
            for &l in &[0.5, 1.5, 4.0] {
                let a = nominal_stress(&og, mode, l).unwrap();
                let b = nominal_stress(&nh, mode, l).unwrap();
                assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
                let a = tangent_stiffness(&og, mode, l).unwrap();
                let b = tangent_stiffness(&nh, mode, l).unwrap();
                assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn rejects_extra_features() {
        let w = MaterialModel::symbolic(parse("I1").unwrap().pow(Expr::constant(2.0)) + Expr::var(2));
        assert_eq!(
            nominal_stress(&w, DeformationMode::UT, 1.5),
            Err(MechanicsError::FeatureCount { expected: 3 })
        );
    }
}
