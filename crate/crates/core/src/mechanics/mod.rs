//! Incompressible isotropic hyperelasticity under homogeneous deformation.
//!
//! Stretches are dimensionless, stresses are nominal (force per reference
//! area) in MPa. Energies are functions of the shifted invariants
//! `Ĩ1 = I₁ − 3`, `Ĩ2 = I₂ − 3`, which vanish in the undeformed state.

mod calibrate;
mod forensic;
mod model;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calibrate::{calibrate_baseline, mse_per_mode, BaselineKind, Calibration, CalibrationError, CalibrationOptions};
pub use forensic::{compression_scan, ogden_forensic, DEFAULT_AMPLIFICATION_THRESHOLD, CompressionScan, OgdenForensic, TermAmplification};
pub use model::{locking_stretch, nominal_stress, tangent_stiffness, tangent_stiffness_ut, MaterialModel};

/// Homogeneous test protocols of the isotropic skill.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeformationMode {
    /// Uniaxial tension.
    UT,
    /// Equibiaxial tension.
    ET,
    /// Pure shear (planar tension).
    PS,
}

impl DeformationMode {
    pub const ALL: [DeformationMode; 3] = [DeformationMode::UT, DeformationMode::ET, DeformationMode::PS];

    pub fn as_str(self) -> &'static str {
        match self {
            DeformationMode::UT => "UT",
            DeformationMode::ET => "ET",
            DeformationMode::PS => "PS",
        }
    }

    /// Principal stretches `(λ1, λ2, λ3)` along the mode path.
    pub fn principal_stretches(self, lambda: f64) -> [f64; 3] {
        match self {
            DeformationMode::UT => {
                let t = lambda.sqrt().recip();
                [lambda, t, t]
            }
            DeformationMode::ET => [lambda, lambda, lambda.powi(-2)],
            DeformationMode::PS => [lambda, 1.0, lambda.recip()],
        }
    }

    /// Number of equally loaded axes; the work conjugate of `λ` is
    /// `loaded_axes · P`, so `dW/dλ = loaded_axes · P`.
    pub fn loaded_axes(self) -> f64 {
        match self {
            DeformationMode::ET => 2.0,
            DeformationMode::UT | DeformationMode::PS => 1.0,
        }
    }

    /// Largest path stretch for which all principal stretches stay within
    /// `[1/lambda_max, lambda_max]`.
    pub fn path_limit(self, lambda_max: f64) -> f64 {
        match self {
            DeformationMode::UT | DeformationMode::PS => lambda_max,
            DeformationMode::ET => lambda_max.sqrt(),
        }
    }
}

impl std::fmt::Display for DeformationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DeformationMode {
    type Err = MechanicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "UT" => Ok(DeformationMode::UT),
            "ET" => Ok(DeformationMode::ET),
            "PS" => Ok(DeformationMode::PS),
            _ => Err(MechanicsError::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanicsError {
    #[error("stretch must be positive, got {0}")]
    NonPositiveStretch(f64),
    #[error("non-finite {quantity} in {mode} at stretch {stretch}")]
    NonFinite {
        quantity: &'static str,
        mode: DeformationMode,
        stretch: f64,
    },
    #[error("unknown deformation mode `{0}` (expected UT, ET or PS)")]
    UnknownMode(String),
    #[error("model expects {expected} features, the isotropic invariants provide 2")]
    FeatureCount { expected: usize },
}

/// One observed stress-stretch pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressPoint {
    pub stretch: f64,
    /// Nominal stress in MPa.
    pub stress: f64,
}

fn check_stretch(lambda: f64) -> Result<(), MechanicsError> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(MechanicsError::NonPositiveStretch(lambda))
    }
}

/// Shifted invariants `(Ĩ1, Ĩ2)` along a mode path.
///
/// Evaluated in factored form, so they are exactly zero at `λ = 1` and
/// accurate near it.
pub fn invariants(mode: DeformationMode, lambda: f64) -> Result<(f64, f64), MechanicsError> {
    check_stretch(lambda)?;
    Ok(path_invariants(mode, lambda))
}

pub(crate) fn path_invariants(mode: DeformationMode, l: f64) -> (f64, f64) {
    match mode {
        DeformationMode::UT => {
            // λ² + 2/λ − 3 = (λ−1)²(λ+2)/λ ; 2λ + 1/λ² − 3 = (λ−1)²(2λ+1)/λ²
            let d = (l - 1.0) * (l - 1.0);
            (d * (l + 2.0) / l, d * (2.0 * l + 1.0) / (l * l))
        }
        DeformationMode::ET => {
            let m = l * l;
            let d = (m - 1.0) * (m - 1.0);
            (d * (2.0 * m + 1.0) / (m * m), d * (m + 2.0) / m)
        }
        DeformationMode::PS => {
            let s = l - l.recip();
            (s * s, s * s)
        }
    }
}

/// First and second derivatives of the path invariants with respect to λ:
/// `([Ĩ1', Ĩ2'], [Ĩ1'', Ĩ2''])`.
pub(crate) fn path_derivatives(mode: DeformationMode, l: f64) -> ([f64; 2], [f64; 2]) {
    match mode {
        DeformationMode::UT => {
            let a = 2.0 * (l - l.powi(-2));
            ([a, a / l], [2.0 + 4.0 * l.powi(-3), 6.0 * l.powi(-4)])
        }
        DeformationMode::ET => {
            let a = 4.0 * (l - l.powi(-5));
            ([a, a * l * l], [4.0 + 20.0 * l.powi(-6), 12.0 * l * l + 12.0 * l.powi(-4)])
        }
        DeformationMode::PS => {
            let a = 2.0 * (l - l.powi(-3));
            let b = 2.0 + 6.0 * l.powi(-4);
            ([a, a], [b, b])
        }
    }
}

/// Kinematic factors `(a, b)` with nominal stress `P = a·W1 + b·W2`.
pub(crate) fn stress_factors(mode: DeformationMode, l: f64) -> [f64; 2] {
    let (d, _) = path_derivatives(mode, l);
    let n = mode.loaded_axes();
    [d[0] / n, d[1] / n]
}

/// Shifted invariants of an arbitrary isochoric principal-stretch triple.
pub fn invariants_from_stretches(l1: f64, l2: f64, l3: f64) -> (f64, f64) {
    let (a, b, c) = (l1 * l1, l2 * l2, l3 * l3);
    (a + b + c - 3.0, a * b + b * c + c * a - 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_state() {
        for mode in DeformationMode::ALL {
            assert_eq!(invariants(mode, 1.0).unwrap(), (0.0, 0.0));
        }
    }

    #[test]
    fn values_at_two() {
        let close = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).abs() < 1e-14 && (a.1 - b.1).abs() < 1e-14;
        assert!(close(invariants(DeformationMode::UT, 2.0).unwrap(), (2.0, 1.25)));
        assert!(close(invariants(DeformationMode::ET, 2.0).unwrap(), (5.0625, 13.5)));
        assert!(close(invariants(DeformationMode::PS, 2.0).unwrap(), (2.25, 2.25)));
    }

    #[test]
    fn matches_expanded_forms() {
        for &l in &[0.3, 0.9, 1.5, 4.0, 7.6] {
            let (i1, i2) = invariants(DeformationMode::UT, l).unwrap();
            assert!((i1 - (l * l + 2.0 / l - 3.0)).abs() < 1e-12);
            assert!((i2 - (2.0 * l + l.powi(-2) - 3.0)).abs() < 1e-12);
            let (i1, i2) = invariants(DeformationMode::ET, l).unwrap();
            assert!((i1 - (2.0 * l * l + l.powi(-4) - 3.0)).abs() < 1e-9);
            assert!((i2 - (l.powi(4) + 2.0 * l.powi(-2) - 3.0)).abs() < 1e-9);
            for mode in DeformationMode::ALL {
                let [a, b, c] = mode.principal_stretches(l);
                let (j1, j2) = invariants_from_stretches(a, b, c);
                let (i1, i2) = invariants(mode, l).unwrap();
                assert!((i1 - j1).abs() < 1e-9 * (1.0 + i1) && (i2 - j2).abs() < 1e-9 * (1.0 + i2));
            }
        }
    }

    #[test]
    fn rejects_non_positive_stretch() {
        assert!(matches!(invariants(DeformationMode::UT, 0.0), Err(MechanicsError::NonPositiveStretch(_))));
        assert!(invariants(DeformationMode::PS, -1.0).is_err());
    }

    #[test]
    fn path_derivatives_match_finite_differences() {
        let h = 1e-5;
        for mode in DeformationMode::ALL {
            for &l in &[0.5, 1.0, 2.0, 6.0] {
                let (d1, d2) = path_derivatives(mode, l);
                let p = path_invariants(mode, l + h);
                let m = path_invariants(mode, l - h);
                let c = path_invariants(mode, l);
                let fd1 = [(p.0 - m.0) / (2.0 * h), (p.1 - m.1) / (2.0 * h)];
                let fd2 = [(p.0 - 2.0 * c.0 + m.0) / (h * h), (p.1 - 2.0 * c.1 + m.1) / (h * h)];
                for k in 0..2 {
                    assert!((d1[k] - fd1[k]).abs() < 1e-6 * (1.0 + d1[k].abs()), "{mode} {l}");
                    assert!((d2[k] - fd2[k]).abs() < 1e-3 * (1.0 + d2[k].abs()), "{mode} {l}");
                }
            }
        }
    }
}
