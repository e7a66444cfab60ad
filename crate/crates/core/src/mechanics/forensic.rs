use serde::{Deserialize, Serialize};

use super::{check_stretch, DeformationMode, MaterialModel, MechanicsError};

/// Default amplification above which a term is flagged as ill-conditioned.
pub const DEFAULT_AMPLIFICATION_THRESHOLD: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermAmplification {
    pub index: usize,
    pub mu: f64,
    pub alpha: f64,
    /// `λ^α`
    pub power_alpha: f64,
    /// `λ^(α−2)`, the factor appearing in the second derivative.
    pub power_alpha_minus_2: f64,
    pub alpha_exceeds: bool,
    pub alpha_minus_2_exceeds: bool,
}

/// Per-term amplification of an Ogden model at a compressive transverse stretch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OgdenForensic {
    pub transverse_stretch: f64,
    pub threshold: f64,
    pub terms: Vec<TermAmplification>,
    /// Largest of all reported powers.
    pub max_amplification: f64,
    pub ill_conditioned: bool,
}

/// Reports `λ^αᵢ` and `λ^(αᵢ−2)` for each Ogden term at `0 < λ < 1`.
pub fn ogden_forensic(mu: &[f64], alpha: &[f64], transverse_stretch: f64, threshold: f64) -> Result<OgdenForensic, MechanicsError> {
    let l = transverse_stretch;
    if !(l > 0.0 && l < 1.0) {
        return Err(MechanicsError::NonPositiveStretch(l));
    }
    let terms: Vec<_> = alpha
        .iter()
        .zip(mu.iter().chain(std::iter::repeat(&f64::NAN)))
        .enumerate()
        .map(|(index, (&alpha, &mu))| {
            let power_alpha = l.powf(alpha);
            let power_alpha_minus_2 = l.powf(alpha - 2.0);
            TermAmplification {
                index,
                mu,
                alpha,
                power_alpha,
                power_alpha_minus_2,
                alpha_exceeds: power_alpha > threshold,
                alpha_minus_2_exceeds: power_alpha_minus_2 > threshold,
            }
        })
        .collect();
    let max_amplification = terms
        .iter()
        .flat_map(|t| [t.power_alpha, t.power_alpha_minus_2])
        .fold(0.0, f64::max);
    Ok(OgdenForensic {
        transverse_stretch: l,
        threshold,
        ill_conditioned: terms.iter().any(|t| t.alpha_exceeds || t.alpha_minus_2_exceeds),
        terms,
        max_amplification,
    })
}

/// Tangent stiffness sampled along a mode path over `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionScan {
    pub mode: DeformationMode,
    pub stretches: Vec<f64>,
    pub stiffness: Vec<f64>,
    pub min_stiffness: f64,
    /// Stretch at which the minimum occurs.
    pub argmin: f64,
    pub all_finite_positive: bool,
}

/// Samples `d²W/dλ²` at `n ≥ 2` evenly spaced stretches.
pub fn compression_scan(model: &MaterialModel, mode: DeformationMode, lo: f64, hi: f64, n: usize) -> Result<CompressionScan, MechanicsError> {
    check_stretch(lo)?;
    check_stretch(hi)?;
    let n = n.max(2);
    let stretches: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let stiffness: Vec<f64> = stretches.iter().map(|&l| model.tangent_unchecked(mode, l)).collect();
    let (argmin, min_stiffness) = stretches
        .iter()
        .zip(&stiffness)
        .fold((lo, f64::INFINITY), |acc, (&l, &k)| if k < acc.1 || k.is_nan() && !acc.1.is_nan() { (l, k) } else { acc });
    Ok(CompressionScan {
        mode,
        all_finite_positive: stiffness.iter().all(|k| k.is_finite() && *k > 0.0),
        stretches,
        stiffness,
        min_stiffness,
        argmin,
    })
}
