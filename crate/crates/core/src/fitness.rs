//! Physics-informed objective: stress misfit plus squared-ReLU constraint
//! penalties over a sampled admissible deformation domain.
//!
//! ```text
//! composite = train_mse + λ_reg·complexity + Σ_c λ_c·penalty_c
//! penalty_c = (1/M) Σ_j max(0, −Q_j)²
//! ```
//!
//! Any non-finite stress or penalty makes the candidate invalid with
//! composite `+∞`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::expr::{Expr, Jet};
use crate::mechanics::{invariants_from_stretches, path_invariants, stress_factors, DeformationMode};
use crate::skills::{split_additive, ConstraintKind, ConstraintTarget, SamplingDomain, Skill, SkillError, TransformId};

#[derive(Debug, Error)]
pub enum FitnessError {
    #[error("sampling domain has no admissible points")]
    EmptyDomain,
    #[error("sampling from data requested but no datasets were given")]
    NoData,
    #[error(transparent)]
    Skill(#[from] SkillError),
    #[error("skill `{0}` has no fiber-kinematics datasets to fit; only its constraints can be evaluated")]
    UnsupportedTransform(String),
}

/// Admissible states at which constraints are checked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `(Ĩ1, Ĩ2)` pairs from the principal-stretch grid and the mode paths.
    pub invariants: Vec<[f64; 2]>,
    /// `Ĩ4 = λ_f² − 1` for fiber stretches in `[lambda_min, lambda_max]`.
    pub fiber: Vec<f64>,
}

impl SampleGrid {
    pub fn len(&self) -> usize {
        self.invariants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.invariants.is_empty()
    }

    pub fn max_i1(&self) -> f64 {
        self.invariants.iter().map(|p| p[0]).fold(0.0, f64::max)
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Builds the constraint sampling set.
///
/// With `auto_from_data`, `λmax = data_margin × max observed stretch` and
/// `λmin = 1/λmax`. Each principal-stretch pair `(λ1, λ2)` on a log-spaced
/// `grid_n × grid_n` grid is kept when `λ3 = 1/(λ1λ2)` also lies in range.
/// `path_points` samples are added along each of UT/ET/PS, up to the
/// margin-scaled data maximum of that mode, or to the largest stretch the
/// box admits for modes without data. The reference state is always included.
pub fn build_sample_grid(datasets: &[Dataset], sampling: &SamplingDomain) -> Result<SampleGrid, FitnessError> {
    let (lambda_min, lambda_max) = if sampling.auto_from_data {
        let max = datasets.iter().map(Dataset::max_stretch).fold(f64::NAN, f64::max);
        if !max.is_finite() {
            return Err(FitnessError::NoData);
        }
        let hi = sampling.data_margin * max;
        (hi.recip(), hi)
    } else {
        (sampling.lambda_min, sampling.lambda_max)
    };
    if !(lambda_min > 0.0 && lambda_min <= 1.0 && lambda_max >= 1.0 && lambda_max.is_finite()) || lambda_min == lambda_max {
        return Err(FitnessError::EmptyDomain);
    }
    let tol = 1e-12;
    let inside = |l: f64| l >= lambda_min * (1.0 - tol) && l <= lambda_max * (1.0 + tol);
    let axis = log_space(lambda_min, lambda_max, sampling.grid_n);
    let mut invariants = vec![[0.0, 0.0]];
    for &l1 in &axis {
        for &l2 in &axis {
            let l3 = 1.0 / (l1 * l2);
            if inside(l3) {
                let (i1, i2) = invariants_from_stretches(l1, l2, l3);
                invariants.push([i1.max(0.0), i2.max(0.0)]);
            }
        }
    }
    for mode in DeformationMode::ALL {
        let box_limit = mode.path_limit(lambda_max);
        let data_max = datasets
            .iter()
            .filter(|d| d.mode == mode)
            .map(Dataset::max_stretch)
            .fold(f64::NAN, f64::max);
        let top = if data_max.is_finite() && sampling.auto_from_data {
            sampling.data_margin * data_max
        } else {
            box_limit
        };
        if top <= 1.0 {
            continue;
        }
        let n = sampling.path_points;
        for k in 1..=n {
            let l = 1.0 + (top - 1.0) * k as f64 / n as f64;
            let (i1, i2) = path_invariants(mode, l);
            invariants.push([i1, i2]);
        }
    }
    let fiber_n = sampling.path_points.max(2);
    let mut fiber: Vec<f64> = log_space(lambda_min, lambda_max, fiber_n).iter().map(|l| l * l - 1.0).collect();
    fiber.push(0.0);
    fiber.sort_by(f64::total_cmp);
    fiber.dedup();
    Ok(SampleGrid {
        lambda_min,
        lambda_max,
        invariants,
        fiber,
    })
}

/// `(1/M)·Σ max(0, −Qⱼ)²`; `+∞` if any `Qⱼ` is non-finite, `0` for no values.
pub fn relu_penalty(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut s = 0.0;
    for &q in values {
        if !q.is_finite() {
            return f64::INFINITY;
        }
        if q < 0.0 {
            s += q * q;
        }
    }
    s / values.len() as f64
}

/// Invariant-space Hessian `[[W11, W12], [W12, W22]]` and energy at one point.
fn hessian_at(expr: &Expr, p: [f64; 2]) -> (f64, [[f64; 2]; 2]) {
    let j: Jet<2> = expr.eval_generic(&Jet::variables(p));
    let finite = j.v.is_finite() && j.g.iter().all(|g| g.is_finite());
    (if finite { j.v } else { f64::NAN }, j.h)
}

/// `(det H, tr H)`. A determinant within the round-off of its two products is
/// taken as 0, so rank-one Hessians such as that of `exp(a·Ĩ1 + b·Ĩ2)` count as PSD.
fn det_trace(h: [[f64; 2]; 2]) -> (f64, f64) {
    let (a, b) = (h[0][0] * h[1][1], h[0][1] * h[1][0]);
    let det = a - b;
    let det = if det.abs() <= 16.0 * f64::EPSILON * (a.abs() + b.abs()) { 0.0 } else { det };
    (det, h[0][0] + h[1][1])
}

/// Squared-ReLU penalty on `{det H, tr H}` at every sample (2M quantities).
pub fn hessian_penalty(expr: &Expr, samples: &SampleGrid) -> f64 {
    let mut q = Vec::with_capacity(2 * samples.len());
    for &p in &samples.invariants {
        let (w, h) = hessian_at(expr, p);
        if !w.is_finite() {
            return f64::INFINITY;
        }
        let (det, tr) = det_trace(h);
        q.push(det);
        q.push(tr);
    }
    relu_penalty(&q)
}

/// Pointwise `(det, tr)` of the invariant Hessian over the grid.
pub fn hessian_field(expr: &Expr, samples: &SampleGrid) -> Vec<(f64, f64)> {
    samples
        .invariants
        .iter()
        .map(|&p| {
            let (w, h) = hessian_at(expr, p);
            if w.is_finite() {
                det_trace(h)
            } else {
                (f64::NAN, f64::NAN)
            }
        })
        .collect()
}

/// `|W(0)|²` over `k` features.
pub fn reference_penalty(expr: &Expr, feature_count: usize) -> f64 {
    let w = expr.evaluate(&vec![0.0; feature_count]);
    if w.is_finite() {
        w * w
    } else {
        f64::INFINITY
    }
}

fn fiber_point(i4: f64) -> [f64; 3] {
    [0.0, 0.0, i4]
}

/// Fiber term must vanish in compression: `Q = −|W_f(Ĩ4)|` at every `Ĩ4 ≤ 0`.
pub fn fiber_compression_penalty(fiber: &Expr, samples: &SampleGrid) -> f64 {
    let q: Vec<f64> = samples
        .fiber
        .iter()
        .filter(|&&i4| i4 <= 0.0)
        .map(|&i4| -fiber.evaluate(&fiber_point(i4)).abs())
        .collect();
    relu_penalty(&q)
}

/// Fiber term convex in tension: `Q = ∂²W_f/∂Ĩ4²` at every `Ĩ4 > 0`.
pub fn fiber_convexity_penalty(fiber: &Expr, samples: &SampleGrid) -> f64 {
    let q: Vec<f64> = samples
        .fiber
        .iter()
        .filter(|&&i4| i4 > 0.0)
        .map(|&i4| {
            let j: Jet<3> = fiber.eval_generic(&Jet::variables(fiber_point(i4)));
            if j.v.is_finite() {
                j.h[2][2]
            } else {
                f64::NAN
            }
        })
        .collect();
    relu_penalty(&q)
}

/// Constraint weights and sampling points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub lambda_reg: f64,
    pub lambda_hessian: f64,
    pub lambda_reference: f64,
    pub lambda_fiber_compression: f64,
    pub lambda_fiber_convexity: f64,
    pub samples: SampleGrid,
}

impl PenaltyConfig {
    /// Weights are the skill's constraint weights times the variance of the
    /// training stresses; absent constraints get weight 0.
    pub fn from_skill(skill: &Skill, train: &[Dataset]) -> Result<PenaltyConfig, FitnessError> {
        let scale = stress_variance(train).max(f64::MIN_POSITIVE);
        let w = |kind, target| skill.constraint(kind, target).map_or(0.0, |c| c.weight * scale);
        Ok(PenaltyConfig {
            lambda_reg: 0.0,
            lambda_hessian: w(ConstraintKind::HessianPsd, ConstraintTarget::Energy),
            lambda_reference: w(ConstraintKind::ZeroAtReference, ConstraintTarget::Energy),
            lambda_fiber_compression: w(ConstraintKind::InactiveInCompression, ConstraintTarget::FiberTerm),
            lambda_fiber_convexity: w(ConstraintKind::HessianPsd, ConstraintTarget::FiberTerm),
            samples: build_sample_grid(train, &skill.sampling)?,
        })
    }
}

/// Population variance of all training stresses (MPa²); 1 when there are no points.
pub fn stress_variance(train: &[Dataset]) -> f64 {
    let values: Vec<f64> = train.iter().flat_map(|d| d.points.iter().map(|p| p.stress)).collect();
    if values.is_empty() {
        return 1.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    NonFiniteStress,
    NonFiniteConstraint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub mse_per_mode: BTreeMap<DeformationMode, f64>,
    pub train_mse: f64,
    pub complexity: usize,
    pub penalty_hessian: f64,
    pub penalty_reference: f64,
    #[serde(default)]
    pub penalty_fiber_compression: f64,
    #[serde(default)]
    pub penalty_fiber_convexity: f64,
    pub composite: f64,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invalid_reason: Option<InvalidReason>,
}

/// Constraint penalties alone, for skills without fitting data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintPenalties {
    pub hessian: f64,
    pub reference: f64,
    pub fiber_compression: f64,
    pub fiber_convexity: f64,
}

impl ConstraintPenalties {
    pub fn all_satisfied(&self) -> bool {
        self.hessian == 0.0 && self.reference == 0.0 && self.fiber_compression == 0.0 && self.fiber_convexity == 0.0
    }
}

/// Evaluates each constraint of `skill` on `expr` (unweighted).
///
/// For the additive template the fiber constraints apply to the `I4` part and
/// the invariant Hessian check is skipped, since it is defined for two features.
pub fn constraint_penalties(expr: &Expr, skill: &Skill, samples: &SampleGrid) -> Result<ConstraintPenalties, FitnessError> {
    skill.check_expr(expr)?;
    let has = |k, t| skill.constraint(k, t).is_some();
    let mut out = ConstraintPenalties {
        hessian: 0.0,
        reference: 0.0,
        fiber_compression: 0.0,
        fiber_convexity: 0.0,
    };
    if has(ConstraintKind::ZeroAtReference, ConstraintTarget::Energy) {
        out.reference = reference_penalty(expr, skill.feature_count);
    }
    match skill.transform_id {
        TransformId::IsoInvariants => {
            if has(ConstraintKind::HessianPsd, ConstraintTarget::Energy) {
                out.hessian = hessian_penalty(expr, samples);
            }
        }
        TransformId::AnisoInvariants => {
            let (_, fiber) = split_additive(expr)?;
            if has(ConstraintKind::InactiveInCompression, ConstraintTarget::FiberTerm) {
                out.fiber_compression = fiber_compression_penalty(&fiber, samples);
            }
            if has(ConstraintKind::HessianPsd, ConstraintTarget::FiberTerm) {
                out.fiber_convexity = fiber_convexity_penalty(&fiber, samples);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
struct TrainPoint {
    inv: [f64; 2],
    factors: [f64; 2],
    stress: f64,
    mode: DeformationMode,
}

/// Precomputed training points, weights and grid for repeated evaluation.
#[derive(Clone, Debug)]
pub struct FitnessContext {
    skill: Skill,
    config: PenaltyConfig,
    points: Vec<TrainPoint>,
}

impl FitnessContext {
    pub fn new(skill: Skill, train: &[Dataset], config: PenaltyConfig) -> Result<FitnessContext, FitnessError> {
        if skill.transform_id != TransformId::IsoInvariants {
            return Err(FitnessError::UnsupportedTransform(skill.name.clone()));
        }
        let points = train
            .iter()
            .flat_map(|d| {
                d.points.iter().map(move |p| {
                    let (i1, i2) = path_invariants(d.mode, p.stretch);
                    TrainPoint {
                        inv: [i1, i2],
                        factors: stress_factors(d.mode, p.stretch),
                        stress: p.stress,
                        mode: d.mode,
                    }
                })
            })
            .collect();
        Ok(FitnessContext { skill, config, points })
    }

    /// Context with the skill's default weights and grid.
    pub fn from_skill(skill: &Skill, train: &[Dataset]) -> Result<FitnessContext, FitnessError> {
        let config = PenaltyConfig::from_skill(skill, train)?;
        FitnessContext::new(skill.clone(), train, config)
    }

    pub fn skill(&self) -> &Skill {
        &self.skill
    }

    pub fn config(&self) -> &PenaltyConfig {
        &self.config
    }

    pub fn samples(&self) -> &SampleGrid {
        &self.config.samples
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    /// `(invariants, stress factors, measured stress)` per training point.
    pub(crate) fn train_points(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2], f64)> + '_ {
        self.points.iter().map(|p| (p.inv, p.factors, p.stress))
    }

    /// Model stress at each training point, in input order.
    pub fn predictions(&self, expr: &Expr) -> Vec<f64> {
        self.points.iter().map(|p| predict(expr, p)).collect()
    }

    /// Full report. The whitelist is checked.
    pub fn evaluate(&self, expr: &Expr) -> Result<FitnessReport, FitnessError> {
        self.skill.check_expr(expr)?;
        Ok(self.evaluate_unchecked(expr))
    }

    /// Report without the whitelist check (for candidates the search built under the skill).
    pub fn evaluate_unchecked(&self, expr: &Expr) -> FitnessReport {
        let complexity = expr.complexity();
        let mut per_mode: BTreeMap<DeformationMode, (f64, usize)> = BTreeMap::new();
        let mut total = 0.0;
        let mut stress_ok = true;
        for p in &self.points {
            let r = predict(expr, p) - p.stress;
            if !r.is_finite() {
                stress_ok = false;
                break;
            }
            let e = per_mode.entry(p.mode).or_default();
            e.0 += r * r;
            e.1 += 1;
            total += r * r;
        }
        let invalid = |reason, per_mode: BTreeMap<DeformationMode, f64>| FitnessReport {
            mse_per_mode: per_mode,
            train_mse: f64::INFINITY,
            complexity,
            penalty_hessian: f64::INFINITY,
            penalty_reference: f64::INFINITY,
            penalty_fiber_compression: 0.0,
            penalty_fiber_convexity: 0.0,
            composite: f64::INFINITY,
            valid: false,
            invalid_reason: Some(reason),
        };
        if !stress_ok {
            return invalid(InvalidReason::NonFiniteStress, BTreeMap::new());
        }
        let mse_per_mode: BTreeMap<_, _> = per_mode.into_iter().map(|(m, (s, n))| (m, s / n as f64)).collect();
        let train_mse = total / self.points.len().max(1) as f64;
        let c = &self.config;
        let penalty_hessian = if c.lambda_hessian > 0.0 { hessian_penalty(expr, &c.samples) } else { 0.0 };
        let penalty_reference = if c.lambda_reference > 0.0 { reference_penalty(expr, 2) } else { 0.0 };
        if !penalty_hessian.is_finite() || !penalty_reference.is_finite() {
            let mut r = invalid(InvalidReason::NonFiniteConstraint, mse_per_mode);
            r.train_mse = train_mse;
            return r;
        }
        let composite = train_mse
            + c.lambda_reg * complexity as f64
            + c.lambda_hessian * penalty_hessian
            + c.lambda_reference * penalty_reference;
        FitnessReport {
            mse_per_mode,
            train_mse,
            complexity,
            penalty_hessian,
            penalty_reference,
            penalty_fiber_compression: 0.0,
            penalty_fiber_convexity: 0.0,
            valid: composite.is_finite(),
            invalid_reason: (!composite.is_finite()).then_some(InvalidReason::NonFiniteConstraint),
            composite: if composite.is_finite() { composite } else { f64::INFINITY },
        }
    }

    /// Mean squared stress error on other datasets (e.g. a holdout mode).
    pub fn mse_on(&self, expr: &Expr, data: &[Dataset]) -> f64 {
        mse_on(expr, data)
    }
}

fn predict(expr: &Expr, p: &TrainPoint) -> f64 {
    let j: Jet<2> = expr.eval_generic(&Jet::variables(p.inv));
    if !j.v.is_finite() {
        return f64::NAN;
    }
    p.factors[0] * j.g[0] + p.factors[1] * j.g[1]
}

/// Mean squared stress error of an invariant-space energy over datasets; `+∞` if any prediction is non-finite.
pub fn mse_on(expr: &Expr, data: &[Dataset]) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for d in data {
        for q in &d.points {
            let (i1, i2) = path_invariants(d.mode, q.stretch);
            let p = TrainPoint {
                inv: [i1, i2],
                factors: stress_factors(d.mode, q.stretch),
                stress: q.stress,
                mode: d.mode,
            };
            let r = predict(expr, &p) - q.stress;
            if !r.is_finite() {
                return f64::INFINITY;
            }
            s += r * r;
            n += 1;
        }
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// One-shot evaluation with an explicit configuration.
pub fn evaluate_fitness(expr: &Expr, train: &[Dataset], config: &PenaltyConfig, skill: &Skill) -> Result<FitnessReport, FitnessError> {
    FitnessContext::new(skill.clone(), train, config.clone())?.evaluate(expr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;
    use crate::expr::parse;
    use crate::mechanics::MaterialModel;
    use crate::skills::{builtin_anisotropic, builtin_isotropic};

    fn ut(max: f64) -> Dataset {
        let grid: Vec<f64> = (0..10).map(|i| 1.0 + (max - 1.0) * i as f64 / 9.0).collect();
        synth_generate(&MaterialModel::NeoHookean { c1: 0.2 }, DeformationMode::UT, &grid, 0.0, 0).unwrap()
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu_penalty(&[0.0, 1.0, 3.0]), 0.0);
        assert_eq!(relu_penalty(&[-1.0, 1.0]), 0.5);
        assert_eq!(relu_penalty(&[1.0, f64::NAN]), f64::INFINITY);
    }

    #[test]
    fn grid_from_data() {
        let g = build_sample_grid(&[ut(7.6)], &builtin_isotropic().sampling).unwrap();
        assert!((g.lambda_max - 8.36).abs() < 1e-12);
        assert!(g.invariants.contains(&[0.0, 0.0]));
        let max = g.max_i1();
        assert!(max < 70.0 && max > 60.0, "{max}");
        assert!(g.len() >= 64);
        assert!(g.invariants.iter().all(|p| p[0] >= 0.0 && p[1] >= 0.0));
    }

    #[test]
    fn grid_needs_data_when_auto() {
        assert!(matches!(build_sample_grid(&[], &builtin_isotropic().sampling), Err(FitnessError::NoData)));
    }

    #[test]
    fn concave_quadratic_penalty() {
        let g = build_sample_grid(&[ut(3.0)], &builtin_isotropic().sampling).unwrap();
        let w = parse("-(I1*I1)").unwrap();
        // H = [[-2, 0], [0, 0]]: det = 0, tr = -2 at every sample.
        assert_eq!(hessian_penalty(&w, &g), 4.0 / 2.0);
    }

    #[test]
    fn zero_energy_report() {
        let data = [ut(4.0)];
        let ctx = FitnessContext::from_skill(&builtin_isotropic(), &data).unwrap();
        let r = ctx.evaluate(&Expr::constant(0.0)).unwrap();
        let expected = data[0].points.iter().map(|p| p.stress * p.stress).sum::<f64>() / 10.0;
        assert!((r.train_mse - expected).abs() < 1e-15);
        assert_eq!((r.penalty_hessian, r.penalty_reference), (0.0, 0.0));
        assert!(r.valid);
    }

    #[test]
    fn non_finite_is_invalid() {
        let ctx = FitnessContext::from_skill(&builtin_isotropic(), &[ut(4.0)]).unwrap();
        let r = ctx.evaluate(&parse("(I1 - 1)^0.5").unwrap()).unwrap();
        assert!(!r.valid);
        assert_eq!(r.composite, f64::INFINITY);
        assert!(ctx.evaluate(&parse("sqrt(I1)").unwrap()).is_err());
    }

    #[test]
    fn fiber_constraints() {
        let s = builtin_anisotropic();
        let g = build_sample_grid(&[], &s.sampling).unwrap();
        let quad = s.parse_expr("2*I4^2").unwrap();
        assert!(fiber_compression_penalty(&quad, &g) > 0.0);
        let hgo = s.parse_expr("0.1*I1 + (1/(2*0.8))*(exp(0.8*relu(I4)^2) - 1)").unwrap();
        assert!(constraint_penalties(&hgo, &s, &g).unwrap().all_satisfied());
    }
}
