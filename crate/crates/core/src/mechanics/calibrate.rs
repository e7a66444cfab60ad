use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{path_invariants, stress_factors, DeformationMode, MaterialModel};
use crate::data::Dataset;
use crate::lsq::{levenberg_marquardt, LeastSquares, LmOptions};

/// Classical closed-form models that can be fitted by [`calibrate_baseline`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    NeoHookean,
    MooneyRivlin,
    Yeoh3,
    Ogden3,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::NeoHookean,
        BaselineKind::MooneyRivlin,
        BaselineKind::Yeoh3,
        BaselineKind::Ogden3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::NeoHookean => "neo-hookean",
            BaselineKind::MooneyRivlin => "mooney-rivlin",
            BaselineKind::Yeoh3 => "yeoh3",
            BaselineKind::Ogden3 => "ogden3",
        }
    }

    pub fn parameter_count(self) -> usize {
        match self {
            BaselineKind::NeoHookean => 1,
            BaselineKind::MooneyRivlin => 2,
            BaselineKind::Yeoh3 => 3,
            BaselineKind::Ogden3 => 6,
        }
    }

    /// Builds a model from a flat parameter vector. Ogden takes `μ1..3, α1..3`.
    pub fn model(self, p: &[f64]) -> Option<MaterialModel> {
        if p.len() != self.parameter_count() {
            return None;
        }
        Some(match self {
            BaselineKind::NeoHookean => MaterialModel::NeoHookean { c1: p[0] },
            BaselineKind::MooneyRivlin => MaterialModel::MooneyRivlin { c10: p[0], c01: p[1] },
            BaselineKind::Yeoh3 => MaterialModel::Yeoh3 {
                c10: p[0],
                c20: p[1],
                c30: p[2],
            },
            BaselineKind::Ogden3 => MaterialModel::Ogden3 {
                mu: [p[0], p[1], p[2]],
                alpha: [p[3], p[4], p[5]],
            },
        })
    }

    /// Inverse of [`model`](Self::model).
    pub fn parameters(model: &MaterialModel) -> Option<(BaselineKind, Vec<f64>)> {
        Some(match *model {
            MaterialModel::NeoHookean { c1 } => (BaselineKind::NeoHookean, vec![c1]),
            MaterialModel::MooneyRivlin { c10, c01 } => (BaselineKind::MooneyRivlin, vec![c10, c01]),
            MaterialModel::Yeoh3 { c10, c20, c30 } => (BaselineKind::Yeoh3, vec![c10, c20, c30]),
            MaterialModel::Ogden3 { mu, alpha } => (BaselineKind::Ogden3, mu.iter().chain(&alpha).copied().collect()),
            MaterialModel::Symbolic { .. } => return None,
        })
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "neohookean" | "nh" => Ok(BaselineKind::NeoHookean),
            "mooneyrivlin" | "mr" => Ok(BaselineKind::MooneyRivlin),
            "yeoh3" | "yeoh" => Ok(BaselineKind::Yeoh3),
            "ogden3" | "ogden" => Ok(BaselineKind::Ogden3),
            _ => Err(format!(
                "unknown baseline `{s}` (expected neo-hookean, mooney-rivlin, yeoh3 or ogden3)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationOptions {
    /// Number of seeded starting points (in addition to a supplied initial guess).
    pub restarts: usize,
    pub seed: u64,
    pub lm: LmOptions,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            restarts: 16,
            seed: 0,
            lm: LmOptions {
                max_iters: 500,
                ..LmOptions::default()
            },
        }
    }
}

/// A fitted baseline and its misfit on the training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub model: MaterialModel,
    pub parameters: Vec<f64>,
    /// Mean squared nominal-stress residual over all training points (MPa²).
    pub mse: f64,
    pub mse_per_mode: BTreeMap<DeformationMode, f64>,
    pub converged: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("no training points")]
    EmptyTrain,
    #[error("initial guess has {got} parameters, {kind} needs {expected}")]
    InitialLength {
        kind: BaselineKind,
        got: usize,
        expected: usize,
    },
    #[error("least squares did not converge from any start (best mse {:.6})", best.as_ref().map_or(f64::NAN, |b| b.mse))]
    NotConverged { best: Option<Box<Calibration>> },
}

struct Problem {
    kind: BaselineKind,
    points: Vec<(DeformationMode, f64, f64)>,
}

fn lateral_exponent(mode: DeformationMode, a: f64) -> (f64, f64) {
    match mode {
        DeformationMode::UT => (-a / 2.0 - 1.0, -0.5),
        DeformationMode::ET => (-2.0 * a - 1.0, -2.0),
        DeformationMode::PS => (-a - 1.0, -1.0),
    }
}

impl Problem {
    fn row(&self, p: &[f64], mode: DeformationMode, l: f64, jac: Option<&mut [f64]>) -> f64 {
        match self.kind {
            BaselineKind::Ogden3 => {
                let ln = l.ln();
                let mut s = 0.0;
                let mut jac = jac;
                for i in 0..3 {
                    let (mu, a) = (p[i], p[i + 3]);
                    let (e, de) = lateral_exponent(mode, a);
                    let u = l.powf(a - 1.0);
                    let v = l.powf(e);
                    s += mu * (u - v);
                    if let Some(j) = jac.as_deref_mut() {
                        j[i] = u - v;
                        j[i + 3] = mu * (u * ln - v * ln * de);
                    }
                }
                s
            }
            _ => {
                let (i1, _) = path_invariants(mode, l);
                let [a, b] = stress_factors(mode, l);
                let basis: &[f64] = match self.kind {
                    BaselineKind::NeoHookean => &[a],
                    BaselineKind::MooneyRivlin => &[a, b],
                    _ => &[a, 2.0 * a * i1, 3.0 * a * i1 * i1],
                };
                if let Some(j) = jac {
                    j.copy_from_slice(basis);
                }
                basis.iter().zip(p).map(|(x, c)| x * c).sum()
            }
        }
    }
}

impl LeastSquares for Problem {
    fn residuals(&self, p: &[f64]) -> Option<DVector<f64>> {
        Some(DVector::from_iterator(
            self.points.len(),
            self.points.iter().map(|&(m, l, obs)| self.row(p, m, l, None) - obs),
        ))
    }

    fn jacobian(&self, p: &[f64]) -> Option<DMatrix<f64>> {
        let n = p.len();
        let mut j = DMatrix::zeros(self.points.len(), n);
        let mut buf = vec![0.0; n];
        for (r, &(m, l, _)) in self.points.iter().enumerate() {
            self.row(p, m, l, Some(&mut buf));
            for c in 0..n {
                j[(r, c)] = buf[c];
            }
        }
        Some(j)
    }
}

fn starting_points(kind: BaselineKind, initial: Option<&[f64]>, opts: &CalibrationOptions) -> Vec<Vec<f64>> {
    let mut starts: Vec<Vec<f64>> = initial.map(|p| vec![p.to_vec()]).unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts.max(1) {
        let p = match kind {
            BaselineKind::Ogden3 => {
                let mut p = vec![0.0; 6];
                for i in 0..3 {
                    let mag = rng.random_range(0.01..1.0);
                    p[i] = if rng.random_bool(0.5) { mag } else { -mag };
                    p[i + 3] = rng.random_range(-5.0..8.0);
                }
                p
            }
            _ => (0..kind.parameter_count()).map(|_| rng.random_range(0.01..1.0)).collect(),
        };
        starts.push(p);
    }
    starts
}

/// Multi-start least-squares fit of a baseline to nominal stresses, equal weight per point.
pub fn calibrate_baseline(
    kind: BaselineKind,
    train: &[Dataset],
    initial: Option<&[f64]>,
    opts: &CalibrationOptions,
) -> Result<Calibration, CalibrationError> {
    let points: Vec<_> = train
        .iter()
        .flat_map(|d| d.points.iter().map(move |p| (d.mode, p.stretch, p.stress)))
        .collect();
    if points.is_empty() {
        return Err(CalibrationError::EmptyTrain);
    }
    if let Some(p) = initial {
        if p.len() != kind.parameter_count() {
            return Err(CalibrationError::InitialLength {
                kind,
                got: p.len(),
                expected: kind.parameter_count(),
            });
        }
    }
    let problem = Problem {
        kind,
        points,
    };
    let starts = starting_points(kind, initial, opts);
    let results: Vec<_> = starts
        .par_iter()
        .map(|s| levenberg_marquardt(&problem, s, &opts.lm))
        .collect();
    // Lowest SSE wins; earlier starts win ties.
    let best = results
        .into_iter()
        .flatten()
        .filter(|r| r.sse.is_finite())
        .enumerate()
        .min_by(|(i, a), (j, b)| a.sse.total_cmp(&b.sse).then(i.cmp(j)))
        .map(|(_, r)| r);
    let Some(best) = best else {
        return Err(CalibrationError::NotConverged { best: None });
    };
    let model = kind.model(&best.params).expect("parameter count");
    let calibration = Calibration {
        mse_per_mode: mse_per_mode(&model, train),
        mse: best.sse / problem.points.len() as f64,
        parameters: best.params,
        model,
        converged: best.converged,
    };
    if calibration.converged {
        Ok(calibration)
    } else {
        Err(CalibrationError::NotConverged {
            best: Some(Box::new(calibration)),
        })
    }
}

/// Mean squared stress residual per mode (MPa²). Non-finite predictions give `+∞`.
pub fn mse_per_mode(model: &MaterialModel, data: &[Dataset]) -> BTreeMap<DeformationMode, f64> {
    let mut acc: BTreeMap<DeformationMode, (f64, usize)> = BTreeMap::new();
    for d in data {
        let e = acc.entry(d.mode).or_default();
        for p in &d.points {
            let r = model.stress_unchecked(d.mode, p.stretch) - p.stress;
            e.0 += if r.is_finite() { r * r } else { f64::INFINITY };
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(m, (s, n))| (m, s / n.max(1) as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;

    fn mr_data() -> Vec<Dataset> {
        let m = MaterialModel::MooneyRivlin { c10: 0.2, c01: 0.05 };
        let grid: Vec<f64> = (0..12).map(|i| 1.0 + 0.5 * i as f64).collect();
        [DeformationMode::UT, DeformationMode::ET]
            .iter()
            .map(|&mode| synth_generate(&m, mode, &grid, 0.0, 1).unwrap())
            .collect()
    }

    #[test]
    fn recovers_mooney_rivlin() {
        let cal = calibrate_baseline(BaselineKind::MooneyRivlin, &mr_data(), None, &CalibrationOptions::default()).unwrap();
        assert!((cal.parameters[0] - 0.2).abs() < 1e-9);
        assert!((cal.parameters[1] - 0.05).abs() < 1e-9);
        assert!(cal.mse < 1e-20);
    }

    #[test]
    fn ogden_jacobian_matches_finite_differences() {
        let problem = Problem {
            kind: BaselineKind::Ogden3,
            points: vec![
                (DeformationMode::UT, 2.5, 0.0),
                (DeformationMode::ET, 1.7, 0.0),
                (DeformationMode::PS, 3.1, 0.0),
            ],
            };
        let p = [0.4, -0.02, 0.003, 1.6, -3.0, 5.0];
        let j = problem.jacobian(&p).unwrap();
        let h = 1e-6;
        for c in 0..6 {
            let mut a = p;
            let mut b = p;
            a[c] += h;
            b[c] -= h;
            let fd = (problem.residuals(&a).unwrap() - problem.residuals(&b).unwrap()) / (2.0 * h);
            for r in 0..3 {
                assert!((j[(r, c)] - fd[r]).abs() < 1e-6 * (1.0 + fd[r].abs()), "{r} {c}");
            }
        }
    }

    #[test]
    fn deterministic() {
        let opts = CalibrationOptions {
            restarts: 4,
            ..CalibrationOptions::default()
        };
        let a = calibrate_baseline(BaselineKind::Ogden3, &mr_data(), None, &opts);
        let b = calibrate_baseline(BaselineKind::Ogden3, &mr_data(), None, &opts);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_train_is_an_error() {
        assert_eq!(
            calibrate_baseline(BaselineKind::Yeoh3, &[], None, &CalibrationOptions::default()),
            Err(CalibrationError::EmptyTrain)
        );
    }

    #[test]
    fn kind_names_parse() {
        for k in BaselineKind::ALL {
            assert_eq!(k.as_str().parse::<BaselineKind>().unwrap(), k);
        }
        assert!("gent".parse::<BaselineKind>().is_err());
    }
}
