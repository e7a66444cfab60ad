//! Stress-stretch datasets: CSV ingestion, validation, splitting and synthesis.
//!
//! One file holds one deformation mode:
//!
//! ```text
//! # mode: UT
//! # unit: kg/cm2
//! # source: free text
//! lambda,stress_mpa
//! 1.00,0.0
//! 1.12,1.37
//! ```
//!
//! `# unit:` accepts `MPa` (default) and `kg/cm2`; values are stored in MPa.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanics::{locking_stretch, DeformationMode, MaterialModel, StressPoint};

/// 1 kg/cm² in MPa.
pub const KGF_PER_CM2_IN_MPA: f64 = 0.0980665;

/// Minimum number of points in a dataset.
pub const MIN_POINTS: usize = 4;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("missing `# mode:` directive")]
    MissingModeDirective,
    #[error("unknown unit `{0}` (expected MPa or kg/cm2)")]
    UnknownUnit(String),
    #[error("line {line}: stretch {stretch} is below the reference state 1")]
    BelowReference { line: u64, stretch: f64 },
    #[error("line {line}: stretch {stretch} does not increase")]
    NonMonotonic { line: u64, stretch: f64 },
    #[error("line {line}: negative or non-finite stress {stress}")]
    BadStress { line: u64, stress: f64 },
    #[error("{0} points, at least {MIN_POINTS} required")]
    TooFewPoints(usize),
    #[error("no {0} dataset; training needs both UT and ET")]
    MissingMode(DeformationMode),
    #[error("model is singular at stretch {0} in the requested grid")]
    Singular(f64),
    #[error("no datasets found in {0}")]
    EmptyDirectory(PathBuf),
}

/// Observations for one deformation mode, stresses in MPa.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub mode: DeformationMode,
    pub points: Vec<StressPoint>,
    pub source: String,
}

impl Dataset {
    /// Validates tension data: `λ ≥ 1` strictly increasing, `P ≥ 0`, enough points.
    pub fn new(mode: DeformationMode, points: Vec<StressPoint>, source: impl Into<String>) -> Result<Dataset, DataError> {
        let d = Dataset {
            mode,
            points,
            source: source.into(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let mut prev: Option<f64> = None;
        for (i, p) in self.points.iter().enumerate() {
            let line = i as u64 + 1;
            if !(p.stretch >= 1.0) || !p.stretch.is_finite() {
                return Err(DataError::BelowReference { line, stretch: p.stretch });
            }
            if prev.is_some_and(|q| p.stretch <= q) {
                return Err(DataError::NonMonotonic { line, stretch: p.stretch });
            }
            if !(p.stress >= 0.0) || !p.stress.is_finite() {
                return Err(DataError::BadStress { line, stress: p.stress });
            }
            prev = Some(p.stretch);
        }
        if self.points.len() < MIN_POINTS {
            return Err(DataError::TooFewPoints(self.points.len()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_stretch(&self) -> f64 {
        self.points.iter().map(|p| p.stretch).fold(f64::NAN, f64::max)
    }

    /// Serializes in the ingestion format with MPa values.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# mode: {}\n# unit: MPa\n", self.mode);
        if !self.source.is_empty() {
            let _ = writeln!(out, "# source: {}", self.source);
        }
        out.push_str("lambda,stress_mpa\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{}", p.stretch, p.stress);
        }
        out
    }
}

/// Parses the CSV text of one dataset.
pub fn parse_csv(text: &str) -> Result<Dataset, DataError> {
    let mut mode = None;
    let mut scale = 1.0;
    let mut sources = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let Some(directive) = line.trim_start().strip_prefix('#') else {
            continue;
        };
        let Some((key, value)) = directive.split_once(':') else {
            continue;
        };
        let value = value.trim();
        match key.trim().to_ascii_lowercase().as_str() {
            "mode" => {
                mode = Some(value.parse::<DeformationMode>().map_err(|e| DataError::Malformed {
                    line: i as u64 + 1,
                    reason: e.to_string(),
                })?)
            }
            "unit" => {
                scale = match value.to_ascii_lowercase().replace('²', "2").replace(' ', "").as_str() {
                    "mpa" => 1.0,
                    "kg/cm2" | "kgf/cm2" => KGF_PER_CM2_IN_MPA,
                    _ => return Err(DataError::UnknownUnit(value.to_string())),
                }
            }
            "source" => sources.push(value.to_string()),
            _ => {}
        }
    }
    let mode = mode.ok_or(DataError::MissingModeDirective)?;

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header_ok = reader
        .headers()
        .map(|h| h.len() == 2 && h[0].eq_ignore_ascii_case("lambda") && h[1].to_ascii_lowercase().starts_with("stress"))
        .unwrap_or(false);
    if !header_ok {
        return Err(DataError::Malformed {
            line: 1,
            reason: "expected header `lambda,stress_mpa`".into(),
        });
    }
    let mut points = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |k: usize| -> Result<f64, DataError> {
            record
                .get(k)
                .ok_or_else(|| DataError::Malformed {
                    line,
                    reason: "expected two columns".into(),
                })?
                .parse::<f64>()
                .map_err(|e| DataError::Malformed {
                    line,
                    reason: e.to_string(),
                })
        };
        points.push(StressPoint {
            stretch: field(0)?,
            stress: field(1)? * scale,
        });
        lines.push(line);
    }
    let d = Dataset {
        mode,
        points,
        source: sources.join("; "),
    };
    // Report validation failures with file line numbers.
    d.validate().map_err(|e| match e {
        DataError::BelowReference { line, stretch } => DataError::BelowReference {
            line: lines[line as usize - 1],
            stretch,
        },
        DataError::NonMonotonic { line, stretch } => DataError::NonMonotonic {
            line: lines[line as usize - 1],
            stretch,
        },
        DataError::BadStress { line, stress } => DataError::BadStress {
            line: lines[line as usize - 1],
            stress,
        },
        other => other,
    })?;
    Ok(d)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text)
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    std::fs::write(path, dataset.to_csv()).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads every `*.csv` in a directory, in file-name order.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<Dataset>, DataError> {
    let dir = dir.as_ref();
    let io = |source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(DataError::EmptyDirectory(dir.to_path_buf()));
    }
    files.iter().map(load_csv).collect()
}

/// Training and holdout datasets with disjoint modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<Dataset>,
    pub holdout: Vec<Dataset>,
}

/// Trains on UT and ET, holds out PS.
pub fn default_split(datasets: &[Dataset]) -> Result<Split, DataError> {
    for mode in [DeformationMode::UT, DeformationMode::ET] {
        if !datasets.iter().any(|d| d.mode == mode) {
            return Err(DataError::MissingMode(mode));
        }
    }
    let (holdout, train): (Vec<_>, Vec<_>) = datasets.iter().cloned().partition(|d| d.mode == DeformationMode::PS);
    if holdout.is_empty() {
        log::warn!("no PS dataset: holdout is empty");
    }
    Ok(Split { train, holdout })
}

/// Evaluates a model on a stretch grid, optionally adding seeded Gaussian noise (MPa).
pub fn synth_generate(
    model: &MaterialModel,
    mode: DeformationMode,
    stretches: &[f64],
    noise_std: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    if let Some(limit) = locking_stretch(model, mode) {
        if let Some(&l) = stretches.iter().find(|&&l| l >= limit) {
            return Err(DataError::Singular(l));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std.abs()).expect("finite noise level");
    let mut points = Vec::with_capacity(stretches.len());
    for &l in stretches {
        let p = crate::mechanics::nominal_stress(model, mode, l).map_err(|_| DataError::Singular(l))?;
        let eps = if noise_std == 0.0 { 0.0 } else { noise.sample(&mut rng) };
        points.push(StressPoint { stretch: l, stress: p + eps });
    }
    Ok(Dataset {
        mode,
        points,
        source: format!("synthetic {} (noise {noise_std} MPa, seed {seed})", model.name()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    const SAMPLE: &str = "# mode: UT\n# unit: kg/cm2\n# source: test\nlambda,stress_mpa\n1.0,0\n1.5,10.0\n2.0,12\n3.0,20\n";

    #[test]
    fn converts_units() {
        let d = parse_csv(SAMPLE).unwrap();
        assert_eq!(d.mode, DeformationMode::UT);
        assert_eq!(d.points[1].stress, 10.0 * KGF_PER_CM2_IN_MPA);
        assert!((d.points[1].stress - 0.980665).abs() < 1e-12 * 0.980665);
    }

    #[test]
    fn round_trip_is_value_identical() {
        let d = parse_csv(SAMPLE).unwrap();
        assert_eq!(parse_csv(&d.to_csv()).unwrap(), d);
    }

    #[test]
    fn rejects_compressive_row() {
        let text = "# mode: UT\nlambda,stress_mpa\n1.0,0\n0.5,1.0\n2,1\n3,2\n";
        match parse_csv(text) {
            Err(DataError::BelowReference { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_unit_and_bad_rows() {
        assert!(matches!(parse_csv("# mode: UT\n# unit: psi\nlambda,stress_mpa\n"), Err(DataError::UnknownUnit(_))));
        assert!(matches!(
            parse_csv("# mode: UT\nlambda,stress_mpa\n1,0\n1.1,x\n"),
            Err(DataError::Malformed { line: 4, .. })
        ));
        assert!(matches!(parse_csv("lambda,stress_mpa\n1,0\n"), Err(DataError::MissingModeDirective)));
        assert!(matches!(
            parse_csv("# mode: ET\nlambda,stress_mpa\n1,0\n1.1,1\n"),
            Err(DataError::TooFewPoints(2))
        ));
    }

    fn ds(mode: DeformationMode) -> Dataset {
        synth_generate(&MaterialModel::NeoHookean { c1: 0.2 }, mode, &[1.0, 2.0, 3.0, 4.0], 0.0, 0).unwrap()
    }

    #[test]
    fn split_rules() {
        let s = default_split(&[ds(DeformationMode::UT), ds(DeformationMode::ET), ds(DeformationMode::PS)]).unwrap();
        assert_eq!(s.train.iter().map(|d| d.mode).collect::<Vec<_>>(), [DeformationMode::UT, DeformationMode::ET]);
        assert_eq!(s.holdout[0].mode, DeformationMode::PS);
        let s = default_split(&[ds(DeformationMode::UT), ds(DeformationMode::ET)]).unwrap();
        assert!(s.holdout.is_empty());
        assert!(matches!(default_split(&[ds(DeformationMode::UT)]), Err(DataError::MissingMode(DeformationMode::ET))));
    }

    #[test]
    fn synth_is_exact_and_seeded() {
        let m = MaterialModel::MooneyRivlin { c10: 0.2, c01: 0.05 };
        let grid: Vec<f64> = (1..=7).map(f64::from).collect();
        let d = synth_generate(&m, DeformationMode::UT, &grid, 0.0, 3).unwrap();
        for p in &d.points {
            let l = p.stretch;
            let exact = 2.0 * (l - l.powi(-2)) * (0.2 + 0.05 / l);
            assert!((p.stress - exact).abs() < 1e-14 * (1.0 + exact));
        }
        let a = synth_generate(&m, DeformationMode::UT, &grid, 0.01, 9).unwrap();
        let b = synth_generate(&m, DeformationMode::UT, &grid, 0.01, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, d);
    }

    #[test]
    fn synth_detects_singularity() {
        let locking_law = MaterialModel::symbolic(parse("0.031*(3.75*I1 + I2) + I1/(77.9 - 1.05*I1)").unwrap());
        let grid = [1.0, 4.0, 8.0, 9.0];
        assert!(matches!(synth_generate(&locking_law, DeformationMode::UT, &grid, 0.0, 0), Err(DataError::Singular(l)) if l == 9.0));
    }
}
