use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use hyperlaw::data::{default_split, Split};
use hyperlaw::mechanics::{calibrate_baseline, mse_per_mode, BaselineKind, Calibration, CalibrationError, CalibrationOptions, DeformationMode};
use serde::Serialize;

use crate::common::{load_data, parse_list};
use crate::manifest::{ArtifactDir, RunManifest};
use crate::plots::{fit_chart, stiffness_chart, stiffness_summary, StiffnessSummary};
use crate::EXIT_ERROR;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    NeoHookean,
    MooneyRivlin,
    Yeoh3,
    Ogden3,
}

impl From<Baseline> for BaselineKind {
    fn from(b: Baseline) -> BaselineKind {
        match b {
            Baseline::NeoHookean => BaselineKind::NeoHookean,
            Baseline::MooneyRivlin => BaselineKind::MooneyRivlin,
            Baseline::Yeoh3 => BaselineKind::Yeoh3,
            Baseline::Ogden3 => BaselineKind::Ogden3,
        }
    }
}

/// Parameter names in the order of the flat parameter vector.
pub fn parameter_names(kind: BaselineKind) -> &'static [&'static str] {
    match kind {
        BaselineKind::NeoHookean => &["c1"],
        BaselineKind::MooneyRivlin => &["c10", "c01"],
        BaselineKind::Yeoh3 => &["c10", "c20", "c30"],
        BaselineKind::Ogden3 => &["mu1", "mu2", "mu3", "alpha1", "alpha2", "alpha3"],
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(value_enum)]
    pub kind: Baseline,
    /// Directory of mode-tagged CSV datasets; UT and ET train, PS is held out.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for the random starting points.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of random starting points.
    #[arg(long, default_value_t = 16)]
    pub restarts: usize,
    /// Comma-separated initial parameters, tried in addition to the random starts.
    #[arg(long, allow_hyphen_values = true)]
    pub initial: Option<String>,
    #[arg(long)]
    pub reproducible: bool,
}

#[derive(Debug, Serialize)]
pub struct CalibrationOutput {
    pub kind: BaselineKind,
    pub parameters: BTreeMap<String, f64>,
    pub parameter_vector: Vec<f64>,
    pub converged: bool,
    pub train_mse: f64,
    pub train_mse_per_mode: BTreeMap<DeformationMode, f64>,
    pub holdout_mse_per_mode: BTreeMap<DeformationMode, f64>,
    pub stiffness: Option<StiffnessSummary>,
}

fn output(kind: BaselineKind, c: &Calibration, split: &Split) -> CalibrationOutput {
    CalibrationOutput {
        kind,
        parameters: parameter_names(kind).iter().map(|n| n.to_string()).zip(c.parameters.iter().copied()).collect(),
        parameter_vector: c.parameters.clone(),
        converged: c.converged,
        train_mse: c.mse,
        train_mse_per_mode: c.mse_per_mode.clone(),
        holdout_mse_per_mode: mse_per_mode(&c.model, &split.holdout),
        stiffness: stiffness_summary(&c.model),
    }
}

pub fn run(args: &CalibrateArgs) -> Result<u8> {
    let kind = BaselineKind::from(args.kind);
    let data = load_data(&args.data)?;
    let split = default_split(&data.datasets).context("splitting datasets")?;
    let initial = args.initial.as_deref().map(parse_list).transpose()?;
    let opts = CalibrationOptions {
        restarts: args.restarts,
        seed: args.seed,
        ..CalibrationOptions::default()
    };
    let (calibration, code) = match calibrate_baseline(kind, &split.train, initial.as_deref(), &opts) {
        Ok(c) => (c, 0),
        Err(CalibrationError::NotConverged { best: Some(best) }) => {
            eprintln!("error: {} did not converge; writing the best parameters found", kind.as_str());
            (*best, EXIT_ERROR)
        }
        Err(e) => return Err(e).context(format!("calibrating {}", kind.as_str())),
    };
    let config = serde_json::json!({
        "kind": kind,
        "seed": args.seed,
        "restarts": args.restarts,
        "initial": initial,
    });
    let mut manifest = RunManifest::new("calibrate", config, args.reproducible);
    manifest.datasets = data.hashes;
    manifest.rng_seed = Some(args.seed);
    let mut out = ArtifactDir::create(&args.out, manifest, args.reproducible)?;
    let ts = out.timestamp();
    let result = output(kind, &calibration, &split);
    out.write_json("calibration.json", &result)?;
    let title = format!("{} fit", kind.as_str());
    out.write("plots/fit.svg", fit_chart(&title, &calibration.model, &split.train, &split.holdout).to_svg(ts))?;
    if let Some(s) = &result.stiffness {
        out.write("plots/stiffness.svg", stiffness_chart(&calibration.model, s).to_svg(ts))?;
    }
    let dir = out.finish()?;
    println!("{}: train MSE {:.4e}", kind.as_str(), result.train_mse);
    for (m, v) in result.train_mse_per_mode.iter().chain(&result.holdout_mse_per_mode) {
        println!("  {} MSE {v:.4e}", m.as_str());
    }
    println!("artifacts written to {}", dir.display());
    Ok(code)
}
