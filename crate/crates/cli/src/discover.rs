use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use hyperlaw::data::default_split;
use hyperlaw::evolve::{Checkpoint, EvaluationCounts, EvolutionConfig, Search};
use hyperlaw::expr::Operator;
use hyperlaw::mechanics::{mse_per_mode, DeformationMode, MaterialModel};
use hyperlaw::pareto::{extract_front, front_to_csv, front_to_json, knee_select, rank_candidates, AuditReport, Convexity};
use serde::Serialize;

use crate::common::{load_data, resolve_skill, skill_hash};
use crate::manifest::{ArtifactDir, RunManifest};
use crate::plots::{fit_chart, front_chart, hessian_heatmap, stiffness_chart, stiffness_summary, StiffnessSummary};
use crate::EXIT_PHYSICS_VIOLATION;

const HEATMAP_CELLS: usize = 41;

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    /// Bundled skill name (`isotropic`, `anisotropic`) or path to a skill JSON file.
    #[arg(long, default_value = "isotropic")]
    pub skill: String,
    /// Directory of mode-tagged CSV datasets; UT and ET train, PS is held out.
    #[arg(long)]
    pub data: PathBuf,
    /// Output artifact directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Search configuration JSON; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rounds of evolution, each ending with a migration.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Number of islands.
    #[arg(long)]
    pub populations: Option<usize>,
    /// Worker threads; does not change results.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub population_size: Option<usize>,
    #[arg(long)]
    pub maxsize: Option<usize>,
    /// Add `sqrt` and `log` to the operator whitelist.
    #[arg(long)]
    pub allow_sqrt_log: bool,
    /// Save a checkpoint to this path after every round.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Resume from a checkpoint instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Zero timestamps so reruns are byte-identical.
    #[arg(long)]
    pub reproducible: bool,
}

impl DiscoverArgs {
    fn evolution_config(&self) -> Result<EvolutionConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => EvolutionConfig::default(),
        };
        let set = |field: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *field = v;
            }
        };
        set(&mut c.iterations, self.iterations);
        set(&mut c.populations, self.populations);
        set(&mut c.workers, self.workers);
        set(&mut c.population_size, self.population_size);
        set(&mut c.maxsize, self.maxsize);
        if let Some(s) = self.seed {
            c.rng_seed = s;
        }
        Ok(c)
    }
}

#[derive(Debug, Serialize)]
struct Recommended {
    expression: String,
    complexity: usize,
    train_mse: f64,
    holdout_mse: Option<f64>,
    mse_per_mode: BTreeMap<DeformationMode, f64>,
    audit: AuditReport,
    stiffness: Option<StiffnessSummary>,
    knee: Option<String>,
    ranking: Vec<String>,
    warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
struct SearchSummary {
    rounds: usize,
    history: Vec<f64>,
    counts: EvaluationCounts,
    hall_size: usize,
}

pub fn run(args: &DiscoverArgs) -> Result<u8> {
    let mut skill = resolve_skill(&args.skill)?;
    if args.allow_sqrt_log {
        skill = skill.with_operators(&[Operator::Sqrt, Operator::Log]);
    }
    let data = load_data(&args.data)?;
    let split = default_split(&data.datasets).context("splitting datasets")?;
    let mut search = match &args.resume {
        Some(p) => {
            let cp = Checkpoint::load(p).with_context(|| format!("loading checkpoint {}", p.display()))?;
            Search::resume(cp, &skill, &split.train)?
        }
        None => Search::new(&skill, &split.train, args.evolution_config()?)?,
    };
    let config = search.config().clone();
    log::info!(
        "discovering with skill `{}`: {} rounds x {} islands of {}",
        skill.name,
        config.iterations,
        config.populations,
        config.population_size
    );
    while !search.is_finished() {
        search.step();
        log::info!("round {}/{}: hall size {}", search.round(), config.iterations, search.hall().len());
        if let Some(p) = &args.checkpoint {
            search.checkpoint().save(p).with_context(|| format!("saving checkpoint {}", p.display()))?;
        }
    }
    let grid = search.context().samples().clone();
    let outcome = search.finish()?;
    let front = extract_front(&outcome.hall, &split.holdout, &grid);
    let ranking = rank_candidates(&front);
    let knee = knee_select(&front);
    let best = ranking.recommended().context("empty Pareto front")?;

    let mut manifest = RunManifest::new("discover", serde_json::to_value(&config)?, args.reproducible);
    manifest.skill = Some(skill_hash(&skill));
    manifest.datasets = data.hashes;
    manifest.rng_seed = Some(config.rng_seed);
    let mut out = ArtifactDir::create(&args.out, manifest, args.reproducible)?;
    let ts = out.timestamp();

    let model = MaterialModel::symbolic(best.expr.clone());
    let all: Vec<_> = split.train.iter().chain(&split.holdout).cloned().collect();
    let stiffness = stiffness_summary(&model);
    let recommended = Recommended {
        expression: best.expr.to_infix(),
        complexity: best.complexity,
        train_mse: best.train_mse,
        holdout_mse: best.holdout_mse,
        mse_per_mode: mse_per_mode(&model, &all),
        audit: best.audit.clone(),
        stiffness: stiffness.clone(),
        knee: knee.map(|k| k.expr.to_infix()),
        ranking: ranking.candidates.iter().map(|p| p.expr.to_infix()).collect(),
        warnings: ranking.warnings.clone(),
    };
    out.write("front.csv", front_to_csv(&front))?;
    out.write("front.json", front_to_json(&front) + "\n")?;
    out.write_json("recommended.json", &recommended)?;
    out.write_json(
        "search.json",
        &SearchSummary {
            rounds: outcome.history.len(),
            history: outcome.history.clone(),
            counts: outcome.counts,
            hall_size: outcome.hall.len(),
        },
    )?;
    out.write("plots/front.svg", front_chart(&front, Some(best), knee).to_svg(ts))?;
    let title = format!("Recommended model (complexity {})", best.complexity);
    out.write("plots/fit.svg", fit_chart(&title, &model, &split.train, &split.holdout).to_svg(ts))?;
    let penalty = best.audit.hessian_penalty;
    out.write("plots/hessian.svg", hessian_heatmap(&best.expr, &grid, HEATMAP_CELLS, penalty).to_svg(ts))?;
    if let Some(s) = &stiffness {
        out.write("plots/stiffness.svg", stiffness_chart(&model, s).to_svg(ts))?;
    }
    let dir = out.finish()?;
    println!("recommended: {} (train MSE {:.4e}, {})", recommended.expression, best.train_mse, best.audit.convexity.as_str());
    println!("artifacts written to {}", dir.display());
    if best.audit.convexity != Convexity::CertifiedAnalytic {
        eprintln!("recommended model is not analytically certified convex ({})", best.audit.convexity.as_str());
        return Ok(EXIT_PHYSICS_VIOLATION);
    }
    Ok(0)
}
