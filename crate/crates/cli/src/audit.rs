use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use hyperlaw::expr::Operator;
use hyperlaw::fitness::{build_sample_grid, constraint_penalties, ConstraintPenalties, SampleGrid};
use hyperlaw::mechanics::{ogden_forensic, BaselineKind, MaterialModel, OgdenForensic, DEFAULT_AMPLIFICATION_THRESHOLD};
use hyperlaw::pareto::{structural_audit, AuditReport, Convexity};
use hyperlaw::skills::{Skill, TransformId};
use serde::Serialize;

use crate::calibrate::Baseline;
use crate::common::{load_data, parse_list, resolve_skill, skill_hash};
use crate::manifest::{ArtifactDir, RunManifest};
use crate::plots::{hessian_heatmap, stiffness_chart, stiffness_summary, StiffnessSummary};
use crate::EXIT_PHYSICS_VIOLATION;

const HEATMAP_CELLS: usize = 41;

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("model").required(true).args(["expr", "baseline"])))]
pub struct AuditArgs {
    /// Strain energy as an expression over the skill's features, e.g. `0.2*I1 + 0.05*I2`.
    #[arg(long)]
    pub expr: Option<String>,
    /// Baseline model kind, used with `--params`.
    #[arg(long, value_enum, requires = "params")]
    pub baseline: Option<Baseline>,
    /// Comma-separated baseline parameters; Ogden takes `mu1,mu2,mu3,alpha1,alpha2,alpha3`.
    #[arg(long, allow_hyphen_values = true)]
    pub params: Option<String>,
    #[arg(long, default_value = "isotropic")]
    pub skill: String,
    /// Derive the constraint grid from these datasets instead of the skill's fixed box.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Compressive transverse stretch for the Ogden amplification table.
    #[arg(long, default_value_t = 0.157)]
    pub forensic_stretch: f64,
    #[arg(long, default_value_t = DEFAULT_AMPLIFICATION_THRESHOLD)]
    pub amplification_threshold: f64,
    #[arg(long)]
    pub reproducible: bool,
}

#[derive(Debug, Serialize)]
pub struct GridSummary {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub points: usize,
}

#[derive(Debug, Serialize)]
pub struct AuditOutput {
    pub model: MaterialModel,
    pub expression: Option<String>,
    pub grid: GridSummary,
    /// Operators the expression uses that the skill does not whitelist.
    pub operators_outside_whitelist: Vec<String>,
    pub audit: Option<AuditReport>,
    pub constraints: Option<ConstraintPenalties>,
    pub stiffness: Option<StiffnessSummary>,
    pub ogden_forensic: Option<OgdenForensic>,
    pub violated: bool,
}

fn forensic_csv(f: &OgdenForensic) -> String {
    let mut s = String::from("term,mu,alpha,lambda_pow_alpha,lambda_pow_alpha_minus_2,exceeds_threshold\n");
    for t in &f.terms {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            t.index + 1,
            t.mu,
            t.alpha,
            t.power_alpha,
            t.power_alpha_minus_2,
            t.alpha_exceeds || t.alpha_minus_2_exceeds
        );
    }
    s
}

fn sample_grid(skill: &Skill, data: &Option<PathBuf>) -> Result<(SampleGrid, Vec<crate::manifest::DatasetHash>)> {
    let mut sampling = skill.sampling.clone();
    match data {
        Some(dir) => {
            let loaded = load_data(dir)?;
            let grid = build_sample_grid(&loaded.datasets, &sampling).context("building sample grid")?;
            Ok((grid, loaded.hashes))
        }
        None => {
            sampling.auto_from_data = false;
            Ok((build_sample_grid(&[], &sampling).context("building sample grid")?, Vec::new()))
        }
    }
}

fn build_model(args: &AuditArgs, skill: &Skill) -> Result<MaterialModel> {
    if let Some(text) = &args.expr {
        let expr = skill.parse_expr(text).with_context(|| format!("parsing `{text}`"))?;
        return Ok(MaterialModel::symbolic(expr));
    }
    let (Some(b), Some(p)) = (args.baseline, &args.params) else {
        bail!("give either --expr or --baseline with --params");
    };
    let kind = BaselineKind::from(b);
    let params = parse_list(p)?;
    kind.model(&params)
        .with_context(|| format!("{} takes {} parameters, got {}", kind.as_str(), kind.parameter_count(), params.len()))
}

pub fn run(args: &AuditArgs) -> Result<u8> {
    let skill = resolve_skill(&args.skill)?;
    let model = build_model(args, &skill)?;
    let (grid, datasets) = sample_grid(&skill, &args.data)?;
    let iso = skill.transform_id == TransformId::IsoInvariants;
    let expr = model.to_expr();

    let mut outside = Vec::new();
    let mut constraints = None;
    if let Some(e) = &expr {
        let ops: Vec<Operator> = e.operators().into_iter().filter(|op| !skill.allows(*op)).collect();
        outside = ops.iter().map(|op| format!("{op:?}").to_lowercase()).collect();
        let checked = skill.clone().with_operators(&ops);
        constraints = Some(constraint_penalties(e, &checked, &grid)?);
    }
    let audit = expr.as_ref().filter(|_| iso).map(|e| structural_audit(e, &grid));
    let stiffness = if iso { stiffness_summary(&model) } else { None };
    let ogden = match &model {
        MaterialModel::Ogden3 { mu, alpha } => Some(ogden_forensic(mu, alpha, args.forensic_stretch, args.amplification_threshold)?),
        _ => None,
    };
    let violated = match (&audit, &constraints) {
        (Some(a), _) if a.convexity == Convexity::Violated => true,
        (_, Some(c)) if !c.all_satisfied() => true,
        (None, None) => stiffness.as_ref().is_some_and(|s| !s.all_finite_positive),
        _ => false,
    };

    let config = serde_json::json!({
        "model": model,
        "forensic_stretch": args.forensic_stretch,
        "amplification_threshold": args.amplification_threshold,
        "grid_from_data": args.data.is_some(),
    });
    let mut manifest = RunManifest::new("audit", config, args.reproducible);
    manifest.skill = Some(skill_hash(&skill));
    manifest.datasets = datasets;
    let mut out = ArtifactDir::create(&args.out, manifest, args.reproducible)?;
    let ts = out.timestamp();
    let output = AuditOutput {
        expression: expr.as_ref().map(|e| e.to_infix()),
        model: model.clone(),
        grid: GridSummary {
            lambda_min: grid.lambda_min,
            lambda_max: grid.lambda_max,
            points: grid.len(),
        },
        operators_outside_whitelist: outside,
        audit,
        constraints,
        stiffness,
        ogden_forensic: ogden,
        violated,
    };
    out.write_json("audit.json", &output)?;
    if let (Some(e), Some(a)) = (&expr, &output.audit) {
        out.write("plots/hessian.svg", hessian_heatmap(e, &grid, HEATMAP_CELLS, a.hessian_penalty).to_svg(ts))?;
    }
    if let Some(s) = &output.stiffness {
        out.write("plots/stiffness.svg", stiffness_chart(&model, s).to_svg(ts))?;
    }
    if let Some(f) = &output.ogden_forensic {
        out.write("forensic.csv", forensic_csv(f))?;
    }
    let dir = out.finish()?;

    if let Some(a) = &output.audit {
        println!("convexity: {}", a.convexity.as_str());
        if let Some(l) = a.locking_invariant_limit {
            println!("locking invariant limit: {l:.4}");
        }
    }
    if let Some(s) = &output.stiffness {
        println!("min UT stiffness: {:.4} MPa at λ = {:.3}", s.min_ut_stiffness, s.min_ut_stiffness_stretch);
        for (m, l) in &s.locking_stretch {
            if let Some(l) = l {
                println!("{} locking stretch: {l:.3}", m.as_str());
            }
        }
    }
    if let Some(f) = &output.ogden_forensic {
        println!("Ogden amplification at λ = {}: max {:.4e}{}", f.transverse_stretch, f.max_amplification, if f.ill_conditioned { " (ill-conditioned)" } else { "" });
    }
    println!("artifacts written to {}", dir.display());
    Ok(if violated { EXIT_PHYSICS_VIOLATION } else { 0 })
}
