//! Pareto-front extraction, knee selection, structural audit and ranking.

mod audit;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::evolve::HallOfFame;
use crate::expr::Expr;
use crate::fitness::{mse_on, SampleGrid};

pub use audit::{structural_audit, AuditFlag, AuditReport, Convexity, REFERENCE_TOLERANCE};

/// Floor applied to MSE values before taking logarithms.
const MSE_FLOOR: f64 = 1e-300;

/// Relative tolerance under which knee distances count as tied.
const KNEE_TIE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub complexity: usize,
    pub train_mse: f64,
    /// `None` without holdout data or when the prediction is non-finite.
    pub holdout_mse: Option<f64>,
    pub expr: Expr,
    pub audit: AuditReport,
}

/// Non-dominated hall entries in `(complexity, train_mse)`, ascending
/// complexity, each audited on `grid` and scored on `holdout`.
pub fn extract_front(hall: &HallOfFame, holdout: &[Dataset], grid: &SampleGrid) -> Vec<ParetoPoint> {
    let mut best = f64::INFINITY;
    let mut out = Vec::new();
    for (c, e) in hall.entries() {
        let mse = e.report.train_mse;
        if mse < best {
            best = mse;
            out.push((c, mse, e.expr.clone()));
        }
    }
    out.into_iter()
        .map(|(complexity, train_mse, expr)| {
            let holdout_mse = if holdout.is_empty() {
                None
            } else {
                Some(mse_on(&expr, holdout)).filter(|v| v.is_finite())
            };
            ParetoPoint {
                complexity,
                train_mse,
                holdout_mse,
                audit: structural_audit(&expr, grid),
                expr,
            }
        })
        .collect()
}

/// Whether no point has another with no larger complexity and MSE, one strictly smaller.
pub fn is_non_dominated(front: &[ParetoPoint]) -> bool {
    front.iter().all(|p| {
        !front.iter().any(|q| {
            q.complexity <= p.complexity
                && q.train_mse <= p.train_mse
                && (q.complexity < p.complexity || q.train_mse < p.train_mse)
        })
    })
}

/// Perpendicular distances of every point from the chord joining the
/// endpoints, in normalized `(complexity, log10 mse)` coordinates.
pub fn knee_distances(front: &[ParetoPoint]) -> Vec<f64> {
    let xs: Vec<f64> = front.iter().map(|p| p.complexity as f64).collect();
    let ys: Vec<f64> = front.iter().map(|p| p.train_mse.max(MSE_FLOOR).log10()).collect();
    let norm = |v: &[f64]| -> Vec<f64> {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        v.iter().map(|x| if span > 0.0 { (x - lo) / span } else { 0.0 }).collect()
    };
    let (x, y) = (norm(&xs), norm(&ys));
    let n = front.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let (dx, dy) = (x[n - 1] - x[0], y[n - 1] - y[0]);
    let len = dx.hypot(dy);
    (0..n)
        .map(|i| {
            if len == 0.0 {
                0.0
            } else {
                ((x[i] - x[0]) * dy - (y[i] - y[0]) * dx).abs() / len
            }
        })
        .collect()
}

/// Elbow of the front: the interior point farthest from the endpoint chord,
/// ties toward lower complexity. Fronts of fewer than three points yield the
/// lowest-MSE point with a warning.
pub fn knee_select(front: &[ParetoPoint]) -> Option<&ParetoPoint> {
    if front.len() < 3 {
        if !front.is_empty() {
            log::warn!("knee selection needs at least 3 front points, got {}; using the lowest-MSE point", front.len());
        }
        return front.iter().min_by(|a, b| a.train_mse.total_cmp(&b.train_mse).then(a.complexity.cmp(&b.complexity)));
    }
    let d = knee_distances(front);
    let max = d[1..front.len() - 1].iter().copied().fold(0.0, f64::max);
    (1..front.len() - 1).find(|&i| d[i] >= max - KNEE_TIE * max.max(1.0)).map(|i| &front[i])
}

/// Result of [`rank_candidates`].
#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    /// Recommended model first.
    pub candidates: Vec<ParetoPoint>,
    pub warnings: Vec<String>,
}

impl Ranking {
    pub fn recommended(&self) -> Option<&ParetoPoint> {
        self.candidates.first()
    }
}

fn cmp_optional(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(a), Some(b)) => a.total_cmp(&b),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// The ranking order: convexity class, interpretability (descending),
/// holdout MSE, train MSE, complexity, then expression text.
pub fn rank_order(a: &ParetoPoint, b: &ParetoPoint) -> Ordering {
    a.audit
        .convexity
        .cmp(&b.audit.convexity)
        .then(b.audit.interpretability_score().cmp(&a.audit.interpretability_score()))
        .then(cmp_optional(a.holdout_mse, b.holdout_mse))
        .then(a.train_mse.total_cmp(&b.train_mse))
        .then(a.complexity.cmp(&b.complexity))
        .then_with(|| a.expr.to_infix().cmp(&b.expr.to_infix()))
}

pub fn rank_candidates(front: &[ParetoPoint]) -> Ranking {
    let mut candidates = front.to_vec();
    candidates.sort_by(rank_order);
    let mut warnings = Vec::new();
    if !candidates.is_empty() && candidates.iter().all(|p| p.audit.convexity == Convexity::Violated) {
        let w = "every candidate violates the convexity constraint; the ranking falls back to holdout error".to_string();
        log::warn!("{w}");
        warnings.push(w);
    }
    Ranking { candidates, warnings }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// CSV with columns `complexity, train_mse, holdout_mse, convexity, flags, expression`.
pub fn front_to_csv(front: &[ParetoPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["complexity", "train_mse", "holdout_mse", "convexity", "flags", "expression"])
        .expect("in-memory write");
    for p in front {
        let flags: Vec<&str> = p.audit.flags.iter().map(|f| f.as_str()).collect();
        w.write_record([
            p.complexity.to_string(),
            p.train_mse.to_string(),
            fmt_opt(p.holdout_mse),
            p.audit.convexity.as_str().to_string(),
            flags.join(";"),
            p.expr.to_infix(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn front_to_json(front: &[ParetoPoint]) -> String {
    serde_json::to_string_pretty(front).expect("front serializes")
}
