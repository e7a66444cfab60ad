//! Charts built from models, fronts and audits.

use std::collections::BTreeMap;

use hyperlaw::data::Dataset;
use hyperlaw::expr::Expr;
use hyperlaw::fitness::{hessian_field, SampleGrid};
use hyperlaw::mechanics::{
    compression_scan, invariants_from_stretches, locking_stretch, nominal_stress, tangent_stiffness, DeformationMode,
    MaterialModel,
};
use hyperlaw::pareto::ParetoPoint;
use serde::Serialize;

use crate::svg::{Chart, Heatmap, Mark, Series, PALETTE};

const CURVE_POINTS: usize = 200;
/// Upper end of the uniaxial stiffness scan.
pub const STIFFNESS_SCAN_MAX: f64 = 8.0;
const STIFFNESS_SCAN_POINTS: usize = 1401;

fn mode_color(mode: DeformationMode) -> &'static str {
    match mode {
        DeformationMode::UT => PALETTE[0],
        DeformationMode::ET => PALETTE[1],
        DeformationMode::PS => PALETTE[2],
    }
}

/// Largest plotted stretch: the data range, kept short of any locking stretch.
fn curve_top(model: &MaterialModel, mode: DeformationMode, data_max: f64) -> f64 {
    let top = data_max * 1.05;
    match locking_stretch(model, mode) {
        Some(l) => top.min(1.0 + 0.995 * (l - 1.0)),
        None => top,
    }
}

fn curve(model: &MaterialModel, mode: DeformationMode, hi: f64, f: impl Fn(&MaterialModel, DeformationMode, f64) -> Option<f64>) -> Vec<(f64, f64)> {
    (0..=CURVE_POINTS)
        .map(|k| 1.0 + (hi - 1.0) * k as f64 / CURVE_POINTS as f64)
        .filter_map(|l| f(model, mode, l).filter(|v| v.is_finite()).map(|v| (l, v)))
        .collect()
}

/// Observed nominal stress as dots and model predictions as lines, per mode.
pub fn fit_chart(title: &str, model: &MaterialModel, train: &[Dataset], holdout: &[Dataset]) -> Chart {
    let mut series = Vec::new();
    for (set, tag) in [(train, "train"), (holdout, "holdout")] {
        for d in set {
            let color = mode_color(d.mode);
            series.push(Series {
                label: format!("{} data ({tag})", d.mode.as_str()),
                points: d.points.iter().map(|p| (p.stretch, p.stress)).collect(),
                mark: Mark::Dots,
                color,
            });
            let hi = curve_top(model, d.mode, d.max_stretch());
            series.push(Series {
                label: format!("{} model", d.mode.as_str()),
                points: curve(model, d.mode, hi, |m, mode, l| nominal_stress(m, mode, l).ok()),
                mark: if tag == "train" { Mark::Line } else { Mark::DashedLine },
                color,
            });
        }
    }
    Chart {
        title: title.into(),
        x_label: "stretch λ".into(),
        y_label: "nominal stress (MPa)".into(),
        series,
        ..Chart::default()
    }
}

/// Train and holdout error against complexity, with the selected points marked.
pub fn front_chart(front: &[ParetoPoint], recommended: Option<&ParetoPoint>, knee: Option<&ParetoPoint>) -> Chart {
    let mut series = vec![Series {
        label: "train MSE".into(),
        points: front.iter().map(|p| (p.complexity as f64, p.train_mse)).collect(),
        mark: Mark::Line,
        color: PALETTE[0],
    }];
    let holdout: Vec<_> = front.iter().filter_map(|p| Some((p.complexity as f64, p.holdout_mse?))).collect();
    if !holdout.is_empty() {
        series.push(Series {
            label: "holdout MSE".into(),
            points: holdout,
            mark: Mark::Dots,
            color: PALETTE[2],
        });
    }
    let mut markers = Vec::new();
    if let Some(k) = knee {
        markers.push((k.complexity as f64, "knee".to_string()));
    }
    if let Some(r) = recommended {
        series.push(Series {
            label: "recommended".into(),
            points: vec![(r.complexity as f64, r.train_mse)],
            mark: Mark::Dots,
            color: PALETTE[1],
        });
    }
    Chart {
        title: "Pareto front".into(),
        x_label: "complexity (nodes)".into(),
        y_label: "MSE (MPa²)".into(),
        log_y: true,
        series,
        markers,
        ..Chart::default()
    }
}

/// Uniaxial stiffness extremes and locking stretches of a model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StiffnessSummary {
    /// Minimum of `d²W/dλ²` along the uniaxial path over the scanned range.
    pub min_ut_stiffness: f64,
    pub min_ut_stiffness_stretch: f64,
    pub scan_max: f64,
    pub all_finite_positive: bool,
    pub locking_stretch: BTreeMap<DeformationMode, Option<f64>>,
}

/// Scans the uniaxial tangent over `[1, 8]`, stopping short of a locking stretch.
pub fn stiffness_summary(model: &MaterialModel) -> Option<StiffnessSummary> {
    let locking: BTreeMap<_, _> = DeformationMode::ALL.iter().map(|&m| (m, locking_stretch(model, m))).collect();
    let hi = match locking[&DeformationMode::UT] {
        Some(l) => STIFFNESS_SCAN_MAX.min(1.0 + 0.999 * (l - 1.0)),
        None => STIFFNESS_SCAN_MAX,
    };
    let scan = compression_scan(model, DeformationMode::UT, 1.0, hi, STIFFNESS_SCAN_POINTS).ok()?;
    Some(StiffnessSummary {
        min_ut_stiffness: scan.min_stiffness,
        min_ut_stiffness_stretch: scan.argmin,
        scan_max: hi,
        all_finite_positive: scan.all_finite_positive,
        locking_stretch: locking,
    })
}

pub fn stiffness_chart(model: &MaterialModel, summary: &StiffnessSummary) -> Chart {
    let mut series = Vec::new();
    let mut markers = Vec::new();
    for mode in DeformationMode::ALL {
        let lock = summary.locking_stretch[&mode];
        let hi = match lock {
            Some(l) => 1.0 + 0.98 * (l - 1.0),
            None => STIFFNESS_SCAN_MAX,
        };
        series.push(Series {
            label: format!("{} tangent", mode.as_str()),
            points: curve(model, mode, hi, |m, mode, l| tangent_stiffness(m, mode, l).ok()),
            mark: Mark::Line,
            color: mode_color(mode),
        });
        if let (Some(l), DeformationMode::UT) = (lock, mode) {
            markers.push((l, format!("locking λ ≈ {l:.2}")));
        }
    }
    let log_y = series.iter().flat_map(|s| &s.points).all(|p| p.1 > 0.0);
    Chart {
        title: "Tangent stiffness d²W/dλ²".into(),
        x_label: "stretch λ".into(),
        y_label: "stiffness (MPa)".into(),
        log_y,
        series,
        markers,
        notes: vec![format!(
            "min UT stiffness {:.3} MPa at λ = {:.2}",
            summary.min_ut_stiffness, summary.min_ut_stiffness_stretch
        )],
    }
}

/// Smallest eigenvalue of the invariant-space Hessian over the principal-stretch
/// plane `(λ1, λ2)` with `λ3 = 1/(λ1λ2)`. Inadmissible or singular cells are blank.
pub fn hessian_heatmap(expr: &Expr, grid: &SampleGrid, n: usize, penalty: f64) -> Heatmap {
    let (lo, hi) = (grid.lambda_min.ln(), grid.lambda_max.ln());
    let axis: Vec<f64> = (0..n).map(|i| (lo + (hi - lo) * (i as f64 + 0.5) / n as f64).exp()).collect();
    let tol = 1e-12;
    let mut cells = Vec::with_capacity(n * n);
    let mut points = Vec::new();
    for &l2 in &axis {
        for &l1 in &axis {
            let l3 = 1.0 / (l1 * l2);
            if l3 >= grid.lambda_min * (1.0 - tol) && l3 <= grid.lambda_max * (1.0 + tol) {
                let (i1, i2) = invariants_from_stretches(l1, l2, l3);
                cells.push(Some(points.len()));
                points.push([i1.max(0.0), i2.max(0.0)]);
            } else {
                cells.push(None);
            }
        }
    }
    let probe = SampleGrid {
        invariants: points,
        ..grid.clone()
    };
    let field = hessian_field(expr, &probe);
    let min_eig: Vec<f64> = field
        .iter()
        .map(|&(det, tr)| 0.5 * tr - (0.25 * tr * tr - det).max(0.0).sqrt())
        .collect();
    let values = cells
        .chunks(n)
        .map(|row| row.iter().map(|c| c.map_or(f64::NAN, |k| min_eig[k])).collect())
        .collect();
    Heatmap {
        title: "Smallest Hessian eigenvalue in invariant space".into(),
        x_label: "λ1".into(),
        y_label: "λ2".into(),
        x: axis.clone(),
        y: axis,
        values,
        notes: vec![format!("hessian penalty {penalty:.3e}")],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hyperlaw::expr::parse;
    use hyperlaw::fitness::build_sample_grid;
    use hyperlaw::skills::builtin_isotropic;

    fn box_grid() -> SampleGrid {
        let mut s = builtin_isotropic().sampling;
        s.auto_from_data = false;
        build_sample_grid(&[], &s).unwrap()
    }

    #[test]
    fn neo_hookean_stiffness() {
        let m = MaterialModel::NeoHookean { c1: 0.2 };
        let s = stiffness_summary(&m).unwrap();
        assert!(s.all_finite_positive);
        assert!(s.locking_stretch.values().all(Option::is_none));
        assert_eq!(s.scan_max, STIFFNESS_SCAN_MAX);
    }

    #[test]
    fn heatmap_sign_matches_convexity() {
        let grid = box_grid();
        let convex = hessian_heatmap(&parse("I1^2 + I2^2").unwrap(), &grid, 9, 0.0);
        assert!(convex.values.iter().flatten().filter(|v| v.is_finite()).all(|&v| v > 0.0));
        let concave = hessian_heatmap(&parse("-(I1^2)").unwrap(), &grid, 9, 1.0);
        assert!(concave.values.iter().flatten().filter(|v| v.is_finite()).all(|&v| v < 0.0));
        assert!(concave.values.iter().flatten().any(|v| v.is_nan()));
    }
}
