use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::ConstantOptConfig;
use crate::expr::{Expr, Jet};
use crate::fitness::{FitnessContext, FitnessReport};
use crate::lsq::{levenberg_marquardt, nelder_mead, LeastSquares, LmOptions, NelderMeadOptions};

/// Largest number of constants refitted with exact derivatives; larger
/// trees use the simplex only.
pub const MAX_EXACT_CONSTANTS: usize = 12;

struct StressResiduals<'a> {
    expr: &'a Expr,
    points: Vec<([f64; 2], [f64; 2], f64)>,
}

/// Constant-Jacobian of the residuals with a jet of width `N = 2 + m`.
fn jet_jacobian<const N: usize>(e: &StressResiduals<'_>, c: &[f64]) -> Option<DMatrix<f64>> {
    let consts: Vec<Jet<N>> = c.iter().enumerate().map(|(k, &v)| Jet::variable(v, 2 + k)).collect();
    let mut j = DMatrix::zeros(e.points.len(), c.len());
    for (i, (inv, f, _)) in e.points.iter().enumerate() {
        let vars = [Jet::variable(inv[0], 0), Jet::variable(inv[1], 1)];
        let w = e.expr.eval_with_constants(&vars, &consts);
        if !w.v.is_finite() {
            return None;
        }
        for k in 0..c.len() {
            j[(i, k)] = f[0] * w.h[0][2 + k] + f[1] * w.h[1][2 + k];
        }
    }
    Some(j)
}

impl LeastSquares for StressResiduals<'_> {
    fn residuals(&self, params: &[f64]) -> Option<DVector<f64>> {
        let consts: Vec<Jet<2>> = params.iter().map(|&v| Jet::constant(v)).collect();
        let mut r = DVector::zeros(self.points.len());
        for (i, (inv, f, s)) in self.points.iter().enumerate() {
            let w = self.expr.eval_with_constants(&Jet::variables(*inv), &consts);
            if !w.v.is_finite() {
                return None;
            }
            r[i] = f[0] * w.g[0] + f[1] * w.g[1] - s;
        }
        Some(r)
    }

    fn jacobian(&self, params: &[f64]) -> Option<DMatrix<f64>> {
        macro_rules! dispatch {
            ($($m:literal => $n:literal),*) => {
                match params.len() {
                    $($m => jet_jacobian::<$n>(self, params),)*
                    _ => None,
                }
            };
        }
        dispatch!(1 => 3, 2 => 4, 3 => 5, 4 => 6, 5 => 7, 6 => 8, 7 => 9, 8 => 10, 9 => 11, 10 => 12, 11 => 13, 12 => 14)
    }
}

/// Refits the optimizable constants of `expr` to the training stresses.
///
/// Starts from the current constants, then `restarts` perturbed copies.
/// Levenberg–Marquardt with exact derivatives is used for up to
/// [`MAX_EXACT_CONSTANTS`] constants, Nelder–Mead otherwise or when every
/// LM start fails. The result is accepted only if neither train MSE nor
/// composite gets worse; otherwise the input is returned with its report.
pub fn optimize_constants(
    expr: &Expr,
    report: &FitnessReport,
    ctx: &FitnessContext,
    config: &ConstantOptConfig,
    rng: &mut impl Rng,
) -> (Expr, FitnessReport) {
    let start = expr.optimizable_constants();
    if start.is_empty() || config.max_iters == 0 {
        return (expr.clone(), report.clone());
    }
    let problem = StressResiduals {
        expr,
        points: ctx.train_points().collect(),
    };
    let mut starts = vec![start.clone()];
    let jitter = Normal::new(0.0, 0.3).expect("valid");
    for _ in 0..config.restarts {
        starts.push(start.iter().map(|c| c * (1.0 + jitter.sample(rng))).collect());
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    let consider = |best: &mut Option<(Vec<f64>, f64)>, p: Vec<f64>, sse: f64| {
        if sse.is_finite() && best.as_ref().is_none_or(|(_, b)| sse < *b) {
            *best = Some((p, sse));
        }
    };
    let lm = LmOptions {
        max_iters: config.max_iters,
        ..LmOptions::default()
    };
    if start.len() <= MAX_EXACT_CONSTANTS {
        for s in &starts {
            if let Some(res) = levenberg_marquardt(&problem, s, &lm) {
                consider(&mut best, res.params, res.sse);
            }
        }
    }
    if best.is_none() {
        let cost = |c: &[f64]| problem.residuals(c).map_or(f64::INFINITY, |r| r.norm_squared());
        let nm = NelderMeadOptions {
            max_evals: config.max_iters * 20 * (start.len() + 1),
            ..NelderMeadOptions::default()
        };
        for s in &starts {
            let (p, f) = nelder_mead(cost, s, &nm);
            consider(&mut best, p, f);
        }
    }
    let Some((params, _)) = best else {
        return (expr.clone(), report.clone());
    };
    let candidate = expr.with_optimizable_constants(&params);
    let new = ctx.evaluate_unchecked(&candidate);
    if new.valid && new.train_mse <= report.train_mse && new.composite <= report.composite {
        (candidate, new)
    } else {
        (expr.clone(), report.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;
    use crate::expr::parse;
    use crate::mechanics::{DeformationMode, MaterialModel};
    use crate::skills::builtin_isotropic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mr_context() -> FitnessContext {
        let model = MaterialModel::MooneyRivlin { c10: 0.2, c01: 0.05 };
        let grid: Vec<f64> = (0..20).map(|i| 1.0 + 0.2 * i as f64).collect();
        let train = vec![
            synth_generate(&model, DeformationMode::UT, &grid, 0.0, 0).unwrap(),
            synth_generate(&model, DeformationMode::ET, &grid[..10], 0.0, 0).unwrap(),
        ];
        FitnessContext::from_skill(&builtin_isotropic(), &train).unwrap()
    }

    #[test]
    fn recovers_mooney_rivlin_constants() {
        let ctx = mr_context();
        let e = parse("1*I1 + 1*I2").unwrap();
        let r = ctx.evaluate_unchecked(&e);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (out, rep) = optimize_constants(&e, &r, &ctx, &ConstantOptConfig::default(), &mut rng);
        let c = out.optimizable_constants();
        assert!((c[0] - 0.2).abs() < 0.002 && (c[1] - 0.05).abs() < 0.0005, "{out}");
        assert!(rep.train_mse < 1e-12);
    }

    #[test]
    fn unchanged_without_finite_neighbourhood() {
        let ctx = mr_context();
        let e = parse("log(-1 - I1)").unwrap();
        let r = ctx.evaluate_unchecked(&e);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (out, _) = optimize_constants(&e, &r, &ctx, &ConstantOptConfig::default(), &mut rng);
        assert_eq!(out, e);
    }

    #[test]
    fn never_worse() {
        let ctx = mr_context();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for src in ["0.3*I1*I1 + 2", "exp(0.01*I1) + 0.1*I2", "I1/(50 - I1)"] {
            let e = parse(src).unwrap();
            let r = ctx.evaluate_unchecked(&e);
            let (_, rep) = optimize_constants(&e, &r, &ctx, &ConstantOptConfig::default(), &mut rng);
            assert!(rep.train_mse <= r.train_mse && rep.composite <= r.composite, "{src}");
        }
    }

    #[test]
    fn exact_jacobian_matches_finite_differences() {
        let ctx = mr_context();
        let e = parse("0.4*I1 + I1/(60 - 0.9*I1) + 0.02*I2").unwrap();
        let p = StressResiduals {
            expr: &e,
            points: ctx.train_points().collect(),
        };
        let c = e.optimizable_constants();
        let j = p.jacobian(&c).unwrap();
        for k in 0..c.len() {
            let h = 1e-6 * (1.0 + c[k].abs());
            let mut up = c.clone();
            up[k] += h;
            let mut dn = c.clone();
            dn[k] -= h;
            let fd = (p.residuals(&up).unwrap() - p.residuals(&dn).unwrap()) / (2.0 * h);
            for i in 0..fd.len() {
                assert!((fd[i] - j[(i, k)]).abs() < 1e-5 * (1.0 + fd[i].abs()));
            }
        }
    }
}
