//! Small dense nonlinear least-squares and simplex solvers.

use nalgebra::{DMatrix, DVector};

/// A residual model `r(p)` with Jacobian `∂r/∂p`.
pub trait LeastSquares {
    fn residuals(&self, params: &[f64]) -> Option<DVector<f64>>;
    /// `rows = residuals`, `cols = params`.
    fn jacobian(&self, params: &[f64]) -> Option<DMatrix<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub max_iters: usize,
    /// Relative cost reduction below which the solve stops.
    pub ftol: f64,
    /// Infinity norm of the gradient below which the solve stops.
    pub gtol: f64,
    /// Relative step size below which the solve stops.
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iters: 200,
            ftol: 1e-15,
            gtol: 1e-14,
            xtol: 1e-14,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmResult {
    pub params: Vec<f64>,
    /// Sum of squared residuals.
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sse(r: &DVector<f64>) -> f64 {
    r.norm_squared()
}

/// Levenberg–Marquardt with Marquardt diagonal scaling and Nielsen damping updates.
///
/// Returns `None` when the starting point has non-finite residuals.
pub fn levenberg_marquardt(model: &impl LeastSquares, start: &[f64], opts: &LmOptions) -> Option<LmResult> {
    let n = start.len();
    let mut p = DVector::from_column_slice(start);
    let mut r = model.residuals(p.as_slice()).filter(|r| r.iter().all(|v| v.is_finite()))?;
    let mut cost = sse(&r);
    if n == 0 {
        return Some(LmResult {
            params: vec![],
            sse: cost,
            iterations: 0,
            converged: true,
        });
    }
    let mut mu: Option<f64> = None;
    let mut nu = 2.0;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < opts.max_iters {
        iterations += 1;
        let Some(j) = model.jacobian(p.as_slice()).filter(|j| j.iter().all(|v| v.is_finite())) else {
            break;
        };
        let a = j.transpose() * &j;
        let g = j.transpose() * &r;
        if g.amax() <= opts.gtol * (1.0 + cost) {
            converged = true;
            break;
        }
        let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].max(1e-12 * (1.0 + a.diagonal().amax()))).collect();
        let mu_now = *mu.get_or_insert(1e-3);
        let mut damping = mu_now;
        loop {
            let mut m = a.clone();
            for i in 0..n {
                m[(i, i)] += damping * diag[i];
            }
            let step = m.cholesky().map(|c| c.solve(&(-&g)));
            if let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) {
                let trial = &p + &step;
                if let Some(rt) = model.residuals(trial.as_slice()).filter(|r| r.iter().all(|v| v.is_finite())) {
                    let ct = sse(&rt);
                    // Predicted reduction of the linearized model.
                    let predicted = step.dot(&(damping * DVector::from_iterator(n, (0..n).map(|i| diag[i] * step[i])) - &g));
                    if ct < cost {
                        let rho = if predicted > 0.0 { (cost - ct) / predicted } else { 1.0 };
                        let small_step = step.norm() <= opts.xtol * (p.norm() + opts.xtol);
                        let small_gain = (cost - ct) <= opts.ftol * cost;
                        p = trial;
                        r = rt;
                        cost = ct;
                        mu = Some(damping * (1.0 / 3.0f64).max(1.0 - (2.0 * rho - 1.0).powi(3)));
                        nu = 2.0;
                        if small_step || small_gain || cost == 0.0 {
                            converged = true;
                            break 'outer;
                        }
                        continue 'outer;
                    }
                    if step.norm() <= opts.xtol * (p.norm() + opts.xtol) {
                        converged = true;
                        break 'outer;
                    }
                }
            }
            damping *= nu;
            nu *= 2.0;
            if !damping.is_finite() || damping > 1e16 {
                break 'outer;
            }
        }
    }
    Some(LmResult {
        params: p.as_slice().to_vec(),
        sse: cost,
        iterations,
        converged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Spread of function values across the simplex at which to stop.
    pub ftol: f64,
    /// Relative size of the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 2000,
            ftol: 1e-14,
            initial_step: 0.1,
        }
    }
}

/// Derivative-free Nelder–Mead minimization. Non-finite values are treated as +∞.
///
/// Returns the best vertex and its value.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, start: &[f64], opts: &NelderMeadOptions) -> (Vec<f64>, f64) {
    let n = start.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let f0 = eval(start);
    if n == 0 {
        return (vec![], f0);
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.to_vec(), f0)];
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] = if x[i] != 0.0 { x[i] * (1.0 + opts.initial_step) } else { opts.initial_step * 0.1 };
        let fx = eval(&x);
        simplex.push((x, fx));
    }
    let mut evals = n + 1;
    let cmp = |a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)| a.1.total_cmp(&b.1);
    while evals < opts.max_evals {
        simplex.sort_by(cmp);
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if worst.is_finite() && (worst - best).abs() <= opts.ftol * (best.abs() + opts.ftol) {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v.0[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n].0[j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = eval(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let x = along(-0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = eval(&x);
                (x, v)
            };
            evals += 1;
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x0 = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    for j in 0..n {
                        v.0[j] = x0[j] + 0.5 * (v.0[j] - x0[j]);
                    }
                    v.1 = eval(&v.0);
                }
                evals += n;
            }
        }
    }
    simplex.sort_by(cmp);
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl LeastSquares for Rosenbrock {
        fn residuals(&self, p: &[f64]) -> Option<DVector<f64>> {
            Some(DVector::from_vec(vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]]))
        }
        fn jacobian(&self, p: &[f64]) -> Option<DMatrix<f64>> {
            Some(DMatrix::from_row_slice(2, 2, &[-20.0 * p[0], 10.0, -1.0, 0.0]))
        }
    }

    #[test]
    fn lm_solves_rosenbrock() {
        let res = levenberg_marquardt(&Rosenbrock, &[-1.2, 1.0], &LmOptions::default()).unwrap();
        assert!(res.converged);
        assert!((res.params[0] - 1.0).abs() < 1e-8, "{res:?}");
        assert!((res.params[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn lm_rejects_non_finite_start() {
        struct Bad;
        impl LeastSquares for Bad {
            fn residuals(&self, _: &[f64]) -> Option<DVector<f64>> {
                Some(DVector::from_vec(vec![f64::NAN]))
            }
            fn jacobian(&self, _: &[f64]) -> Option<DMatrix<f64>> {
                None
            }
        }
        assert!(levenberg_marquardt(&Bad, &[1.0], &LmOptions::default()).is_none());
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2);
        let (x, v) = nelder_mead(f, &[0.0, 0.0], &NelderMeadOptions::default());
        assert!(v < 1e-10);
        assert!((x[0] - 3.0).abs() < 1e-4 && (x[1] + 1.0).abs() < 1e-4);
    }
}
