//! Damped nonlinear least squares (Levenberg–Marquardt) with a central
//! finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum LmError {
    #[error("no convergence after {iterations} iterations (cost {cost:.6e})")]
    NonConvergence { cost: f64, iterations: usize, trace: Vec<TracePoint> },
    #[error("model evaluation failed at {params:?}: {message}")]
    Model { params: Vec<f64>, message: String },
    #[error("need at least as many residuals ({residuals}) as parameters ({params})")]
    Underdetermined { residuals: usize, params: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub params: Vec<f64>,
    pub cost: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Stop when an accepted step changes the cost by less than this fraction.
    pub rel_cost_tol: f64,
    /// Finite-difference step relative to `max(|x_j|, scale_j)`.
    pub fd_rel_step: f64,
    pub initial_lambda: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self { max_iterations: 500, rel_cost_tol: 1e-10, fd_rel_step: 1e-6, initial_lambda: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// `½ Σ r²` at the solution.
    pub cost: f64,
    /// `s² (JᵀJ)⁻¹` with `s² = Σr² / (n − p)`.
    pub covariance: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
}

/// Least-squares problem: residual vector as a function of the parameters,
/// with optional box bounds enforced by projection.
pub struct Problem<F> {
    pub residuals: F,
    /// Typical magnitude of each parameter, used for finite-difference steps.
    pub scale: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl<F> Problem<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, String>,
{
    pub fn unbounded(residuals: F, scale: Vec<f64>) -> Self {
        let n = scale.len();
        Self { residuals, scale, lower: vec![f64::NEG_INFINITY; n], upper: vec![f64::INFINITY; n] }
    }

    fn eval(&self, x: &[f64]) -> Result<DVector<f64>, LmError> {
        (self.residuals)(x).map(DVector::from_vec).map_err(|message| LmError::Model { params: x.to_vec(), message })
    }

    fn project(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }

    fn jacobian(&self, x: &[f64], m: usize, rel: f64) -> Result<DMatrix<f64>, LmError> {
        let mut jac = DMatrix::zeros(m, x.len());
        let mut xp = x.to_vec();
        for j in 0..x.len() {
            let h = rel * x[j].abs().max(self.scale[j]);
            // one-sided at an active bound
            let up = (x[j] + h).min(self.upper[j]);
            let dn = (x[j] - h).max(self.lower[j]);
            xp[j] = up;
            let rp = self.eval(&xp)?;
            xp[j] = dn;
            let rm = self.eval(&xp)?;
            xp[j] = x[j];
            let col = (rp - rm) / (up - dn);
            jac.set_column(j, &col);
        }
        Ok(jac)
    }
}

pub fn minimize<F>(problem: &Problem<F>, x0: &[f64], cfg: &LmConfig) -> Result<LmFit, LmError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, String>,
{
    let p = x0.len();
    let mut x = x0.to_vec();
    problem.project(&mut x);
    let mut r = problem.eval(&x)?;
    let m = r.len();
    if m < p {
        return Err(LmError::Underdetermined { residuals: m, params: p });
    }
    let mut cost = 0.5 * r.norm_squared();
    let mut lambda = cfg.initial_lambda;
    let mut trace = vec![TracePoint { params: x.clone(), cost, lambda }];
    let mut jac = problem.jacobian(&x, m, cfg.fd_rel_step)?;

    for iter in 1..=cfg.max_iterations {
        if cost <= 1e-300 {
            return Ok(finish(x, r, jac, iter, trace));
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let dmax = jtj.diagonal().max();
        let mut a = jtj.clone();
        for j in 0..p {
            a[(j, j)] += lambda * jtj[(j, j)].max(1e-12 * dmax).max(f64::MIN_POSITIVE);
        }
        let step = match a.cholesky() {
            Some(ch) => -ch.solve(&g),
            None => {
                lambda *= 10.0;
                continue;
            }
        };
        let mut xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        problem.project(&mut xn);
        let dx: f64 = xn.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let xnorm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        // a failed model evaluation counts as a rejected step
        let (rn, cn) = match problem.eval(&xn) {
            Ok(rn) => {
                let cn = 0.5 * rn.norm_squared();
                (rn, cn)
            }
            Err(_) => (r.clone(), f64::INFINITY),
        };
        if cn.is_finite() && cn <= cost {
            let rel = (cost - cn) / cost.max(f64::MIN_POSITIVE);
            x = xn;
            r = rn;
            cost = cn;
            lambda = (lambda / 3.0).max(1e-12);
            trace.push(TracePoint { params: x.clone(), cost, lambda });
            jac = problem.jacobian(&x, m, cfg.fd_rel_step)?;
            if rel < cfg.rel_cost_tol || dx <= 1e-14 * (xnorm + 1e-14) {
                return Ok(finish(x, r, jac, iter, trace));
            }
        } else {
            lambda *= 4.0;
            // no descent possible within machine precision: a minimum
            if lambda > 1e16 || dx <= 1e-15 * (xnorm + 1e-15) {
                return Ok(finish(x, r, jac, iter, trace));
            }
        }
    }
    Err(LmError::NonConvergence { cost, iterations: cfg.max_iterations, trace })
}

fn finish(params: Vec<f64>, r: DVector<f64>, jac: DMatrix<f64>, iterations: usize, trace: Vec<TracePoint>) -> LmFit {
    let (m, p) = jac.shape();
    let dof = (m - p).max(1) as f64;
    let s2 = r.norm_squared() / dof;
    let jtj = jac.transpose() * &jac;
    let inv = jtj
        .clone()
        .try_inverse()
        .or_else(|| jtj.pseudo_inverse(1e-14).ok())
        .unwrap_or_else(|| DMatrix::from_element(p, p, f64::NAN));
    let covariance = inv * s2;
    let std_errors = (0..p).map(|j| covariance[(j, j)].max(0.0).sqrt()).collect();
    LmFit { params, cost: 0.5 * r.norm_squared(), covariance, std_errors, iterations, trace }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_fit_exact() {
        let ts: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 3.0 * (-0.7 * t).exp() + 0.5).collect();
        let prob = Problem::unbounded(
            |x: &[f64]| Ok(ts.iter().zip(&ys).map(|(t, y)| x[0] * (-x[1] * t).exp() + x[2] - y).collect()),
            vec![1.0, 1.0, 1.0],
        );
        let fit = minimize(&prob, &[1.0, 0.2, 0.0], &LmConfig::default()).unwrap();
        for (got, want) in fit.params.iter().zip([3.0, 0.7, 0.5]) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
        assert!(fit.trace.len() >= 2);
    }

    #[test]
    fn linear_fit_covariance_matches_normal_equations() {
        // y = a + b t with known noise pattern; compare against closed form
        let ts: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let noise = [0.1, -0.2, 0.05, 0.0, 0.15, -0.1, 0.02, -0.05, 0.08, -0.03];
        let ys: Vec<f64> = ts.iter().zip(noise).map(|(t, e)| 1.0 + 2.0 * t + e).collect();
        let prob = Problem::unbounded(
            |x: &[f64]| Ok(ts.iter().zip(&ys).map(|(t, y)| x[0] + x[1] * t - y).collect()),
            vec![1.0, 1.0],
        );
        let fit = minimize(&prob, &[0.0, 0.0], &LmConfig::default()).unwrap();
        let n = ts.len() as f64;
        let (st, stt) = (ts.iter().sum::<f64>(), ts.iter().map(|t| t * t).sum::<f64>());
        let (sy, sty) = (ys.iter().sum::<f64>(), ts.iter().zip(&ys).map(|(t, y)| t * y).sum::<f64>());
        let det = n * stt - st * st;
        let b = (n * sty - st * sy) / det;
        let a = (sy - b * st) / n;
        assert!((fit.params[0] - a).abs() < 1e-9 && (fit.params[1] - b).abs() < 1e-9);
        let rss: f64 = ts.iter().zip(&ys).map(|(t, y)| (a + b * t - y).powi(2)).sum();
        let s2 = rss / (n - 2.0);
        assert!((fit.covariance[(1, 1)] - s2 * n / det).abs() < 1e-9);
        assert!((fit.covariance[(0, 0)] - s2 * stt / det).abs() < 1e-9);
    }

    #[test]
    fn bounds_are_respected() {
        let prob = Problem {
            residuals: |x: &[f64]| Ok(vec![x[0] + 1.0, 0.0]),
            scale: vec![1.0],
            lower: vec![0.0],
            upper: vec![10.0],
        };
        let fit = minimize(&prob, &[5.0], &LmConfig::default()).unwrap();
        assert!(fit.params[0].abs() < 1e-9);
    }

    #[test]
    fn reports_non_convergence() {
        let cfg = LmConfig { max_iterations: 2, ..LmConfig::default() };
        let prob = Problem::unbounded(|x: &[f64]| Ok(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]), vec![1.0, 1.0]);
        match minimize(&prob, &[-1.2, 1.0], &cfg) {
            Err(LmError::NonConvergence { trace, iterations, .. }) => {
                assert_eq!(iterations, 2);
                assert!(!trace.is_empty());
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn model_error_propagates() {
        let prob = Problem::unbounded(|_: &[f64]| Err("boom".to_string()), vec![1.0]);
        assert!(matches!(minimize(&prob, &[0.0], &LmConfig::default()), Err(LmError::Model { .. })));
    }
}
