//! Damped Gauss-Newton (Levenberg-Marquardt) least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

const MAX_ITERATIONS: usize = 200;
const STEP_TOL: f64 = 1e-8;
const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitStatus {
    Converged,
    /// The data do not constrain the model (flat, non-decaying, singular curvature).
    Degenerate,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub status: FitStatus,
    pub iterations: usize,
}

impl FitResult {
    pub fn converged(&self) -> bool {
        self.status == FitStatus::Converged
    }

    fn index(&self, name: &str) -> usize {
        self.names.iter().position(|n| n == name).unwrap_or_else(|| panic!("no fit parameter named {name}"))
    }

    pub fn value(&self, name: &str) -> f64 {
        self.values[self.index(name)]
    }

    pub fn stderr(&self, name: &str) -> f64 {
        let i = self.index(name);
        self.covariance[i][i].max(0.0).sqrt()
    }
}

/// Minimizes `Σ ((y − f(x; p)) / σ)²` from `p0`.
///
/// Parameters are internally scaled by `|p0|` so the numeric Jacobian step is relative.
/// When `sigma` is `None`, unit weights are used and the covariance is scaled by the
/// reduced chi-square.
pub fn least_squares<F>(model: F, x: &[f64], y: &[f64], sigma: Option<&[f64]>, p0: &[f64], names: &[&str]) -> FitResult
where
    F: Fn(f64, &[f64]) -> f64,
{
    let n = x.len();
    let k = p0.len();
    let scale: Vec<f64> = p0.iter().map(|v| if *v != 0.0 { v.abs() } else { 1.0 }).collect();
    let weights: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|v| 1.0 / v).collect(),
        None => vec![1.0; n],
    };
    let to_params = |u: &DVector<f64>| -> Vec<f64> { u.iter().zip(&scale).map(|(a, s)| a * s).collect() };
    let residuals = |u: &DVector<f64>| -> DVector<f64> {
        let p = to_params(u);
        DVector::from_iterator(n, (0..n).map(|i| (y[i] - model(x[i], &p)) * weights[i]))
    };
    let chi2_of = |r: &DVector<f64>| -> f64 {
        let c = r.norm_squared();
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    };
    let jacobian = |u: &DVector<f64>| -> DMatrix<f64> {
        let mut j = DMatrix::zeros(n, k);
        for c in 0..k {
            let h = JACOBIAN_STEP * u[c].abs().max(1e-3);
            let mut up = u.clone();
            up[c] += h;
            let mut down = u.clone();
            down[c] -= h;
            // residuals are y − f, so the model Jacobian is the negative difference
            let col = (residuals(&down) - residuals(&up)) / (2.0 * h);
            j.set_column(c, &col);
        }
        j
    };

    let mut u = DVector::from_iterator(k, p0.iter().zip(&scale).map(|(a, s)| a / s));
    let mut r = residuals(&u);
    let mut chi2 = chi2_of(&r);
    let mut lambda = 1e-3;
    let mut status = FitStatus::MaxIterations;
    let mut iterations = 0;
    let mut jac = jacobian(&u);

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        if chi2 == 0.0 {
            status = FitStatus::Converged;
            break;
        }
        let mut accepted = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for d in 0..k {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&g) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = &u + &step;
            let rc = residuals(&candidate);
            let c2 = chi2_of(&rc);
            if c2 <= chi2 {
                let rel = step.iter().zip(candidate.iter()).map(|(s, v)| s.abs() / v.abs().max(1e-3)).fold(0.0, f64::max);
                let small_gain = chi2 - c2 <= 1e-15 * chi2;
                u = candidate;
                r = rc;
                chi2 = c2;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < STEP_TOL || small_gain {
                    status = FitStatus::Converged;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step exists at any damping: a minimum to working precision
            status = FitStatus::Converged;
            break;
        }
        if status == FitStatus::Converged {
            break;
        }
        jac = jacobian(&u);
    }

    let dof = n.saturating_sub(k);
    let reduced = if dof > 0 { chi2 / dof as f64 } else { f64::NAN };
    let jac = jacobian(&u);
    let jtj = jac.transpose() * &jac;
    let cov_scale = if sigma.is_some() { 1.0 } else { reduced.max(0.0) };
    let (covariance, singular) = match jtj.clone().try_inverse() {
        Some(inv) if inv.iter().all(|v| v.is_finite()) => {
            let mut c = vec![vec![0.0; k]; k];
            for i in 0..k {
                for j in 0..k {
                    c[i][j] = inv[(i, j)] * scale[i] * scale[j] * cov_scale;
                }
            }
            (c, false)
        }
        _ => (vec![vec![f64::NAN; k]; k], true),
    };
    if singular {
        status = FitStatus::Degenerate;
    }
    FitResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        values: to_params(&u),
        covariance,
        chi2,
        reduced_chi2: reduced,
        status,
        iterations,
    }
}

/// Ordinary least squares `y ≈ A·β` over the given basis functions, with the
/// covariance of β scaled by the residual variance.
pub fn linear_least_squares(basis: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = y.len();
    let k = basis.len();
    let a = DMatrix::from_fn(n, k, |i, j| basis[j][i]);
    let yv = DVector::from_column_slice(y);
    let ata = a.transpose() * &a;
    let inv = ata.try_inverse()?;
    let beta = &inv * a.transpose() * &yv;
    let resid = &yv - &a * &beta;
    let s2 = if n > k { resid.norm_squared() / (n - k) as f64 } else { 0.0 };
    let cov = (0..k).map(|i| (0..k).map(|j| inv[(i, j)] * s2).collect()).collect();
    Some((beta.iter().copied().collect(), cov))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_a_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 2.0).collect();
        let fit = least_squares(|x, p| p[0] * x + p[1], &x, &y, None, &[1.0, 0.0], &["m", "c"]);
        assert!(fit.converged());
        assert!((fit.value("m") - 3.0).abs() < 1e-9);
        assert!((fit.value("c") + 2.0).abs() < 1e-8);
    }

    #[test]
    fn weighted_covariance_is_absolute() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = x.iter().map(|_| 1.0).collect();
        let sigma = vec![0.5; 50];
        let fit = least_squares(|_, p| p[0], &x, &y, Some(&sigma), &[0.3], &["c"]);
        assert!((fit.stderr("c") - 0.5 / 50f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn linear_solver_matches_direct() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.5 + 0.5 * v).collect();
        let (beta, _) = linear_least_squares(&[vec![1.0; 10], x.clone()], &y).unwrap();
        assert!((beta[0] - 1.5).abs() < 1e-12 && (beta[1] - 0.5).abs() < 1e-12);
    }
}
