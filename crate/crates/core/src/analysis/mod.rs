//! Curve fitting for the measurement pipelines, peak finding and two-ion parity.

mod lm;
mod peaks;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lm::{least_squares, linear_least_squares, FitResult, FitStatus};
pub use peaks::{find_peaks, Peak, PeakSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSeries {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
    pub x_label: String,
    pub y_label: String,
}

impl DataSeries {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y, sigma: None, x_label: "x".into(), y_label: "y".into() }
    }

    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn with_labels(mut self, x: &str, y: &str) -> Self {
        self.x_label = x.into();
        self.y_label = y.into();
        self
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(Error::constraint("series", "x and y lengths differ"));
        }
        if let Some(s) = &self.sigma {
            if s.len() != self.x.len() || s.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::constraint("sigma", "one positive entry per point required"));
            }
        }
        if self.x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::constraint("x", "must be strictly increasing"));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{}", self.x_label, self.y_label);
        if self.sigma.is_some() {
            out.push_str(&format!(",{}_sigma", self.y_label));
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!("{},{}", self.x[i], self.y[i]));
            if let Some(s) = &self.sigma {
                out.push_str(&format!(",{}", s[i]));
            }
            out.push('\n');
        }
        out
    }
}

fn is_flat(y: &[f64]) -> bool {
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    max - min <= 1e-12 * max.abs().max(min.abs()).max(1e-300)
}

fn degenerate(names: &[&str], values: Vec<f64>) -> FitResult {
    let k = names.len();
    FitResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        values,
        covariance: vec![vec![f64::NAN; k]; k],
        chi2: 0.0,
        reduced_chi2: 0.0,
        status: FitStatus::Degenerate,
        iterations: 0,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `y = A·exp(−b·x) + c`.
pub fn fit_exponential_decay(series: &DataSeries) -> Result<FitResult> {
    series.validate()?;
    if series.len() < 4 {
        return Err(Error::InsufficientData("exponential fit needs at least 4 points".into()));
    }
    let names = ["A", "b", "c"];
    let (x, y) = (&series.x, &series.y);
    if is_flat(y) {
        return Ok(degenerate(&names, vec![0.0, 0.0, mean(y)]));
    }
    let n = y.len();
    let tail = (n / 10).max(2);
    let c0 = mean(&y[n - tail..]);
    let head = mean(&y[..tail.min(n)]);
    let a0 = head - c0;
    // log-linear regression on the background-subtracted points well above the background
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, v)| (*v - c0) * a0.signum() > 0.1 * a0.abs())
        .map(|(x, v)| (*x, ((v - c0) / a0).ln()))
        .collect();
    let b0 = if pts.len() >= 2 {
        let (mx, my) = (mean(&pts.iter().map(|p| p.0).collect::<Vec<_>>()), mean(&pts.iter().map(|p| p.1).collect::<Vec<_>>()));
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        -sxy / sxx
    } else {
        f64::NAN
    };
    let span = x[n - 1] - x[0];
    let b0 = if b0.is_finite() && b0 > 0.0 { b0 } else { 3.0 / span };
    let a0 = a0 * (b0 * x[0]).exp();
    let fit = least_squares(|t, p| p[0] * (-p[1] * t).exp() + p[2], x, y, series.sigma.as_deref(), &[a0, b0, c0], &names);
    Ok(fit)
}

/// Saturation curve fit and the branching ratio derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingFit {
    /// Parameters `p_sat` (same unit as p) and `gammaR` (s⁻¹).
    pub fit: FitResult,
    pub r: f64,
    pub r_stderr: f64,
    /// Part of `r_stderr` from the fit alone.
    pub r_stderr_fit: f64,
}

/// Fits `p = 2·b·p_sat / (γR − 2b)` to `(b, p, σ_p)` and derives `R = γR/γ`. The
/// uncertainty of R combines the fit covariance with γ's relative uncertainty in quadrature.
pub fn fit_branching_saturation(points: &[(f64, f64, f64)], gamma: f64, gamma_rel_uncertainty: f64) -> Result<BranchingFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData("saturation fit needs at least 3 points".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let b: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let p: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let s: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let b_max = b.iter().copied().fold(0.0, f64::max);

    // 1/p = (γR / 2p_sat)·(1/b) − 1/p_sat
    let inv_b: Vec<f64> = b.iter().map(|v| 1.0 / v).collect();
    let inv_p: Vec<f64> = p.iter().map(|v| 1.0 / v).collect();
    let (beta, _) = linear_least_squares(&[vec![1.0; b.len()], inv_b], &inv_p)
        .ok_or_else(|| Error::Fit("saturation linearization is singular".into()))?;
    let mut p_sat0 = -1.0 / beta[0];
    let mut g0 = 2.0 * p_sat0 * beta[1];
    if !(p_sat0 > 0.0 && g0 > 2.0 * b_max) {
        g0 = 2.5 * b_max;
        p_sat0 = mean(&p.iter().zip(&b).map(|(p, b)| p * (g0 - 2.0 * b) / (2.0 * b)).collect::<Vec<_>>());
    }
    // beyond the pole the model is undefined; the infinite residual makes the step rejected
    let model = |x: f64, q: &[f64]| {
        let den = q[1] - 2.0 * x;
        if den <= 0.0 {
            f64::INFINITY
        } else {
            2.0 * x * q[0] / den
        }
    };
    let fit = least_squares(model, &b, &p, Some(&s), &[p_sat0, g0], &["p_sat", "gammaR"]);
    let g = fit.value("gammaR");
    if !(g > 2.0 * b_max) || !fit.values.iter().all(|v| v.is_finite()) {
        return Err(Error::Fit(format!("γR iterate {g:e} fell below 2·max(b) = {:e}", 2.0 * b_max)));
    }
    let r = g / gamma;
    let r_stderr_fit = fit.stderr("gammaR") / gamma;
    let r_stderr = (r_stderr_fit.powi(2) + (r * gamma_rel_uncertainty).powi(2)).sqrt();
    Ok(BranchingFit { fit, r, r_stderr, r_stderr_fit })
}

/// Best-fit amplitude, phase and offset at fixed frequency by linear least squares.
/// Returns `(amplitude, amplitude stderr, phase, offset)`.
pub fn fixed_frequency_amplitude(x: &[f64], y: &[f64], frequency: f64) -> Option<(f64, f64, f64, f64)> {
    let c: Vec<f64> = x.iter().map(|t| (2.0 * PI * frequency * t).cos()).collect();
    let s: Vec<f64> = x.iter().map(|t| (2.0 * PI * frequency * t).sin()).collect();
    let (beta, cov) = linear_least_squares(&[vec![1.0; x.len()], c, s], y)?;
    let (a, b) = (beta[1], beta[2]);
    let amp = a.hypot(b);
    // y = off + a cos + b sin = off + amp cos(θ + φ) with φ = atan2(−b, a)
    let var = if amp > 0.0 {
        (a * a * cov[1][1] + b * b * cov[2][2] + 2.0 * a * b * cov[1][2]) / (amp * amp)
    } else {
        0.5 * (cov[1][1] + cov[2][2])
    };
    Some((amp, var.max(0.0).sqrt(), (-b).atan2(a), beta[0]))
}

/// `y = offset + A·cos(2πf·x + φ)`, with A ≥ 0 and φ in (−π, π].
pub fn fit_sinusoid(series: &DataSeries) -> Result<FitResult> {
    series.validate()?;
    let names = ["A", "f", "phi", "offset"];
    if series.len() < 8 {
        return Err(Error::InsufficientData("sinusoid fit needs at least 8 points".into()));
    }
    let (x, y) = (&series.x, &series.y);
    if is_flat(y) {
        return Ok(degenerate(&names, vec![0.0, 0.0, 0.0, mean(y)]));
    }
    let n = x.len();
    let span = x[n - 1] - x[0];
    let dx_min = x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    // stay clear of the Nyquist frequency, where the sine column vanishes
    let f_max = 0.45 / dx_min;
    let f_min = 0.25 / span;
    // coarse periodogram ranked by explained variance, oversampled 10× relative to 1/span
    let steps = (((f_max - f_min) * span * 10.0).ceil() as usize).clamp(10, 200_000);
    let mut best = (f64::INFINITY, 0.0, f_min, 0.0, 0.0);
    for i in 0..=steps {
        let f = f_min + (f_max - f_min) * i as f64 / steps as f64;
        if let Some((amp, _, phi, off)) = fixed_frequency_amplitude(x, y, f) {
            let rss: f64 = x
                .iter()
                .zip(y)
                .map(|(t, v)| (v - off - amp * (2.0 * PI * f * t + phi).cos()).powi(2))
                .sum();
            if rss < best.0 {
                best = (rss, amp, f, phi, off);
            }
        }
    }
    let (_, a0, f0, phi0, off0) = best;
    let model = |t: f64, p: &[f64]| p[3] + p[0] * (2.0 * PI * p[1] * t + p[2]).cos();
    let mut fit = least_squares(model, x, y, series.sigma.as_deref(), &[a0, f0, phi0, off0], &names);
    if fit.values[0] < 0.0 {
        fit.values[0] = -fit.values[0];
        fit.values[2] += PI;
        for i in 0..4 {
            if i != 0 {
                fit.covariance[0][i] = -fit.covariance[0][i];
                fit.covariance[i][0] = -fit.covariance[i][0];
            }
        }
    }
    fit.values[2] = (fit.values[2] + PI).rem_euclid(2.0 * PI) - PI;
    if fit.values[1] * span < 1.0 {
        return Err(Error::UnderConstrained(format!(
            "data span {span:e} covers {:.3} periods, at least one is required",
            fit.values[1] * span
        )));
    }
    // a fringe lost in the noise is reported but marked
    let resid_sd = (fit.chi2 / (n - 4) as f64).sqrt();
    if series.sigma.is_none() && fit.values[0] < 1e-9 * resid_sd.max(1e-300) {
        fit.status = FitStatus::Degenerate;
    }
    Ok(fit)
}

/// `A(T) = A0·exp(−(T/τ)²)`.
pub fn fit_gaussian_decay(series: &DataSeries) -> Result<FitResult> {
    series.validate()?;
    let names = ["A0", "tau"];
    if series.len() < 3 {
        return Err(Error::InsufficientData("gaussian decay fit needs at least 3 points".into()));
    }
    let (x, y) = (&series.x, &series.y);
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, v)| **v > 0.0).map(|(t, v)| (t * t, v.ln())).collect();
    let slope = if pts.len() >= 2 {
        let mx = mean(&pts.iter().map(|p| p.0).collect::<Vec<_>>());
        let my = mean(&pts.iter().map(|p| p.1).collect::<Vec<_>>());
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        (sxy / sxx, my - sxy / sxx * mx)
    } else {
        (f64::NAN, f64::NAN)
    };
    if !(slope.0 < 0.0) {
        return Ok(degenerate(&names, vec![mean(y), f64::INFINITY]));
    }
    let tau0 = (-1.0 / slope.0).sqrt();
    let a0 = slope.1.exp();
    let mut fit = least_squares(
        |t, p| p[0] * (-(t / p[1]).powi(2)).exp(),
        x,
        y,
        series.sigma.as_deref(),
        &[a0, tau0],
        &names,
    );
    fit.values[1] = fit.values[1].abs();
    let t_max = x.iter().copied().fold(0.0, f64::max);
    if fit.values[1] > 100.0 * t_max {
        fit.status = FitStatus::Degenerate;
    }
    Ok(fit)
}

/// Mean over shots of +1 for equal outcomes and −1 otherwise.
pub fn parity(pairs: &[(bool, bool)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("parity of no shots".into()));
    }
    let s: i64 = pairs.iter().map(|(a, b)| if a == b { 1 } else { -1 }).sum();
    Ok(s as f64 / pairs.len() as f64)
}
