//! Deterministic population dynamics under piecewise-constant rate matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::rates::RateMatrix;
use crate::error::{Error, Result};

/// Conservation tolerance relative to the largest rate, used when accepting a matrix.
const MATRIX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationVector(pub Vec<f64>);

impl PopulationVector {
    /// All population in manifold `index`.
    pub fn pure(n: usize, index: usize) -> Self {
        let mut v = vec![0.0; n];
        v[index] = 1.0;
        Self(v)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.0.iter().any(|&p| !(-tol..=1.0 + tol).contains(&p)) {
            return Err(Error::constraint("population", "entries must lie in [0, 1]"));
        }
        if (self.total() - 1.0).abs() > tol {
            return Err(Error::constraint("population", format!("sums to {}", self.total())));
        }
        Ok(())
    }

    fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

/// Exact propagator `exp(M·dt)` for one rate matrix and step, plus the time integral
/// `∫₀^dt exp(M·s) ds` for bin-averaged observables.
#[derive(Debug, Clone)]
pub struct Propagator {
    step: DMatrix<f64>,
    integral: DMatrix<f64>,
    pub dt: f64,
}

impl Propagator {
    pub fn new(matrix: &RateMatrix, dt: f64) -> Result<Self> {
        matrix.check_conservative(MATRIX_TOL)?;
        let n = matrix.dim();
        // exp([[M, 0], [I, 0]] dt) = [[e^{M dt}, 0], [∫ e^{M s} ds, I]]
        let mut aug = DMatrix::zeros(2 * n, 2 * n);
        aug.view_mut((0, 0), (n, n)).copy_from(&(&matrix.matrix * dt));
        for i in 0..n {
            aug[(n + i, i)] = dt;
        }
        let e = aug.exp();
        Ok(Self {
            step: e.view((0, 0), (n, n)).into_owned(),
            integral: e.view((n, 0), (n, n)).into_owned(),
            dt,
        })
    }

    pub fn advance(&self, p: &PopulationVector) -> PopulationVector {
        PopulationVector((&self.step * p.to_dvector()).iter().copied().collect())
    }

    /// Time integral of the populations over the next step.
    pub fn integrate(&self, p: &PopulationVector) -> Vec<f64> {
        (&self.integral * p.to_dvector()).iter().copied().collect()
    }
}

/// Solves `dp/dt = M·p` over `duration` from `p0`.
pub fn evolve_populations(matrix: &RateMatrix, p0: &PopulationVector, duration: f64) -> Result<PopulationVector> {
    if p0.0.len() != matrix.dim() {
        return Err(Error::constraint("population", "length does not match the rate matrix"));
    }
    p0.validate(1e-9)?;
    if duration == 0.0 {
        return Ok(p0.clone());
    }
    Ok(Propagator::new(matrix, duration)?.advance(p0))
}

/// Samples the populations at `steps + 1` equally spaced times across `duration`, and the
/// per-step time integrals.
pub fn evolve_sampled(
    matrix: &RateMatrix,
    p0: &PopulationVector,
    duration: f64,
    steps: usize,
) -> Result<(Vec<PopulationVector>, Vec<Vec<f64>>)> {
    let prop = Propagator::new(matrix, duration / steps as f64)?;
    let mut p = p0.clone();
    let mut samples = vec![p.clone()];
    let mut integrals = Vec::with_capacity(steps);
    for _ in 0..steps {
        integrals.push(prop.integrate(&p));
        p = prop.advance(&p);
        samples.push(p.clone());
    }
    Ok((samples, integrals))
}

/// Null vector of `M` normalized to unit total population.
///
/// Fails when the dynamics has more than one closed class (for example two ground
/// manifolds with no drive connecting them), since the steady state is then not unique.
pub fn steady_state(matrix: &RateMatrix) -> Result<PopulationVector> {
    matrix.check_conservative(MATRIX_TOL)?;
    let n = matrix.dim();
    let scale = matrix.max_rate().max(1.0);
    let mut a = &matrix.matrix / scale;
    let mut rhs = DVector::zeros(n);
    for j in 0..n {
        a[(0, j)] = 1.0;
    }
    rhs[0] = 1.0;
    let lu = a.lu();
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("steady state is not unique".into()))?;
    let residual = (&matrix.matrix / scale) * &x;
    if x.iter().any(|v| !v.is_finite()) || residual.amax() > 1e-8 {
        return Err(Error::Numerical("steady state is not unique".into()));
    }
    Ok(PopulationVector(x.iter().map(|&v| v.max(0.0)).collect()))
}
