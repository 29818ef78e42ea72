use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::paths::PathBundle;
use crate::rng::path_rng;

/// Correlated geometric Brownian motion under the risk-neutral measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmSpec {
    pub s0: Vec<f64>,
    pub rate: f64,
    pub vols: Vec<f64>,
    pub corr: Vec<Vec<f64>>,
}

impl GbmSpec {
    pub fn univariate(s0: f64, rate: f64, vol: f64) -> Self {
        GbmSpec {
            s0: vec![s0],
            rate,
            vols: vec![vol],
            corr: vec![vec![1.0]],
        }
    }

    pub fn bivariate(s0: [f64; 2], rate: f64, vols: [f64; 2], rho: f64) -> Self {
        GbmSpec {
            s0: s0.to_vec(),
            rate,
            vols: vols.to_vec(),
            corr: vec![vec![1.0, rho], vec![rho, 1.0]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.s0.len();
        if d == 0 || self.vols.len() != d || self.corr.len() != d || self.corr.iter().any(|r| r.len() != d) {
            return Err(Error::Config("model: s0, vols and corr must share dimension d >= 1".into()));
        }
        if self.s0.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("model.s0 must be positive".into()));
        }
        if self.vols.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("model.vols must be nonnegative".into()));
        }
        if !self.rate.is_finite() {
            return Err(Error::Config("model.rate must be finite".into()));
        }
        Ok(())
    }
}

/// Square-root factor `L` with `L L^T = corr`: Cholesky when it succeeds,
/// otherwise eigen-decomposition with negative eigenvalues clipped to zero.
/// Eigenvalues below `-1e-8` are rejected.
pub fn correlation_factor(corr: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = corr.len();
    let m = DMatrix::from_fn(d, d, |i, j| corr[i][j]);
    for i in 0..d {
        if (m[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("model.corr[{i}][{i}] must be 1")));
        }
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 {
                return Err(Error::Config("model.corr must be symmetric".into()));
            }
            if m[(i, j)].abs() > 1.0 {
                return Err(Error::Config("model.corr entries must lie in [-1, 1]".into()));
            }
        }
    }
    if let Some(chol) = m.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = SymmetricEigen::new(m);
    let min = eig.eigenvalues.min();
    if min < -1e-8 {
        return Err(Error::Numerical(format!(
            "correlation matrix is not positive semidefinite (eigenvalue {min:e})"
        )));
    }
    let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt))
}

/// Exact log scheme: `S_t = s0 exp((r - σ²/2) t + σ W_t)` with `W` built from
/// correlated increments on the fine grid.
pub fn simulate_gbm(spec: &GbmSpec, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<PathBundle> {
    spec.validate()?;
    grid.validate()?;
    let factor = correlation_factor(&spec.corr)?;
    let d = spec.s0.len();
    let t_max = grid.num_exercise_dates;
    let stride = (t_max + 1) * d;
    let sqrt_dt = grid.dt_years.sqrt();
    let mut values = vec![0.0; n_paths * stride];
    values.par_chunks_mut(stride).enumerate().for_each(|(n, out)| {
        let mut rng = path_rng(seed, n as u64);
        let mut w = vec![0.0; d];
        let mut z = vec![0.0; d];
        out[..d].copy_from_slice(&spec.s0);
        for t in 1..=t_max {
            for _ in 0..grid.steps_per_exercise {
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                for i in 0..d {
                    let mut inc = 0.0;
                    for k in 0..d {
                        inc += factor[(i, k)] * z[k];
                    }
                    w[i] += inc * sqrt_dt;
                }
            }
            let time = grid.fine_time(t * grid.steps_per_exercise);
            for i in 0..d {
                let sigma = spec.vols[i];
                out[t * d + i] = spec.s0[i] * ((spec.rate - 0.5 * sigma * sigma) * time + sigma * w[i]).exp();
            }
        }
    });
    let factor = (-spec.rate * grid.period_years()).exp();
    PathBundle::with_constant_accrual(n_paths, t_max, d, values, factor)
}
