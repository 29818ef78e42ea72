//! Heston-Nandi GARCH(1,1) on a daily grid:
//!
//! ```text
//! log S_t = log S_{t-1} + r + λ h_t + sqrt(h_t) z_t
//! h_{t+1} = ω + β h_t + α (z_t - γ sqrt(h_t))²
//! ```

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::paths::PathBundle;
use crate::rng::path_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HnSpec {
    pub lambda: f64,
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
    pub r_daily: f64,
    pub s0: f64,
    /// Variance of the first simulated return; defaults to the long-run variance.
    #[serde(default)]
    pub sigma0_sq: Option<f64>,
}

impl HnSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("omega", self.omega), ("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("model.{name} must be nonnegative, got {v}")));
            }
        }
        if !(self.lambda.is_finite() && self.gamma.is_finite() && self.r_daily.is_finite()) {
            return Err(Error::Config("model.lambda, gamma and r_daily must be finite".into()));
        }
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(Error::Config("model.s0 must be positive".into()));
        }
        if let Some(v) = self.sigma0_sq {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config("model.sigma0_sq must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn persistence(&self) -> f64 {
        self.beta + self.alpha * self.gamma * self.gamma
    }

    /// `(ω + α) / (1 - β - αγ²)`, the stationary mean of `h_t`.
    pub fn long_run_daily_variance(&self) -> Result<f64> {
        let denom = 1.0 - self.persistence();
        if !(denom > 0.0) {
            return Err(Error::Numerical(format!(
                "nonstationary parameters: beta + alpha*gamma^2 = {} >= 1",
                self.persistence()
            )));
        }
        Ok((self.omega + self.alpha) / denom)
    }

    pub fn initial_variance(&self) -> Result<f64> {
        match self.sigma0_sq {
            Some(v) => Ok(v),
            None => self.long_run_daily_variance(),
        }
    }

    /// One day: returns `(log S_t, h_{t+1})` from `(log S_{t-1}, h_t)` and shock `z`.
    pub fn step(&self, log_s: f64, h: f64, z: f64) -> (f64, f64) {
        let sd = h.sqrt();
        let next_log = log_s + self.r_daily + self.lambda * h + sd * z;
        let shock = z - self.gamma * sd;
        let next_h = self.omega + self.beta * h + self.alpha * shock * shock;
        (next_log, next_h)
    }
}

/// Risk-neutral parameters: `λ -> -1/2`, `γ -> γ + λ + 1/2`.
pub fn risk_neutralize_hn(spec: &HnSpec) -> HnSpec {
    HnSpec {
        lambda: -0.5,
        gamma: spec.gamma + spec.lambda + 0.5,
        ..spec.clone()
    }
}

/// Long-run daily variance and its annualization `sqrt(day_count * variance)`.
pub fn hn_long_run_vol(spec: &HnSpec, day_count: u32) -> Result<(f64, f64)> {
    let v = spec.long_run_daily_variance()?;
    Ok((v, (day_count as f64 * v).sqrt()))
}

/// Daily simulation; each fine step of `grid` must be one trading day.
pub fn simulate_hn(spec: &HnSpec, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<PathBundle> {
    spec.validate()?;
    grid.validate()?;
    if (grid.dt_years * grid.day_count as f64 - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "Heston-Nandi needs one fine step per trading day (dt = 1/{})",
            grid.day_count
        )));
    }
    let h0 = spec.initial_variance()?;
    let t_max = grid.num_exercise_dates;
    let log_s0 = spec.s0.ln();
    let mut values = vec![0.0; n_paths * (t_max + 1)];
    values.par_chunks_mut(t_max + 1).enumerate().for_each(|(n, out)| {
        let mut rng = path_rng(seed, n as u64);
        let mut log_s = log_s0;
        let mut h = h0;
        out[0] = spec.s0;
        for slot in out.iter_mut().skip(1) {
            for _ in 0..grid.steps_per_exercise {
                let z: f64 = rng.sample(StandardNormal);
                (log_s, h) = spec.step(log_s, h, z);
            }
            *slot = log_s.exp();
        }
    });
    let factor = (-spec.r_daily * grid.steps_per_exercise as f64).exp();
    PathBundle::with_constant_accrual(n_paths, t_max, 1, values, factor)
}
