//! Log-Euler simulation of forward LIBOR rates under the spot LIBOR measure.
//!
//! Rates `L_0..L_M` cover consecutive accrual periods of length `δ`, with
//! `L_i` resetting at `T_i = iδ`. `L_0` is the current spot rate. Between resets
//! the live rates `L_{i(t)}..L_M` evolve jointly with the shared factor shock;
//! a rate is frozen once it resets. The volatility of `L_i` at time `t` is row
//! `b` of the matrix, where the time to reset `T_i - t` lies in `(T_{b-1}, T_b]`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::paths::PathBundle;
use crate::rng::{derive_seed, path_rng};

/// Fraction of paths allowed to break down before a run is aborted.
const MAX_RESAMPLE_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmSpec {
    /// `L_0` (spot) followed by the forward rates `L_1..L_M`.
    pub initial_forwards: Vec<f64>,
    /// Accrual length `δ` in years.
    #[serde(default = "quarter")]
    pub accrual: f64,
    /// `M x F` matrix: row `b` is the factor loading for time-to-reset band `b`.
    pub vol_matrix: Vec<Vec<f64>>,
}

fn quarter() -> f64 {
    0.25
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LmmStats {
    pub resampled_paths: usize,
}

impl LmmSpec {
    pub fn n_rates(&self) -> usize {
        self.initial_forwards.len().saturating_sub(1)
    }

    pub fn n_factors(&self) -> usize {
        self.vol_matrix.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.n_rates();
        if m == 0 {
            return Err(Error::Config("model.initial_forwards needs the spot rate and at least one forward".into()));
        }
        if !(self.accrual > 0.0 && self.accrual.is_finite()) {
            return Err(Error::Config("model.accrual must be positive".into()));
        }
        if self.vol_matrix.len() != m {
            return Err(Error::Config(format!(
                "model.vol_matrix has {} rows, expected one per forward rate ({m})",
                self.vol_matrix.len()
            )));
        }
        let f = self.n_factors();
        if f == 0 || self.vol_matrix.iter().any(|r| r.len() != f || r.iter().any(|v| !v.is_finite())) {
            return Err(Error::Config("model.vol_matrix must be a finite rectangular matrix".into()));
        }
        for (i, l) in self.initial_forwards.iter().enumerate() {
            if !l.is_finite() || 1.0 + self.accrual * l <= 0.0 {
                return Err(Error::Config(format!("model.initial_forwards[{i}] must keep 1 + δL > 0")));
            }
            if *l <= 0.0 {
                return Err(Error::Config(format!(
                    "model.initial_forwards[{i}] must be positive for lognormal dynamics"
                )));
            }
        }
        Ok(())
    }

    /// Fine steps per accrual period for step length `dt`.
    pub fn steps_per_accrual(&self, dt: f64) -> Result<usize> {
        let ratio = self.accrual / dt;
        let m = ratio.round();
        if m < 1.0 || (ratio - m).abs() > 1e-6 * ratio {
            return Err(Error::Config(format!(
                "accrual {} is not an integer multiple of the fine step {dt}",
                self.accrual
            )));
        }
        Ok(m as usize)
    }

    /// Index of the first live rate during fine step `k`.
    pub fn first_live(k: usize, steps_per_accrual: usize) -> usize {
        k / steps_per_accrual + 1
    }

    /// Volatility row (0-based) for rate `i` during fine step `k`.
    pub fn vol_band(i: usize, k: usize, steps_per_accrual: usize) -> usize {
        let remaining = i * steps_per_accrual - k; // > 0 for live rates
        remaining.div_ceil(steps_per_accrual) - 1
    }

    /// One Euler step `k -> k+1` of the log rates, given the factor shock `eps`.
    pub fn euler_step(&self, k: usize, steps_per_accrual: usize, dt: f64, rates: &mut [f64], eps: &[f64]) {
        let m = self.n_rates();
        let first = Self::first_live(k, steps_per_accrual);
        if first > m {
            return;
        }
        let f = self.n_factors();
        let sqrt_dt = dt.sqrt();
        let delta = self.accrual;
        // Drift sum accumulates sum_{j=first}^{i} δL_j/(1+δL_j) σ_j over live rates.
        let mut acc = vec![0.0; f];
        let mut updates = Vec::with_capacity(m + 1 - first);
        for i in first..=m {
            let sigma = &self.vol_matrix[Self::vol_band(i, k, steps_per_accrual)];
            let weight = delta * rates[i] / (1.0 + delta * rates[i]);
            for (a, s) in acc.iter_mut().zip(sigma) {
                *a += weight * s;
            }
            let mut drift = 0.0;
            let mut norm2 = 0.0;
            let mut shock = 0.0;
            for q in 0..f {
                drift += acc[q] * sigma[q];
                norm2 += sigma[q] * sigma[q];
                shock += sigma[q] * eps[q];
            }
            updates.push((drift - 0.5 * norm2) * dt + shock * sqrt_dt);
        }
        for (i, u) in (first..=m).zip(updates) {
            rates[i] *= u.exp();
        }
    }

    /// Discount factor over fine step `k`: the rate that reset last, compounded
    /// as `(1 + δL)^{-dt/δ}`.
    pub fn step_discount(&self, k: usize, steps_per_accrual: usize, rates: &[f64]) -> f64 {
        let spot = (k / steps_per_accrual).min(self.n_rates());
        (1.0 + self.accrual * rates[spot]).powf(-1.0 / steps_per_accrual as f64)
    }

    fn simulate_path(
        &self,
        grid: &TimeGrid,
        steps_per_accrual: usize,
        seed: u64,
        stream: u64,
        out: &mut [f64],
        accrual_out: &mut [f64],
    ) -> bool {
        let d = self.initial_forwards.len();
        let f = self.n_factors();
        let mut rng = path_rng(seed, stream);
        let mut rates = self.initial_forwards.clone();
        let mut eps = vec![0.0; f];
        out[..d].copy_from_slice(&rates);
        let mut k = 0;
        for t in 1..=grid.num_exercise_dates {
            let mut df = 1.0;
            for _ in 0..grid.steps_per_exercise {
                df *= self.step_discount(k, steps_per_accrual, &rates);
                for e in eps.iter_mut() {
                    *e = rng.sample(StandardNormal);
                }
                self.euler_step(k, steps_per_accrual, grid.dt_years, &mut rates, &eps);
                k += 1;
            }
            if rates.iter().any(|l| !l.is_finite() || 1.0 + self.accrual * l <= 0.0) || !(df > 0.0) {
                return false;
            }
            out[t * d..(t + 1) * d].copy_from_slice(&rates);
            accrual_out[t - 1] = df;
        }
        true
    }
}

pub fn simulate_lmm(spec: &LmmSpec, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<PathBundle> {
    simulate_lmm_with_stats(spec, grid, n_paths, seed).map(|(b, _)| b)
}

/// Simulates and reports how many paths had to be redrawn after a breakdown.
/// Redraws use a fresh seed derived from `(seed, attempt)` on the same stream.
pub fn simulate_lmm_with_stats(
    spec: &LmmSpec,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<(PathBundle, LmmStats)> {
    spec.validate()?;
    grid.validate()?;
    let spa = spec.steps_per_accrual(grid.dt_years)?;
    let horizon_steps = (spec.n_rates() + 1) * spa;
    if grid.total_steps() > horizon_steps {
        return Err(Error::Config(format!(
            "grid spans {} fine steps but the rate strip only covers {horizon_steps}",
            grid.total_steps()
        )));
    }
    let d = spec.initial_forwards.len();
    let t_max = grid.num_exercise_dates;
    let stride = (t_max + 1) * d;
    let mut values = vec![0.0; n_paths * stride];
    let mut accrual = vec![0.0; n_paths * t_max];
    const MAX_ATTEMPTS: u64 = 16;
    let redraws: Vec<u64> = values
        .par_chunks_mut(stride)
        .zip(accrual.par_chunks_mut(t_max))
        .enumerate()
        .map(|(n, (out, acc))| {
            let mut attempt = 0u64;
            loop {
                let s = if attempt == 0 { seed } else { derive_seed(seed, attempt) };
                if spec.simulate_path(grid, spa, s, n as u64, out, acc) || attempt >= MAX_ATTEMPTS {
                    return attempt;
                }
                attempt += 1;
            }
        })
        .collect();
    let resampled = redraws.iter().filter(|a| **a > 0).count();
    if redraws.iter().any(|a| *a >= MAX_ATTEMPTS) || resampled as f64 > MAX_RESAMPLE_FRACTION * n_paths as f64 {
        return Err(Error::Numerical(format!(
            "LMM Euler scheme broke down on {resampled} of {n_paths} paths"
        )));
    }
    let bundle = PathBundle::new(n_paths, t_max, d, values, accrual)?;
    Ok((
        bundle,
        LmmStats {
            resampled_paths: resampled,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn printed_vol_matrix() -> Vec<Vec<f64>> {
        vec![
            vec![0.024063776, 0.024267981, 0.007801289],
            vec![0.033758193, 0.018222734, -0.001039692],
            vec![0.040538115, 0.007111945, -0.006052515],
            vec![0.043033555, -0.004846372, -0.004629562],
        ]
    }

    #[test]
    fn zero_vol_rates_are_constant() {
        let spec = LmmSpec {
            initial_forwards: vec![0.006, 0.007, 0.008, 0.009, 0.01],
            accrual: 0.25,
            vol_matrix: vec![vec![0.0; 3]; 4],
        };
        let grid = TimeGrid::new(4, 90, 1.0 / 360.0).unwrap();
        let p = simulate_lmm(&spec, &grid, 20, 5).unwrap();
        for n in 0..20 {
            for t in 0..=4 {
                assert_eq!(p.state(n, t), spec.initial_forwards.as_slice());
            }
        }
    }

    #[test]
    fn band_and_live_index() {
        // 90 steps per quarter
        assert_eq!(LmmSpec::first_live(0, 90), 1);
        assert_eq!(LmmSpec::first_live(89, 90), 1);
        assert_eq!(LmmSpec::first_live(90, 90), 2);
        assert_eq!(LmmSpec::vol_band(1, 0, 90), 0);
        assert_eq!(LmmSpec::vol_band(4, 0, 90), 3);
        assert_eq!(LmmSpec::vol_band(4, 89, 90), 3);
        assert_eq!(LmmSpec::vol_band(4, 90, 90), 2);
        assert_eq!(LmmSpec::vol_band(4, 359, 90), 0);
    }

    #[test]
    fn one_factor_hand_euler() {
        let sigma = 0.3;
        let spec = LmmSpec {
            initial_forwards: vec![0.04, 0.05],
            accrual: 0.25,
            vol_matrix: vec![vec![sigma]],
        };
        let dt = 0.25 / 90.0;
        let grid = TimeGrid::new(2, 1, dt).unwrap();
        let p = simulate_lmm(&spec, &grid, 1, 77).unwrap();
        let mut rng = path_rng(77, 0);
        let mut l = 0.05;
        for t in 1..=2 {
            let eps: f64 = rng.sample(StandardNormal);
            let w = 0.25 * l / (1.0 + 0.25 * l);
            let drift = w * sigma * sigma - 0.5 * sigma * sigma;
            l *= (drift * dt + sigma * eps * dt.sqrt()).exp();
            assert!((p.value(0, t, 1) - l).abs() < 1e-15);
            assert_eq!(p.value(0, t, 0), 0.04);
        }
    }

    #[test]
    fn accrual_uses_last_reset_rate() {
        let spec = LmmSpec {
            initial_forwards: vec![0.04, 0.05],
            accrual: 0.25,
            vol_matrix: vec![vec![0.0]],
        };
        let grid = TimeGrid::new(2, 90, 0.25 / 90.0).unwrap();
        let p = simulate_lmm(&spec, &grid, 1, 1).unwrap();
        assert!((p.accrual(0, 0) - 1.0 / 1.01).abs() < 1e-13);
        assert!((p.accrual(0, 1) - 1.0 / 1.0125).abs() < 1e-13);
    }

    #[test]
    fn horizon_and_step_checked() {
        let spec = LmmSpec {
            initial_forwards: vec![0.01, 0.01],
            accrual: 0.25,
            vol_matrix: vec![vec![0.1]],
        };
        assert!(simulate_lmm(&spec, &TimeGrid::new(3, 90, 0.25 / 90.0).unwrap(), 1, 1).is_err());
        assert!(simulate_lmm(&spec, &TimeGrid::new(1, 7, 0.03).unwrap(), 1, 1).is_err());
        let mut bad = spec.clone();
        bad.vol_matrix = vec![vec![0.1], vec![0.2]];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn printed_matrix_runs_without_resampling() {
        let spec = LmmSpec {
            initial_forwards: vec![0.0058, 0.0062, 0.0068, 0.0075, 0.0083],
            accrual: 0.25,
            vol_matrix: printed_vol_matrix(),
        };
        let grid = TimeGrid::new(12, 30, 1.0 / 360.0).unwrap();
        let (p, stats) = simulate_lmm_with_stats(&spec, &grid, 200, 4).unwrap();
        assert_eq!(stats.resampled_paths, 0);
        assert_eq!(p.dim(), 5);
    }
}
