//! Risk-neutral path simulators.

mod gbm;
mod hn;
mod lmm;

pub use gbm::{correlation_factor, simulate_gbm, GbmSpec};
pub use hn::{hn_long_run_vol, risk_neutralize_hn, simulate_hn, HnSpec};
pub use lmm::{simulate_lmm, simulate_lmm_with_stats, LmmSpec, LmmStats};

use crate::error::Result;
use crate::grid::TimeGrid;
use crate::lattice::Lattice;
use crate::paths::PathBundle;

/// Anything that produces a [`PathBundle`] from `(grid, n_paths, seed)`.
pub trait PathModel: Send + Sync {
    fn dim(&self) -> usize;
    fn simulate(&self, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<PathBundle>;
}

impl PathModel for GbmSpec {
    fn dim(&self) -> usize {
        self.s0.len()
    }

    fn simulate(&self, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<PathBundle> {
        simulate_gbm(self, grid, n_paths, seed)
    }
}

impl PathModel for LmmSpec {
    fn dim(&self) -> usize {
        self.initial_forwards.len()
    }

    fn simulate(&self, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<PathBundle> {
        simulate_lmm(self, grid, n_paths, seed)
    }
}

impl PathModel for HnSpec {
    fn dim(&self) -> usize {
        1
    }

    fn simulate(&self, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<PathBundle> {
        simulate_hn(self, grid, n_paths, seed)
    }
}

impl PathModel for Lattice {
    fn dim(&self) -> usize {
        Lattice::dim(self)
    }

    /// Walks the tree; the grid must have as many exercise dates as the lattice.
    fn simulate(&self, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<PathBundle> {
        if grid.num_exercise_dates != self.horizon() {
            return Err(crate::error::Error::Config(format!(
                "grid has {} exercise dates, lattice has {}",
                grid.num_exercise_dates,
                self.horizon()
            )));
        }
        Ok(self.sample(n_paths, seed)?.0)
    }
}
