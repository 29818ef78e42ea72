use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exercise dates `0..=T` with `steps_per_exercise` fine simulation steps between
/// consecutive dates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub num_exercise_dates: usize,
    pub steps_per_exercise: usize,
    pub dt_years: f64,
    #[serde(default = "default_day_count")]
    pub day_count: u32,
}

fn default_day_count() -> u32 {
    252
}

impl TimeGrid {
    pub fn new(num_exercise_dates: usize, steps_per_exercise: usize, dt_years: f64) -> Result<Self> {
        let grid = TimeGrid {
            num_exercise_dates,
            steps_per_exercise,
            dt_years,
            day_count: default_day_count(),
        };
        grid.validate()?;
        Ok(grid)
    }

    /// One fine step per trading day, exercisable every day.
    pub fn daily(days: usize, day_count: u32) -> Result<Self> {
        let grid = TimeGrid {
            num_exercise_dates: days,
            steps_per_exercise: 1,
            dt_years: 1.0 / day_count as f64,
            day_count,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_exercise_dates < 1 {
            return Err(Error::Config("grid.num_exercise_dates must be >= 1".into()));
        }
        if self.steps_per_exercise < 1 {
            return Err(Error::Config("grid.steps_per_exercise must be >= 1".into()));
        }
        if !(self.dt_years > 0.0 && self.dt_years.is_finite()) {
            return Err(Error::Config("grid.dt_years must be positive".into()));
        }
        if self.day_count == 0 {
            return Err(Error::Config("grid.day_count must be positive".into()));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.num_exercise_dates * self.steps_per_exercise
    }

    /// Length of one exercise period in years.
    pub fn period_years(&self) -> f64 {
        self.steps_per_exercise as f64 * self.dt_years
    }

    pub fn maturity_years(&self) -> f64 {
        self.total_steps() as f64 * self.dt_years
    }

    /// Time in years of the fine step index `k` (0..=total_steps).
    pub fn fine_time(&self, k: usize) -> f64 {
        k as f64 * self.dt_years
    }
}
