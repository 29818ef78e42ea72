use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::paths::PathBundle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DiscountSpec {
    /// Flat continuously-compounded rate; per-period factor `exp(-r * period)`.
    ConstantRate { annual_rate: f64, period_years: f64 },
    /// Per-path factors taken from [`PathBundle::accrual`].
    PathAccrual,
}

impl DiscountSpec {
    pub fn constant(annual_rate: f64, grid: &TimeGrid) -> Self {
        DiscountSpec::ConstantRate {
            annual_rate,
            period_years: grid.period_years(),
        }
    }

    /// Factor for period `t -> t+1` on `path`.
    pub fn period_factor(&self, paths: &PathBundle, path: usize, t: usize) -> f64 {
        match *self {
            DiscountSpec::ConstantRate {
                annual_rate,
                period_years,
            } => (-annual_rate * period_years).exp(),
            DiscountSpec::PathAccrual => paths.accrual(path, t),
        }
    }
}

/// Product of per-period discount factors over `[from, to)` on one path.
pub fn cumulative_discount(
    spec: &DiscountSpec,
    paths: &PathBundle,
    from: usize,
    to: usize,
    path: usize,
) -> Result<f64> {
    if from > to {
        return Err(Error::Argument(format!("discount interval reversed: {from} > {to}")));
    }
    if to > paths.num_dates() {
        return Err(Error::Argument(format!(
            "discount date {to} beyond horizon {}",
            paths.num_dates()
        )));
    }
    if path >= paths.n_paths() {
        return Err(Error::Argument(format!("path index {path} out of range")));
    }
    Ok(match *spec {
        DiscountSpec::ConstantRate {
            annual_rate,
            period_years,
        } => (-annual_rate * period_years * (to - from) as f64).exp(),
        DiscountSpec::PathAccrual => (from..to).map(|t| paths.accrual(path, t)).product(),
    })
}
