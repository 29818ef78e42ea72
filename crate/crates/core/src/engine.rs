//! Backward induction over exercise dates with regressed continuation values.
//!
//! Cashflows are carried per path as the payoff at the path's current stopping
//! date, discounted back one period at a time, so memory stays linear in `N`.

use rayon::prelude::*;
use serde::Serialize;

use crate::basis::BasisSystem;
use crate::discount::DiscountSpec;
use crate::error::{Error, Result};
use crate::paths::PathBundle;
use crate::payoff::IntrinsicMatrix;
use crate::regression::{fit_continuation, DesignMatrix, RegressionFit};

/// Per-path exercise date in `1..=T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoppingRule {
    pub tau: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceEstimate {
    pub price: f64,
    /// Mean of the per-path cashflows discounted to date 0.
    pub continuation_mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    /// Intrinsic value at date 0.
    pub immediate: f64,
    #[serde(skip)]
    pub per_date_fits: Vec<RegressionFit>,
}

/// Result of the backward pass: the stopping rule, the fits for dates `T-1..=1`
/// (in that order), and every path's cashflow discounted to date 0.
#[derive(Debug, Clone)]
pub struct Induction {
    pub rule: StoppingRule,
    pub fits: Vec<RegressionFit>,
    pub discounted_cashflows: Vec<f64>,
}

fn check_shapes(z: &IntrinsicMatrix, paths: &PathBundle, basis: &dyn BasisSystem) -> Result<()> {
    if z.n_paths() != paths.n_paths() || z.num_dates() != paths.num_dates() {
        return Err(Error::Config(format!(
            "intrinsic matrix is {}x{} but paths are {}x{}",
            z.n_paths(),
            z.num_dates() + 1,
            paths.n_paths(),
            paths.num_dates() + 1
        )));
    }
    if paths.num_dates() == 0 {
        return Err(Error::Config("need at least one exercise date after 0".into()));
    }
    basis.check_dim(paths.dim())
}

pub fn backward_induction(
    z: &IntrinsicMatrix,
    paths: &PathBundle,
    basis: &dyn BasisSystem,
    discount: &DiscountSpec,
) -> Result<Induction> {
    check_shapes(z, paths, basis)?;
    let n = paths.n_paths();
    let t_max = paths.num_dates();
    let dim = paths.dim();

    let mut tau = vec![t_max; n];
    // Cashflow Z[n, tau[n]] discounted to the current date.
    let mut cash: Vec<f64> = (0..n).map(|i| z.get(i, t_max)).collect();
    let mut fits = Vec::with_capacity(t_max.saturating_sub(1));

    for t in (1..t_max).rev() {
        cash.par_iter_mut()
            .enumerate()
            .for_each(|(i, c)| *c *= discount.period_factor(paths, i, t));

        let k = basis.len(t);
        let mut design = DesignMatrix::zeros(n, k);
        design
            .data_mut()
            .par_chunks_mut(k)
            .enumerate()
            .for_each(|(i, row)| basis.evaluate(paths.prefix(i, t), dim, t, row));
        let mask: Vec<bool> = (0..n).map(|i| z.get(i, t) > 0.0).collect();

        let fit = fit_continuation(t, &design, &cash, &mask);
        tau.par_iter_mut()
            .zip(cash.par_iter_mut())
            .enumerate()
            .for_each(|(i, (tau_i, c))| {
                let exercise = z.get(i, t);
                if mask[i] && exercise >= fit.predict(design.row(i)) {
                    *tau_i = t;
                    *c = exercise;
                }
            });
        fits.push(fit);
    }
    cash.par_iter_mut()
        .enumerate()
        .for_each(|(i, c)| *c *= discount.period_factor(paths, i, 0));

    Ok(Induction {
        rule: StoppingRule { tau },
        fits,
        discounted_cashflows: cash,
    })
}

/// Least-squares price `max(Z_0, mean discounted cashflow)`.
pub fn price(
    z: &IntrinsicMatrix,
    paths: &PathBundle,
    basis: &dyn BasisSystem,
    discount: &DiscountSpec,
) -> Result<PriceEstimate> {
    let ind = backward_induction(z, paths, basis, discount)?;
    let immediate = z.get(0, 0);
    let (mean, sd) = mean_sd(&ind.discounted_cashflows);
    Ok(PriceEstimate {
        price: immediate.max(mean),
        continuation_mean: mean,
        std_error: sd / (ind.discounted_cashflows.len() as f64).sqrt(),
        n_paths: paths.n_paths(),
        immediate,
        per_date_fits: ind.fits,
    })
}

/// Discounted mean of the terminal payoff on the same paths (European value).
pub fn european_estimate(z: &IntrinsicMatrix, paths: &PathBundle, discount: &DiscountSpec) -> Result<(f64, f64)> {
    let t_max = paths.num_dates();
    let flows = (0..paths.n_paths())
        .map(|i| {
            crate::discount::cumulative_discount(discount, paths, 0, t_max, i).map(|d| d * z.get(i, t_max))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (m, sd) = mean_sd(&flows);
    Ok((m, sd / (flows.len() as f64).sqrt()))
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one sample).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
