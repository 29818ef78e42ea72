//! Simulate-and-price pipelines, repeated runs, kernel densities and CSV reports.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::basis::BasisSystem;
use crate::discount::DiscountSpec;
use crate::engine::{mean_sd, price, PriceEstimate};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::lattice::Lattice;
use crate::models::PathModel;
use crate::paths::PathBundle;
use crate::payoff::{intrinsic_matrix, IntrinsicMatrix, PayoffSpec};
use crate::rng::derive_seed;

/// Where paths and intrinsic values come from.
pub enum Source {
    Model {
        model: Box<dyn PathModel>,
        payoff: PayoffSpec,
    },
    /// Walks on an explicit tree; payoffs are read from the nodes.
    Lattice(Lattice),
}

pub struct Pipeline {
    pub source: Source,
    pub basis: Box<dyn BasisSystem>,
    pub grid: TimeGrid,
    pub discount: DiscountSpec,
}

impl Pipeline {
    pub fn simulate(&self, n_paths: usize, seed: u64) -> Result<(PathBundle, IntrinsicMatrix)> {
        if n_paths == 0 {
            return Err(Error::Config("run.n_paths must be at least 1".into()));
        }
        match &self.source {
            Source::Model { model, payoff } => {
                if payoff.dim() != model.dim() {
                    return Err(Error::Config(format!(
                        "payoff reads {} coordinates but the model has {}",
                        payoff.dim(),
                        model.dim()
                    )));
                }
                let paths = model.simulate(&self.grid, n_paths, seed)?;
                let z = intrinsic_matrix(&paths, payoff)?;
                Ok((paths, z))
            }
            Source::Lattice(lattice) => {
                if self.grid.num_exercise_dates != lattice.horizon() {
                    return Err(Error::Config(format!(
                        "grid has {} exercise dates, lattice has {}",
                        self.grid.num_exercise_dates,
                        lattice.horizon()
                    )));
                }
                let (paths, z, _) = lattice.sample(n_paths, seed)?;
                Ok((paths, z))
            }
        }
    }

    pub fn run(&self, n_paths: usize, seed: u64) -> Result<PriceEstimate> {
        let (paths, z) = self.simulate(n_paths, seed)?;
        price(&z, &paths, self.basis.as_ref(), &self.discount)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunDistribution {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub bandwidth: f64,
    pub density: Vec<(f64, f64)>,
}

impl RunDistribution {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let (mean, sd) = mean_sd(&samples);
        let bandwidth = silverman_bandwidth(&samples);
        let density = kernel_density(&samples, bandwidth, DENSITY_POINTS);
        RunDistribution {
            samples,
            mean,
            sd,
            bandwidth,
            density,
        }
    }
}

/// `n_runs` independent prices; run `i` uses seed `derive_seed(seed, i)`.
pub fn multi_run(pipeline: &Pipeline, n_runs: usize, paths_per_run: usize, seed: u64) -> Result<RunDistribution> {
    if n_runs == 0 {
        return Err(Error::Config("run.n_runs must be at least 1".into()));
    }
    let samples = (0..n_runs)
        .into_par_iter()
        .map(|i| pipeline.run(paths_per_run, derive_seed(seed, i as u64)).map(|e| e.price))
        .collect::<Result<Vec<f64>>>()?;
    Ok(RunDistribution::from_samples(samples))
}

pub const DENSITY_POINTS: usize = 512;

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Rule-of-thumb bandwidth `0.9 min(sd, IQR/1.34) n^{-1/5}`, with fallbacks for
/// degenerate samples so the result is always positive.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n == 0 {
        return 1.0;
    }
    let (_, sd) = mean_sd(samples);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = (quantile(&sorted, 0.75) - quantile(&sorted, 0.25)) / 1.34;
    let mut lo = sd.min(iqr);
    if !(lo > 0.0) {
        lo = sd;
    }
    if !(lo > 0.0) {
        lo = sorted[0].abs();
    }
    if !(lo > 0.0) {
        lo = 1.0;
    }
    0.9 * lo * (n as f64).powf(-0.2)
}

/// Gaussian kernel density on `points` equally spaced abscissae spanning
/// `[min - 4h, max + 4h]`.
pub fn kernel_density(samples: &[f64], bandwidth: f64, points: usize) -> Vec<(f64, f64)> {
    if samples.is_empty() || points < 2 {
        return Vec::new();
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * bandwidth;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * bandwidth;
    let step = (hi - lo) / (points - 1) as f64;
    let norm = 1.0 / (samples.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    (0..points)
        .map(|i| {
            let x = lo + step * i as f64;
            let d: f64 = samples
                .iter()
                .map(|s| {
                    let u = (x - s) / bandwidth;
                    (-0.5 * u * u).exp()
                })
                .sum();
            (x, d * norm)
        })
        .collect()
}

/// Trapezoid rule over a tabulated function.
pub fn trapezoid(table: &[(f64, f64)]) -> f64 {
    table.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
}

/// One row of an error-versus-sample-size table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n_paths: usize,
    pub mean_abs_error: f64,
    pub sd: f64,
    pub mean_price: f64,
}

/// For each `N`, `reps` runs against `reference`. Repetition `r` at size index
/// `j` uses `derive_seed(derive_seed(seed, j), r)`.
pub fn convergence(
    pipeline: &Pipeline,
    path_counts: &[usize],
    reps: usize,
    reference: f64,
    seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    if reps == 0 {
        return Err(Error::Config("convergence needs at least one repetition".into()));
    }
    path_counts
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let base = derive_seed(seed, j as u64);
            let prices = (0..reps)
                .into_par_iter()
                .map(|r| pipeline.run(n, derive_seed(base, r as u64)).map(|e| e.price))
                .collect::<Result<Vec<f64>>>()?;
            let errs: Vec<f64> = prices.iter().map(|p| (p - reference).abs()).collect();
            let (mae, _) = mean_sd(&errs);
            let (mean_price, sd) = mean_sd(&prices);
            Ok(ConvergenceRow {
                n_paths: n,
                mean_abs_error: mae,
                sd,
                mean_price,
            })
        })
        .collect()
}

// ---- CSV writers; every float is written with Rust's shortest round-trip form.

pub fn write_price_report<W: Write>(est: &PriceEstimate, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["price", "continuation_mean", "std_error", "n_paths", "immediate"])?;
    w.write_record([
        est.price.to_string(),
        est.continuation_mean.to_string(),
        est.std_error.to_string(),
        est.n_paths.to_string(),
        est.immediate.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

/// Per-date regression diagnostics, ascending in date.
pub fn write_fit_report<W: Write>(est: &PriceEstimate, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "n_regression_paths", "condition", "method", "coefficients"])?;
    for fit in est.per_date_fits.iter().rev() {
        let coefs: Vec<String> = fit.coefficients.iter().map(f64::to_string).collect();
        w.write_record([
            fit.date.to_string(),
            fit.n_regression_paths.to_string(),
            fit.condition.to_string(),
            format!("{:?}", fit.method).to_lowercase(),
            coefs.join(" "),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_samples<W: Write>(dist: &RunDistribution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "price"])?;
    for (i, p) in dist.samples.iter().enumerate() {
        w.write_record([i.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_density<W: Write>(dist: &RunDistribution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["abscissa", "density"])?;
    for (x, d) in &dist.density {
        w.write_record([x.to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_convergence<W: Write>(rows: &[ConvergenceRow], reference: f64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n_paths", "mean_abs_error", "sd", "mean_price", "reference"])?;
    for r in rows {
        w.write_record([
            r.n_paths.to_string(),
            r.mean_abs_error.to_string(),
            r.sd.to_string(),
            r.mean_price.to_string(),
            reference.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of a put/call summary table keyed by strike or by date.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub key: String,
    pub put_market: Option<f64>,
    pub put: Option<(f64, f64)>,
    pub call_market: Option<f64>,
    pub call: Option<(f64, f64)>,
}

pub const SUMMARY_COLUMNS: [&str; 6] = ["put_market", "put_mu", "put_sigma", "call_market", "call_mu", "call_sigma"];

fn cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_default()
}

/// Table with columns `<key>,put_market,put_mu,put_sigma,call_market,call_mu,call_sigma`;
/// `key_name` is `strike` or `date`. Missing market quotes are left empty.
pub fn write_summary_table<W: Write>(key_name: &str, rows: &[SummaryRow], out: W) -> Result<()> {
    if key_name != "strike" && key_name != "date" {
        return Err(Error::Argument(format!("summary key must be strike or date, got {key_name}")));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![key_name];
    header.extend(SUMMARY_COLUMNS);
    w.write_record(&header)?;
    for r in rows {
        w.write_record([
            r.key.clone(),
            cell(r.put_market),
            cell(r.put.map(|p| p.0)),
            cell(r.put.map(|p| p.1)),
            cell(r.call_market),
            cell(r.call.map(|p| p.0)),
            cell(r.call.map(|p| p.1)),
        ])?;
    }
    w.flush()?;
    Ok(())
}
