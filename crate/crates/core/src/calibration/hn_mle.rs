use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::simplex::nelder_mead;
use crate::error::{Error, Result};
use crate::models::HnSpec;
use crate::rng::path_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MleOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub ftol: f64,
    pub seed: u64,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            restarts: 5,
            max_iter: 20_000,
            ftol: 1e-12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HnFit {
    pub spec: HnSpec,
    pub log_likelihood: f64,
    /// Log-likelihood at the deterministic starting point.
    pub start_log_likelihood: f64,
    pub iterations: usize,
    /// Index of the restart that produced the result.
    pub restart: usize,
    /// Best log-likelihood after each iteration of the winning restart.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// Gaussian conditional log-likelihood of `returns` under the recursion used by
/// the simulator, with `h_1 = sigma0_sq`.
pub fn hn_log_likelihood(spec: &HnSpec, returns: &[f64]) -> f64 {
    let Some(mut h) = spec.sigma0_sq else {
        return f64::NAN;
    };
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut ll = 0.0;
    for &x in returns {
        if !(h > 0.0) {
            return f64::NEG_INFINITY;
        }
        let sd = h.sqrt();
        let z = (x - spec.r_daily - spec.lambda * h) / sd;
        ll -= 0.5 * (ln2pi + h.ln() + z * z);
        let shock = z - spec.gamma * sd;
        h = spec.omega + spec.beta * h + spec.alpha * shock * shock;
    }
    ll
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Unconstrained coordinates `(λ, ln ω, ln α, c, [γ])` with
/// `β = (1 - αγ²) logistic(c)`, so every point is stationary.
struct Transform {
    r_daily: f64,
    sigma0_sq: f64,
    free_gamma: bool,
}

impl Transform {
    fn spec(&self, u: &[f64]) -> Option<HnSpec> {
        let alpha = u[2].exp();
        let gamma = if self.free_gamma { u[4] } else { 0.0 };
        let room = 1.0 - alpha * gamma * gamma;
        if !(room > 0.0) {
            return None;
        }
        Some(HnSpec {
            lambda: u[0],
            omega: u[1].exp(),
            alpha,
            beta: room * logistic(u[3]),
            gamma,
            r_daily: self.r_daily,
            s0: 1.0,
            sigma0_sq: Some(self.sigma0_sq),
        })
    }

    fn coords(&self, spec: &HnSpec) -> Vec<f64> {
        let room = 1.0 - spec.alpha * spec.gamma * spec.gamma;
        let mut u = vec![
            spec.lambda,
            spec.omega.ln(),
            spec.alpha.ln(),
            logit((spec.beta / room).clamp(1e-9, 1.0 - 1e-9)),
        ];
        if self.free_gamma {
            u.push(spec.gamma);
        }
        u
    }
}

/// Maximum-likelihood Heston-Nandi parameters from daily log-returns.
///
/// The initial variance is the sample variance of `returns`. Restart 0 starts
/// from a moment-based guess; restarts `1..` perturb it with a seeded generator.
/// The best restart wins (ties go to the lowest index). Fails with
/// [`Error::NotConverged`] when no restart meets the tolerance, carrying the
/// best point as `(λ, ω, α, β, γ)`.
pub fn fit_hn_mle(returns: &[f64], r_daily: f64, fix_gamma_zero: bool, opts: &MleOptions) -> Result<HnFit> {
    if returns.len() < 30 {
        return Err(Error::Data(format!("need at least 30 returns, have {}", returns.len())));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::Data("returns contain non-finite values".into()));
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(Error::NotConverged {
            iterations: 0,
            best_point: Vec::new(),
            best_value: f64::NAN,
        });
    }
    let tf = Transform {
        r_daily,
        sigma0_sq: var,
        free_gamma: !fix_gamma_zero,
    };
    let beta0 = 0.2;
    let start = HnSpec {
        lambda: (mean - r_daily) / var,
        omega: 0.5 * var * (1.0 - beta0),
        alpha: 0.5 * var * (1.0 - beta0),
        beta: beta0,
        gamma: 0.0,
        r_daily,
        s0: 1.0,
        sigma0_sq: Some(var),
    };
    let u0 = tf.coords(&start);
    let start_ll = hn_log_likelihood(&start, returns);
    let objective = |u: &[f64]| match tf.spec(u) {
        Some(s) => -hn_log_likelihood(&s, returns),
        None => f64::INFINITY,
    };
    let dim = u0.len();
    let mut step = vec![1.0; dim];
    step[0] = 2.0 + 0.5 * u0[0].abs();

    let runs: Vec<_> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|k| {
            let mut u = u0.clone();
            if k > 0 {
                let mut rng = path_rng(opts.seed, k as u64);
                for (j, x) in u.iter_mut().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    *x += z * if j == 0 { step[0] } else { 0.7 };
                }
            }
            // Restart the simplex from its own optimum until it stops moving.
            let mut total = 0;
            let mut trace = Vec::new();
            let mut res = nelder_mead(objective, &u, &step, opts.ftol, opts.max_iter);
            loop {
                total += res.iterations;
                trace.extend(res.trace.iter().map(|v| -v));
                if !res.converged || total >= opts.max_iter {
                    break;
                }
                let again = nelder_mead(objective, &res.point, &step, opts.ftol, opts.max_iter - total);
                let improved = again.value < res.value - opts.ftol * res.value.abs();
                let converged = again.converged;
                if again.value <= res.value {
                    res = again;
                }
                if !improved {
                    res.converged = converged || res.converged;
                    break;
                }
            }
            (res, total, trace)
        })
        .collect();

    let (restart, (best, iterations, trace)) = runs
        .into_iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.value.total_cmp(&b.1 .0.value).then(a.0.cmp(&b.0)))
        .expect("at least one restart");
    let spec = tf.spec(&best.point);
    match spec {
        Some(spec) if best.converged && best.value.is_finite() => Ok(HnFit {
            log_likelihood: -best.value,
            start_log_likelihood: start_ll,
            spec,
            iterations,
            restart,
            trace,
        }),
        _ => Err(Error::NotConverged {
            iterations,
            best_point: spec
                .map(|s| vec![s.lambda, s.omega, s.alpha, s.beta, s.gamma])
                .unwrap_or_default(),
            best_value: -best.value,
        }),
    }
}
