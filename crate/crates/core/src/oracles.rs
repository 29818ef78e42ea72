//! Reference pricers: Cox-Ross-Rubinstein binomial tree and Black-Scholes.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exercise {
    American,
    European,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Put,
    Call,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrrSpec {
    pub s0: f64,
    pub strike: f64,
    pub rate: f64,
    pub sigma: f64,
    pub maturity: f64,
    pub steps: usize,
    pub exercise: Exercise,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrrPrice {
    pub price: f64,
    /// American minus European value at the same spec.
    pub early_exercise_premium: f64,
}

fn intrinsic(side: Side, s: f64, k: f64) -> f64 {
    match side {
        Side::Put => (k - s).max(0.0),
        Side::Call => (s - k).max(0.0),
    }
}

fn crr_value(spec: &CrrSpec, american: bool) -> Result<f64> {
    if spec.steps == 0 {
        return Err(Error::Argument("CRR steps must be >= 1".into()));
    }
    if !(spec.s0 > 0.0 && spec.strike >= 0.0 && spec.sigma >= 0.0 && spec.maturity > 0.0) {
        return Err(Error::Argument("CRR needs s0 > 0, strike >= 0, sigma >= 0, maturity > 0".into()));
    }
    let n = spec.steps;
    let dt = spec.maturity / n as f64;
    let u = (spec.sigma * dt.sqrt()).exp();
    let d = 1.0 / u;
    let growth = (spec.rate * dt).exp();
    let df = 1.0 / growth;
    let (p, u, d) = if u == d {
        // Degenerate tree: the asset grows deterministically at the risk-free rate.
        (1.0, growth, growth)
    } else {
        ((growth - d) / (u - d), u, d)
    };
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Argument(format!("CRR risk-neutral probability {p} outside [0, 1]")));
    }
    let mut values: Vec<f64> = (0..=n)
        .map(|j| intrinsic(spec.side, spec.s0 * u.powi((n - j) as i32) * d.powi(j as i32), spec.strike))
        .collect();
    for i in (0..n).rev() {
        for j in 0..=i {
            let cont = df * (p * values[j] + (1.0 - p) * values[j + 1]);
            values[j] = if american {
                let s = spec.s0 * u.powi((i - j) as i32) * d.powi(j as i32);
                cont.max(intrinsic(spec.side, s, spec.strike))
            } else {
                cont
            };
        }
    }
    Ok(values[0])
}

pub fn crr_price(spec: &CrrSpec) -> Result<CrrPrice> {
    let american = crr_value(spec, true)?;
    let european = crr_value(spec, false)?;
    let price = match spec.exercise {
        Exercise::American => american,
        Exercise::European => european,
    };
    Ok(CrrPrice {
        price,
        early_exercise_premium: american - european,
    })
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn black_scholes_european(s0: f64, strike: f64, rate: f64, sigma: f64, maturity: f64, side: Side) -> Result<f64> {
    if maturity < 0.0 {
        return Err(Error::Argument(format!("negative maturity {maturity}")));
    }
    if !(s0 > 0.0 && sigma >= 0.0 && strike >= 0.0) {
        return Err(Error::Argument("Black-Scholes needs s0 > 0, sigma >= 0, strike >= 0".into()));
    }
    let df = (-rate * maturity).exp();
    let forward = s0 / df;
    let vol = sigma * maturity.sqrt();
    if vol == 0.0 || strike == 0.0 {
        return Ok(df * intrinsic(side, forward, strike));
    }
    let d1 = ((forward / strike).ln() + 0.5 * vol * vol) / vol;
    let d2 = d1 - vol;
    Ok(match side {
        Side::Call => df * (forward * normal_cdf(d1) - strike * normal_cdf(d2)),
        Side::Put => df * (strike * normal_cdf(-d2) - forward * normal_cdf(-d1)),
    })
}
