use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::PathBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffKind {
    VanillaPut,
    VanillaCall,
    /// Put on the average of two weighted underlyings.
    BasketPut,
    /// Best of two puts, `max(K1 - S1, K2 - S2, 0)`.
    DualStrikePut,
    /// Put on `offset + sum_j weights[j] * x_j` with an arbitrary affine combination.
    Custom,
}

/// Payoff definition.
///
/// The underlying levels seen by the payoff are `S_j = weights[j] * x_j` for the
/// two-asset kinds and `S = offset + sum_j weights[j] * x_j` for the single-asset
/// kinds, so a vanilla option on coordinate 4 of a five-dimensional state uses
/// weights `(0, 0, 0, 0, 1)`. A futures price quoted as `100 - 100 L` is expressed
/// with `offset = 100` and weight `-100`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffSpec {
    pub kind: PayoffKind,
    pub strikes: Vec<f64>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub offset: f64,
}

impl PayoffSpec {
    pub fn new(kind: PayoffKind, strikes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let spec = PayoffSpec {
            kind,
            strikes,
            weights,
            offset: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn vanilla_put(strike: f64) -> Self {
        PayoffSpec {
            kind: PayoffKind::VanillaPut,
            strikes: vec![strike],
            weights: vec![1.0],
            offset: 0.0,
        }
    }

    pub fn vanilla_call(strike: f64) -> Self {
        PayoffSpec {
            kind: PayoffKind::VanillaCall,
            strikes: vec![strike],
            weights: vec![1.0],
            offset: 0.0,
        }
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let want = match self.kind {
            PayoffKind::VanillaPut | PayoffKind::VanillaCall | PayoffKind::Custom => 1,
            PayoffKind::BasketPut | PayoffKind::DualStrikePut => 2,
        };
        if self.strikes.len() != want {
            return Err(Error::Config(format!(
                "payoff.strikes: {:?} needs {want} strike(s), got {}",
                self.kind,
                self.strikes.len()
            )));
        }
        if self.strikes.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(Error::Config("payoff.strikes must be positive".into()));
        }
        if self.weights.is_empty() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("payoff.weights must be non-empty and finite".into()));
        }
        if matches!(self.kind, PayoffKind::BasketPut | PayoffKind::DualStrikePut) && self.weights.len() != 2 {
            return Err(Error::Config("payoff.weights: two-asset payoffs need exactly 2 weights".into()));
        }
        if !self.offset.is_finite() {
            return Err(Error::Config("payoff.offset must be finite".into()));
        }
        Ok(())
    }

    /// State dimension this payoff reads.
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Intrinsic (undiscounted) payoff of `state`. The exercise date does not
    /// enter the payoffs defined here.
    pub fn evaluate(&self, state: &[f64]) -> Result<f64> {
        if state.len() != self.weights.len() {
            return Err(Error::Config(format!(
                "payoff expects a {}-dimensional state, got {}",
                self.weights.len(),
                state.len()
            )));
        }
        Ok(self.evaluate_unchecked(state))
    }

    pub(crate) fn evaluate_unchecked(&self, state: &[f64]) -> f64 {
        match self.kind {
            PayoffKind::VanillaPut | PayoffKind::Custom => (self.strikes[0] - self.level(state)).max(0.0),
            PayoffKind::VanillaCall => (self.level(state) - self.strikes[0]).max(0.0),
            PayoffKind::BasketPut => {
                let k = 0.5 * (self.strikes[0] + self.strikes[1]);
                let s = 0.5 * (self.weights[0] * state[0] + self.weights[1] * state[1]);
                (k - s).max(0.0)
            }
            PayoffKind::DualStrikePut => {
                let p1 = self.strikes[0] - self.weights[0] * state[0];
                let p2 = self.strikes[1] - self.weights[1] * state[1];
                p1.max(p2).max(0.0)
            }
        }
    }

    fn level(&self, state: &[f64]) -> f64 {
        self.offset + self.weights.iter().zip(state).map(|(w, x)| w * x).sum::<f64>()
    }
}

/// Intrinsic values `Z[n, t]` on every path and exercise date, row-major by path.
#[derive(Debug, Clone, PartialEq)]
pub struct IntrinsicMatrix {
    n_paths: usize,
    num_dates: usize,
    data: Vec<f64>,
}

impl IntrinsicMatrix {
    pub fn from_rows(n_paths: usize, num_dates: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_paths * (num_dates + 1) {
            return Err(Error::Config("intrinsic matrix shape mismatch".into()));
        }
        if data.iter().any(|z| !(z.is_finite() && *z >= 0.0)) {
            return Err(Error::Config("intrinsic values must be finite and nonnegative".into()));
        }
        Ok(IntrinsicMatrix {
            n_paths,
            num_dates,
            data,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn num_dates(&self) -> usize {
        self.num_dates
    }

    pub fn get(&self, path: usize, t: usize) -> f64 {
        self.data[path * (self.num_dates + 1) + t]
    }

    pub fn row(&self, path: usize) -> &[f64] {
        let w = self.num_dates + 1;
        &self.data[path * w..(path + 1) * w]
    }
}

pub fn intrinsic_matrix(paths: &PathBundle, spec: &PayoffSpec) -> Result<IntrinsicMatrix> {
    spec.validate()?;
    if paths.dim() != spec.dim() {
        return Err(Error::Config(format!(
            "payoff reads {} coordinates but paths have {}",
            spec.dim(),
            paths.dim()
        )));
    }
    let t_max = paths.num_dates();
    let mut data = Vec::with_capacity(paths.n_paths() * (t_max + 1));
    for n in 0..paths.n_paths() {
        for t in 0..=t_max {
            data.push(spec.evaluate_unchecked(paths.state(n, t)));
        }
    }
    IntrinsicMatrix::from_rows(paths.n_paths(), t_max, data)
}
