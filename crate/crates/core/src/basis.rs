//! Regression bases ("projection systems") evaluated on path prefixes.
//!
//! A basis sees only the states at dates `0..=t`, passed as one flattened slice,
//! so date-`t` values cannot depend on later coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait BasisSystem: Send + Sync {
    fn name(&self) -> String;

    /// Number of functions used at date `t`.
    fn len(&self, t: usize) -> usize;

    /// Fails when the basis cannot read a `dim`-dimensional state.
    fn check_dim(&self, dim: usize) -> Result<()>;

    /// Writes the basis values for the path prefix `X_0..X_t` (flattened,
    /// `(t+1)*dim` entries) into `out`, which has length `self.len(t)`.
    fn evaluate(&self, prefix: &[f64], dim: usize, t: usize, out: &mut [f64]);
}

/// Laguerre polynomial `L_n(x) = sum_k C(n,k) (-x)^k / k!`.
pub fn laguerre(n: usize, x: f64) -> f64 {
    let mut sum = 0.0;
    let mut binom = 1.0; // C(n, k)
    let mut pow_over_fact = 1.0; // (-x)^k / k!
    for k in 0..=n {
        sum += binom * pow_over_fact;
        binom = binom * (n - k) as f64 / (k + 1) as f64;
        pow_over_fact *= -x / (k + 1) as f64;
    }
    sum
}

/// `{1} ∪ {e^{-x/2} L_j(x) : j = 0..=max_degree}` at `x = state[coordinate] / scaling`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedLaguerre {
    pub max_degree: usize,
    pub scaling: f64,
    pub coordinate: usize,
}

pub fn weighted_laguerre_basis(max_degree: usize, scaling: f64) -> Result<WeightedLaguerre> {
    WeightedLaguerre::new(max_degree, scaling, 0)
}

impl WeightedLaguerre {
    pub fn new(max_degree: usize, scaling: f64, coordinate: usize) -> Result<Self> {
        if !(scaling > 0.0 && scaling.is_finite()) {
            return Err(Error::Config(format!("basis.scaling must be positive, got {scaling}")));
        }
        Ok(WeightedLaguerre {
            max_degree,
            scaling,
            coordinate,
        })
    }

    pub fn values_at(&self, x: f64, out: &mut [f64]) {
        let w = (-0.5 * x).exp();
        out[0] = 1.0;
        for j in 0..=self.max_degree {
            out[j + 1] = w * laguerre(j, x);
        }
    }
}

impl BasisSystem for WeightedLaguerre {
    fn name(&self) -> String {
        format!("laguerre(deg={}, scale={})", self.max_degree, self.scaling)
    }

    fn len(&self, _t: usize) -> usize {
        self.max_degree + 2
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if self.coordinate >= dim {
            return Err(Error::Config(format!(
                "basis.coordinate {} out of range for {dim}-dimensional paths",
                self.coordinate
            )));
        }
        Ok(())
    }

    fn evaluate(&self, prefix: &[f64], dim: usize, t: usize, out: &mut [f64]) {
        let x = prefix[t * dim + self.coordinate] / self.scaling;
        self.values_at(x, out);
    }
}

/// Seven exponentially weighted polynomials in two scaled coordinates:
/// `e^{1/2}, e^{-x/2}x, e^{-y/2}y` and `e^{-(x+y)/4}` times `xy, xy², x²y, x²y²`.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateExpPoly {
    pub scaling: [f64; 2],
    pub coordinates: [usize; 2],
}

pub fn bivariate_paper_basis(scaling: [f64; 2]) -> Result<BivariateExpPoly> {
    if scaling.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::Config(format!("basis.scaling must be positive, got {scaling:?}")));
    }
    Ok(BivariateExpPoly {
        scaling,
        coordinates: [0, 1],
    })
}

impl BivariateExpPoly {
    pub fn values_at(x: f64, y: f64, out: &mut [f64]) {
        let wx = (-0.5 * x).exp();
        let wy = (-0.5 * y).exp();
        let wxy = (-0.25 * (x + y)).exp();
        out[0] = 0.5f64.exp();
        out[1] = wx * x;
        out[2] = wy * y;
        out[3] = wxy * x * y;
        out[4] = wxy * x * y * y;
        out[5] = wxy * x * x * y;
        out[6] = wxy * x * x * y * y;
    }
}

impl BasisSystem for BivariateExpPoly {
    fn name(&self) -> String {
        format!("bivariate_exp_poly(scale={:?})", self.scaling)
    }

    fn len(&self, _t: usize) -> usize {
        7
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if self.coordinates.iter().any(|c| *c >= dim) || dim < 2 {
            return Err(Error::Config(format!(
                "bivariate basis needs two coordinates, paths have {dim}"
            )));
        }
        Ok(())
    }

    fn evaluate(&self, prefix: &[f64], dim: usize, t: usize, out: &mut [f64]) {
        let s = &prefix[t * dim..(t + 1) * dim];
        let x = s[self.coordinates[0]] / self.scaling[0];
        let y = s[self.coordinates[1]] / self.scaling[1];
        Self::values_at(x, y, out);
    }
}

/// One user-defined basis function `c * exp(-sum_j w_j x_j) * prod_j x_j^{p_j}`
/// on the scaled current state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisTerm {
    pub exp_weights: Vec<f64>,
    pub powers: Vec<u32>,
    #[serde(default = "one")]
    pub coefficient: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct CustomBasis {
    pub terms: Vec<BasisTerm>,
    pub scaling: Vec<f64>,
}

impl CustomBasis {
    pub fn new(terms: Vec<BasisTerm>, scaling: Vec<f64>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("custom basis needs at least one term".into()));
        }
        let d = scaling.len();
        if scaling.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("basis.scaling must be positive".into()));
        }
        for (i, term) in terms.iter().enumerate() {
            if term.exp_weights.len() != d || term.powers.len() != d {
                return Err(Error::Config(format!(
                    "basis.terms[{i}]: expected {d} exponent weights and powers"
                )));
            }
        }
        Ok(CustomBasis { terms, scaling })
    }
}

impl BasisSystem for CustomBasis {
    fn name(&self) -> String {
        format!("custom({} terms)", self.terms.len())
    }

    fn len(&self, _t: usize) -> usize {
        self.terms.len()
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.scaling.len() {
            return Err(Error::Config(format!(
                "custom basis is {}-dimensional, paths have {dim}",
                self.scaling.len()
            )));
        }
        Ok(())
    }

    fn evaluate(&self, prefix: &[f64], dim: usize, t: usize, out: &mut [f64]) {
        let s = &prefix[t * dim..(t + 1) * dim];
        for (o, term) in out.iter_mut().zip(&self.terms) {
            let mut expo = 0.0;
            let mut mono = term.coefficient;
            for j in 0..dim {
                let x = s[j] / self.scaling[j];
                expo += term.exp_weights[j] * x;
                mono *= x.powi(term.powers[j] as i32);
            }
            *o = (-expo).exp() * mono;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn laguerre_closed_forms() {
        for x in [0.0, 0.3, 1.0, 2.5, 7.0] {
            assert!((laguerre(0, x) - 1.0).abs() < 1e-14);
            assert!((laguerre(1, x) - (1.0 - x)).abs() < 1e-14);
            assert!((laguerre(2, x) - (1.0 - 2.0 * x + x * x / 2.0)).abs() < 1e-12);
            let l3 = 1.0 - 3.0 * x + 1.5 * x * x - x * x * x / 6.0;
            assert!((laguerre(3, x) - l3).abs() < 1e-12);
        }
    }

    #[test]
    fn laguerre_three_term_recurrence() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x: f64 = rng.random_range(0.0..10.0);
            for j in 1..=3usize {
                let lhs = (j + 1) as f64 * laguerre(j + 1, x);
                let rhs = (2 * j + 1) as f64 * laguerre(j, x) - x * laguerre(j, x) - j as f64 * laguerre(j - 1, x);
                assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()), "x={x} j={j}");
            }
        }
    }

    #[test]
    fn weighted_laguerre_at_zero_is_all_ones() {
        let b = weighted_laguerre_basis(3, 70.0).unwrap();
        let mut out = vec![0.0; b.len(1)];
        b.values_at(0.0, &mut out);
        assert_eq!(out, vec![1.0; 5]);
    }

    #[test]
    fn weighted_laguerre_degree_one_at_one() {
        let b = weighted_laguerre_basis(1, 1.0).unwrap();
        let mut out = vec![0.0; 3];
        b.evaluate(&[1.0], 1, 0, &mut out);
        assert!((out[0] - 1.0).abs() < 1e-15);
        assert!((out[1] - 0.606_530_659_712_633_4).abs() < 1e-12);
        assert!(out[2].abs() < 1e-15);
    }

    #[test]
    fn laguerre_rejects_nonpositive_scaling() {
        assert!(matches!(weighted_laguerre_basis(3, 0.0), Err(Error::Config(_))));
        assert!(weighted_laguerre_basis(3, -2.0).is_err());
    }

    #[test]
    fn bivariate_at_origin_and_ones() {
        let mut out = [0.0; 7];
        BivariateExpPoly::values_at(0.0, 0.0, &mut out);
        assert_eq!(out, [0.5f64.exp(), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        BivariateExpPoly::values_at(1.0, 1.0, &mut out);
        let e = (-0.5f64).exp();
        assert!((out[0] - 0.5f64.exp()).abs() < 1e-15);
        for v in &out[1..] {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn bivariate_count_and_dim_check() {
        let b = bivariate_paper_basis([70.0, 70.0]).unwrap();
        assert_eq!(b.len(0), 7);
        assert_eq!(b.len(30), 7);
        assert!(b.check_dim(1).is_err());
        assert!(b.check_dim(2).is_ok());
        assert!(bivariate_paper_basis([70.0, 0.0]).is_err());
    }

    #[test]
    fn custom_basis_reproduces_bivariate_family() {
        let t = |w: [f64; 2], p: [u32; 2], c: f64| BasisTerm {
            exp_weights: w.to_vec(),
            powers: p.to_vec(),
            coefficient: c,
        };
        let q = 0.25;
        let terms = vec![
            t([0.0, 0.0], [0, 0], 0.5f64.exp()),
            t([0.5, 0.0], [1, 0], 1.0),
            t([0.0, 0.5], [0, 1], 1.0),
            t([q, q], [1, 1], 1.0),
            t([q, q], [1, 2], 1.0),
            t([q, q], [2, 1], 1.0),
            t([q, q], [2, 2], 1.0),
        ];
        let custom = CustomBasis::new(terms, vec![70.0, 72.0]).unwrap();
        let fixed = bivariate_paper_basis([70.0, 72.0]).unwrap();
        let prefix = [68.0, 69.0, 66.5, 71.2];
        let mut a = [0.0; 7];
        let mut b = [0.0; 7];
        custom.evaluate(&prefix, 2, 1, &mut a);
        fixed.evaluate(&prefix, 2, 1, &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn custom_basis_shape_checked() {
        let bad = BasisTerm {
            exp_weights: vec![0.0],
            powers: vec![1, 1],
            coefficient: 1.0,
        };
        assert!(CustomBasis::new(vec![bad], vec![1.0, 1.0]).is_err());
    }
}
