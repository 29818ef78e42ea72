use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::panel::PricePanel;
use crate::error::{Error, Result};

pub const N_FACTORS: usize = 3;

/// Factor decomposition of daily log-rate changes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaVolStructure {
    /// `lambda[i][j]`: annualized loading of factor `j` on series `i`.
    pub lambda: Vec<Vec<f64>>,
    /// Annualized factor variances `s_j^2`, descending.
    pub factor_variances: Vec<f64>,
    /// Unit eigenvectors as columns: `loadings[i][j]`.
    pub loadings: Vec<Vec<f64>>,
    /// Annualized sample volatility of each series.
    pub total_vol: Vec<f64>,
    /// `sum_j s_j alpha_ij`, kept for comparison with `total_vol`.
    pub factor_sum: Vec<f64>,
    /// Every eigenvalue of the annualized covariance, descending.
    pub eigenvalues: Vec<f64>,
    pub n_observations: usize,
    pub rank_warning: Option<String>,
}

impl PcaVolStructure {
    /// Covariance reproduced by the kept factors, `sum_j s_j^2 alpha_ij alpha_kj`.
    pub fn reconstructed_covariance(&self) -> Vec<Vec<f64>> {
        let n = self.loadings.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|k| {
                        (0..N_FACTORS)
                            .map(|j| self.factor_variances[j] * self.loadings[i][j] * self.loadings[k][j])
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Sample covariance (`n - 1` denominator) of the columns of `x` (rows = observations).
fn covariance(x: &[Vec<f64>]) -> DMatrix<f64> {
    let n = x.len();
    let p = x[0].len();
    let mut mean = vec![0.0; p];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut c = DMatrix::zeros(p, p);
    for row in x {
        for i in 0..p {
            for k in i..p {
                c[(i, k)] += (row[i] - mean[i]) * (row[k] - mean[k]);
            }
        }
    }
    for i in 0..p {
        for k in i..p {
            c[(i, k)] /= (n - 1) as f64;
            c[(k, i)] = c[(i, k)];
        }
    }
    c
}

/// Three-factor volatility structure from a panel of positive rates.
///
/// Works on daily log-differences. `lambda[i][j] = Θ_i s_j α_ij / sqrt(Σ_k s_k² α_ik²)`
/// with `Θ_i` the annualized sample volatility of series `i`, so each row of
/// `lambda` has Euclidean norm `Θ_i`. Eigenvectors are signed so that their
/// largest-magnitude entry is positive.
pub fn pca_vol_structure(panel: &PricePanel, day_count: u32) -> Result<PcaVolStructure> {
    let p = panel.n_series();
    if p == 0 {
        return Err(Error::Data("panel has no series".into()));
    }
    if panel.has_missing() {
        return Err(Error::Data("panel has missing cells; interpolate first".into()));
    }
    if let Some((d, _)) = panel
        .dates
        .iter()
        .zip(&panel.rows)
        .find(|(_, r)| r.iter().any(|v| !(*v > 0.0)))
    {
        return Err(Error::Data(format!("nonpositive rate on {d}; log-changes undefined")));
    }
    let diffs: Vec<Vec<f64>> = panel
        .rows
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (b / a).ln()).collect())
        .collect();
    if diffs.len() < 30 {
        return Err(Error::Data(format!("need at least 30 daily changes, have {}", diffs.len())));
    }
    let ann = day_count as f64;
    let cov = covariance(&diffs) * ann;
    let eig = SymmetricEigen::new(cov.clone());
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let top = eigenvalues[0].max(0.0);
    let tol = top * 1e-12 * p as f64;
    let mut factor_variances = vec![0.0; N_FACTORS];
    let mut loadings = vec![vec![0.0; N_FACTORS]; p];
    let mut rank = 0;
    for j in 0..N_FACTORS.min(p) {
        let col = eig.eigenvectors.column(order[j]);
        let pivot = (0..p).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs())).unwrap_or(0);
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..p {
            loadings[i][j] = sign * col[i];
        }
        if eigenvalues[j] > tol {
            factor_variances[j] = eigenvalues[j];
            rank += 1;
        }
    }
    let rank_warning = (rank < N_FACTORS).then(|| {
        format!("only {rank} positive factor variance(s); remaining factors zero-filled")
    });

    let total_vol: Vec<f64> = (0..p).map(|i| cov[(i, i)].sqrt()).collect();
    let s: Vec<f64> = factor_variances.iter().map(|v| v.sqrt()).collect();
    let mut lambda = vec![vec![0.0; N_FACTORS]; p];
    let mut factor_sum = vec![0.0; p];
    for i in 0..p {
        let norm = (0..N_FACTORS)
            .map(|k| factor_variances[k] * loadings[i][k] * loadings[i][k])
            .sum::<f64>()
            .sqrt();
        for j in 0..N_FACTORS {
            factor_sum[i] += s[j] * loadings[i][j];
            if norm > 0.0 {
                lambda[i][j] = total_vol[i] * s[j] * loadings[i][j] / norm;
            }
        }
    }
    Ok(PcaVolStructure {
        lambda,
        factor_variances,
        loadings,
        total_vol,
        factor_sum,
        eigenvalues,
        n_observations: diffs.len(),
        rank_warning,
    })
}
