//! Per-date least-squares projection of discounted cashflows onto a basis.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

/// Gram matrices with a larger eigenvalue ratio are solved in the
/// minimum-norm least-squares sense.
pub const CONDITION_THRESHOLD: f64 = 1e12;

const CHUNK_ROWS: usize = 4096;

/// Row-major `N x k` matrix of basis values.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "design matrix shape mismatch");
        DesignMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Cholesky,
    MinimumNorm,
    /// No in-the-money rows; continuation treated as zero.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionFit {
    pub date: usize,
    pub coefficients: Vec<f64>,
    /// Ratio of extreme Gram eigenvalues (`inf` when singular).
    pub condition: f64,
    pub n_regression_paths: usize,
    pub method: SolveMethod,
}

impl RegressionFit {
    pub fn empty(date: usize) -> Self {
        RegressionFit {
            date,
            coefficients: Vec::new(),
            condition: f64::NAN,
            n_regression_paths: 0,
            method: SolveMethod::Empty,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.method == SolveMethod::Empty
    }

    pub fn predict(&self, basis_row: &[f64]) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.coefficients.iter().zip(basis_row).map(|(a, b)| a * b).sum()
    }
}

/// Accumulates `(sum b b^T, sum b y, count)` over masked rows in fixed-size chunks,
/// reduced in chunk order so the result does not depend on the thread count.
fn moments(b: &DesignMatrix, y: Option<&[f64]>, mask: Option<&[bool]>) -> (Vec<f64>, Vec<f64>, usize) {
    let k = b.cols;
    let partials: Vec<(Vec<f64>, Vec<f64>, usize)> = (0..b.rows)
        .into_par_iter()
        .step_by(CHUNK_ROWS)
        .map(|start| {
            let end = (start + CHUNK_ROWS).min(b.rows);
            let mut g = vec![0.0; k * k];
            let mut r = vec![0.0; k];
            let mut count = 0;
            for i in start..end {
                if mask.is_some_and(|m| !m[i]) {
                    continue;
                }
                count += 1;
                let row = b.row(i);
                for p in 0..k {
                    let bp = row[p];
                    for q in p..k {
                        g[p * k + q] += bp * row[q];
                    }
                    if let Some(y) = y {
                        r[p] += bp * y[i];
                    }
                }
            }
            (g, r, count)
        })
        .collect();
    let mut g = vec![0.0; k * k];
    let mut r = vec![0.0; k];
    let mut count = 0;
    for (pg, pr, pc) in partials {
        g.iter_mut().zip(&pg).for_each(|(a, b)| *a += b);
        r.iter_mut().zip(&pr).for_each(|(a, b)| *a += b);
        count += pc;
    }
    for p in 0..k {
        for q in 0..p {
            g[p * k + q] = g[q * k + p];
        }
    }
    (g, r, count)
}

/// Sample Gram matrix `(1/N) B^T B`.
pub fn gram_matrix(b: &DesignMatrix) -> DMatrix<f64> {
    let (g, _, n) = moments(b, None, None);
    let k = b.cols;
    DMatrix::from_row_slice(k, k, &g) / n.max(1) as f64
}

/// Least-squares coefficients of `y` on the masked rows of `b`.
///
/// Solves `A alpha = (1/N_m) B^T y` with `A` the masked Gram matrix; falls back to
/// the minimum-norm solution when `A` is singular or badly conditioned.
pub fn fit_continuation(date: usize, b: &DesignMatrix, y: &[f64], mask: &[bool]) -> RegressionFit {
    assert_eq!(y.len(), b.rows, "cashflow vector length");
    assert_eq!(mask.len(), b.rows, "mask length");
    let (g, r, count) = moments(b, Some(y), Some(mask));
    if count == 0 {
        return RegressionFit::empty(date);
    }
    let k = b.cols;
    let scale = 1.0 / count as f64;
    let a = DMatrix::from_row_slice(k, k, &g) * scale;
    let rhs = DVector::from_vec(r) * scale;

    let eig = SymmetricEigen::new(a.clone());
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };

    if condition <= CONDITION_THRESHOLD {
        if let Some(chol) = a.cholesky() {
            let alpha = chol.solve(&rhs);
            if alpha.iter().all(|v| v.is_finite()) {
                return RegressionFit {
                    date,
                    coefficients: alpha.as_slice().to_vec(),
                    condition,
                    n_regression_paths: count,
                    method: SolveMethod::Cholesky,
                };
            }
        }
    }

    // Minimum-norm solution via the eigen pseudo-inverse of the Gram matrix.
    let cutoff = lmax.max(0.0) / CONDITION_THRESHOLD;
    let mut alpha = DVector::zeros(k);
    for (i, lambda) in eig.eigenvalues.iter().enumerate() {
        if *lambda > cutoff && *lambda > 0.0 {
            let v = eig.eigenvectors.column(i);
            alpha += v * (v.dot(&rhs) / lambda);
        }
    }
    RegressionFit {
        date,
        coefficients: alpha.as_slice().to_vec(),
        condition,
        n_regression_paths: count,
        method: SolveMethod::MinimumNorm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn gram_of_ones_is_one() {
        let b = DesignMatrix::new(17, 1, vec![1.0; 17]);
        assert_eq!(gram_matrix(&b), DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn gram_hand_product() {
        let b = DesignMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let g = gram_matrix(&b);
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[5.0, 7.0, 7.0, 10.0]));
    }

    #[test]
    fn gram_converges_to_identity_for_orthonormal_basis() {
        // Columns: 1, Z, (Z^2 - 1)/sqrt(2) with Z standard normal are orthonormal.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut max_err = Vec::new();
        for n in [1_000usize, 100_000] {
            let mut data = Vec::with_capacity(3 * n);
            for _ in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                data.extend_from_slice(&[1.0, z, (z * z - 1.0) / 2f64.sqrt()]);
            }
            let g = gram_matrix(&DesignMatrix::new(n, 3, data));
            let err = (g - DMatrix::<f64>::identity(3, 3)).amax();
            // Largest entry sd is sqrt(14) (the squared second Hermite term).
            assert!(err < 5.0 * 14f64.sqrt() / (n as f64).sqrt(), "n={n} err={err}");
            max_err.push(err);
        }
        assert!(max_err[1] < max_err[0]);
    }

    #[test]
    fn constant_basis_gives_mean() {
        let y = [1.0, 2.0, 6.0, 7.0];
        let b = DesignMatrix::new(4, 1, vec![1.0; 4]);
        let fit = fit_continuation(1, &b, &y, &[true; 4]);
        assert!((fit.coefficients[0] - 4.0).abs() < 1e-14);
        assert_eq!(fit.n_regression_paths, 4);
        assert_eq!(fit.method, SolveMethod::Cholesky);
    }

    #[test]
    fn exact_span_is_interpolated() {
        let b = DesignMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
            vec![1.0, 5.0],
        ]);
        let y: Vec<f64> = (0..4).map(|i| 3.0 - 0.5 * b.row(i)[1]).collect();
        let fit = fit_continuation(2, &b, &y, &[true; 4]);
        for i in 0..4 {
            assert!((fit.predict(b.row(i)) - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_explicit_normal_equation_inverse() {
        let rows = [
            [1.0, 0.3],
            [1.0, -1.2],
            [1.0, 2.5],
            [1.0, 0.7],
            [1.0, -0.4],
        ];
        let y = [0.5, -1.0, 2.0, 3.0, 0.1];
        // Oracle: alpha = (B^T B)^{-1} B^T y with a hand-written 2x2 inverse.
        let (mut s00, mut s01, mut s11, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (r, yi) in rows.iter().zip(&y) {
            s00 += r[0] * r[0];
            s01 += r[0] * r[1];
            s11 += r[1] * r[1];
            t0 += r[0] * yi;
            t1 += r[1] * yi;
        }
        let det = s00 * s11 - s01 * s01;
        let oracle = [(s11 * t0 - s01 * t1) / det, (-s01 * t0 + s00 * t1) / det];
        let b = DesignMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
        let fit = fit_continuation(1, &b, &y, &[true; 5]);
        assert!((fit.coefficients[0] - oracle[0]).abs() < 1e-10);
        assert!((fit.coefficients[1] - oracle[1]).abs() < 1e-10);
    }

    #[test]
    fn empty_mask_returns_sentinel() {
        let b = DesignMatrix::new(3, 2, vec![1.0; 6]);
        let fit = fit_continuation(4, &b, &[1.0, 2.0, 3.0], &[false; 3]);
        assert!(fit.is_empty());
        assert_eq!(fit.predict(&[1.0, 1.0]), 0.0);
    }

    #[test]
    fn singular_gram_uses_minimum_norm() {
        // Duplicate column: any alpha with alpha0 + alpha1 = 2 fits; min-norm is (1, 1).
        let b = DesignMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]);
        let fit = fit_continuation(1, &b, &[2.0, 2.0, 2.0], &[true; 3]);
        assert_eq!(fit.method, SolveMethod::MinimumNorm);
        assert!(fit.condition.is_infinite() || fit.condition > CONDITION_THRESHOLD);
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-10);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mask_restricts_rows() {
        let b = DesignMatrix::new(4, 1, vec![1.0; 4]);
        let fit = fit_continuation(1, &b, &[1.0, 100.0, 3.0, 100.0], &[true, false, true, false]);
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-14);
        assert_eq!(fit.n_regression_paths, 2);
    }

    fn random_problem(seed: u64, n: usize, k: usize) -> (DesignMatrix, Vec<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(n * k);
        for _ in 0..n {
            data.push(1.0);
            for _ in 1..k {
                data.push(rng.sample::<f64, _>(StandardNormal));
            }
        }
        let y = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0 + 1.0).collect();
        let mask = (0..n).map(|_| rng.random_bool(0.7)).collect();
        (DesignMatrix::new(n, k, data), y, mask)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gram_is_symmetric_psd(seed in 0u64..1000, n in 1usize..60, k in 1usize..6) {
            let (b, _, _) = random_problem(seed, n, k);
            let g = gram_matrix(&b);
            prop_assert!((&g - g.transpose()).amax() == 0.0);
            let eig = SymmetricEigen::new(g.clone());
            prop_assert!(eig.eigenvalues.min() >= -1e-12 * g.amax().max(1.0));
        }

        #[test]
        fn residual_orthogonal_to_columns(seed in 0u64..1000, n in 20usize..400, k in 1usize..6) {
            let (b, y, mask) = random_problem(seed, n, k);
            let fit = fit_continuation(1, &b, &y, &mask);
            let ynorm = y.iter().zip(&mask).filter(|(_, m)| **m).map(|(v, _)| v * v).sum::<f64>().sqrt();
            for c in 0..k {
                let dot: f64 = (0..n)
                    .filter(|i| mask[*i])
                    .map(|i| b.row(i)[c] * (y[i] - fit.predict(b.row(i))))
                    .sum();
                prop_assert!(dot.abs() < 1e-8 * ynorm, "col {} dot {}", c, dot);
            }
        }

        #[test]
        fn nested_basis_never_increases_residual(seed in 0u64..1000, n in 20usize..300, k in 2usize..6) {
            let (b, y, mask) = random_problem(seed, n, k);
            let sse = |cols: usize| {
                let data: Vec<f64> = (0..n).flat_map(|i| b.row(i)[..cols].to_vec()).collect();
                let sub = DesignMatrix::new(n, cols, data);
                let fit = fit_continuation(1, &sub, &y, &mask);
                (0..n).filter(|i| mask[*i]).map(|i| (y[i] - fit.predict(sub.row(i))).powi(2)).sum::<f64>()
            };
            let small = sse(k - 1);
            let big = sse(k);
            prop_assert!(big <= small * (1.0 + 1e-10) + 1e-12);
        }
    }
}
