use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GbmCovEstimate {
    pub rho: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub n_returns: usize,
}

/// Daily log-returns of a positive price series.
pub fn log_returns(prices: &[f64]) -> Result<Vec<f64>> {
    if let Some((i, p)) = prices.iter().enumerate().find(|(_, p)| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::Data(format!("price {p} at index {i} is not positive")));
    }
    Ok(prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// Annualized volatilities and correlation from the last `window` daily
/// log-returns of two aligned price series (so `window + 1` prices are used).
pub fn estimate_gbm_cov(a: &[f64], b: &[f64], window: usize, day_count: u32) -> Result<GbmCovEstimate> {
    if a.len() != b.len() {
        return Err(Error::Data(format!("series lengths differ: {} vs {}", a.len(), b.len())));
    }
    if window < 2 {
        return Err(Error::Argument(format!("window must be at least 2, got {window}")));
    }
    if a.len() < window + 1 {
        return Err(Error::Data(format!(
            "need {} prices for a window of {window} returns, have {}",
            window + 1,
            a.len()
        )));
    }
    let ra = log_returns(&a[a.len() - window - 1..])?;
    let rb = log_returns(&b[b.len() - window - 1..])?;
    let n = window as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        let (dx, dy) = (x - ma, y - mb);
        vaa += dx * dx;
        vbb += dy * dy;
        vab += dx * dy;
    }
    vaa /= n - 1.0;
    vbb /= n - 1.0;
    vab /= n - 1.0;
    if vaa == 0.0 || vbb == 0.0 {
        return Err(Error::Data("a series has zero return variance; correlation undefined".into()));
    }
    let rho = (vab / (vaa * vbb).sqrt()).clamp(-1.0, 1.0);
    let ann = day_count as f64;
    Ok(GbmCovEstimate {
        rho,
        sigma1: (vaa * ann).sqrt(),
        sigma2: (vbb * ann).sqrt(),
        n_returns: window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(returns: &[f64]) -> Vec<f64> {
        let mut p = vec![100.0];
        for r in returns {
            let last = *p.last().unwrap();
            p.push(last * r.exp());
        }
        p
    }

    #[test]
    fn identical_series() {
        let x = series(&[0.01, -0.02, 0.005, 0.013, -0.007]);
        let e = estimate_gbm_cov(&x, &x, 5, 252).unwrap();
        assert_eq!(e.rho, 1.0);
        assert_eq!(e.sigma1, e.sigma2);
    }

    #[test]
    fn mirrored_returns() {
        let r = [0.01, -0.02, 0.005, 0.013, -0.007];
        let neg: Vec<f64> = r.iter().map(|x| -x).collect();
        let e = estimate_gbm_cov(&series(&r), &series(&neg), 5, 252).unwrap();
        assert!((e.rho + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_prices_and_windows() {
        let x = [1.0, 2.0, 0.0, 3.0];
        assert!(matches!(estimate_gbm_cov(&x, &x, 3, 252), Err(Error::Data(_))));
        let y = [1.0, 2.0, 3.0];
        assert!(estimate_gbm_cov(&y, &y, 1, 252).is_err());
        assert!(estimate_gbm_cov(&y, &y, 3, 252).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(
            ra in proptest::collection::vec(-0.05f64..0.05, 10),
            rb in proptest::collection::vec(-0.05f64..0.05, 10),
        ) {
            let (a, b) = (series(&ra), series(&rb));
            if let (Ok(x), Ok(y)) = (estimate_gbm_cov(&a, &b, 8, 252), estimate_gbm_cov(&b, &a, 8, 252)) {
                prop_assert!(x.rho >= -1.0 && x.rho <= 1.0);
                prop_assert!((x.rho - y.rho).abs() < 1e-15);
                prop_assert_eq!(x.sigma1, y.sigma2);
            }
        }
    }
}
