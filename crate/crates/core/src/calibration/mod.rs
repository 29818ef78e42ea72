//! Parameter estimation from historical panels.

mod gbm_cov;
mod hn_mle;
mod panel;
mod pca;
mod simplex;

pub use gbm_cov::{estimate_gbm_cov, log_returns, GbmCovEstimate};
pub use hn_mle::{fit_hn_mle, hn_log_likelihood, HnFit, MleOptions};
pub use panel::{interpolate_constant_maturity, maturity_from_label, PricePanel};
pub use pca::{pca_vol_structure, PcaVolStructure};
pub use simplex::{nelder_mead, SimplexResult};
