//! Least-squares Monte Carlo pricing of early-exercise options.
//!
//! The engine approximates the Snell envelope of a discounted payoff process by
//! regressing realized cashflows on a user-chosen basis at each exercise date
//! and stopping where the intrinsic value beats the regressed continuation.

pub mod basis;
pub mod calibration;
pub mod discount;
pub mod engine;
pub mod error;
pub mod grid;
pub mod lattice;
pub mod models;
pub mod oracles;
pub mod paths;
pub mod payoff;
pub mod regression;
pub mod rng;
pub mod runs;

pub use basis::{bivariate_paper_basis, weighted_laguerre_basis, BasisSystem};
pub use discount::{cumulative_discount, DiscountSpec};
pub use engine::{backward_induction, price, PriceEstimate, StoppingRule};
pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use lattice::{exact_snell_oracle, Lattice};
pub use paths::PathBundle;
pub use payoff::{intrinsic_matrix, IntrinsicMatrix, PayoffKind, PayoffSpec};
pub use regression::{fit_continuation, gram_matrix, RegressionFit};
pub use runs::{multi_run, Pipeline, RunDistribution, Source};
