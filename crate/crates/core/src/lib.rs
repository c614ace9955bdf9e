//! Portfolio optimization with a decoupled Kelly objective.
//!
//! * [`market_data`]: sample moments, covariance and lognormal calibration.
//! * [`models`]: mean-variance and decoupled Kelly return, risk and objectives.
//! * [`de_solver`]: constrained DE/rand/1/bin with feasibility-first selection.
//! * [`monte_carlo`]: correlated lognormal sampling and return-to-risk checks.

// NaN must fail validation, so `!(x > 0.0)` is intended throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod de_solver;
pub mod error;
pub mod exec;
pub mod market_data;
pub mod models;
pub mod monte_carlo;
pub mod quadrature;

pub use error::{Error, Result};
pub use exec::ExecMode;
pub use market_data::{AssetStats, CovarianceMatrix, ReturnSeries, StatsFixture};
pub use models::{ModelKind, OptimizationProblem, Portfolio};
pub use quadrature::{GaussHermite, QuadratureSpec};
