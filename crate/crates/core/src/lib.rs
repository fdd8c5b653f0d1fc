//! TREX sparse regression: solvers for the TREX and LASSO estimators, penalty
//! norms, synthetic problem generation, and per-instance certification of
//! prediction-error bounds.

pub mod bounds;
pub mod config;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod io;
pub mod lasso;
pub mod linalg;
pub mod model;
pub mod norms;
pub mod trex;

pub use config::{SolverConfig, SubproblemMethod};
pub use error::{Result, TrexError};
pub use lasso::{fit_lasso, lasso_path, LassoFit};
pub use model::{GroundTruth, RegressionProblem, Residual};
pub use norms::{NormKind, NormSpec};
pub use trex::{solve_trex, solve_trex_constrained, solve_trex_unpenalized, TrexFit};
