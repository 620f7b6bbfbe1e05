//! Synthetic data with known CATEs and the dominance-test Monte Carlo.

pub mod dgp;
pub mod montecarlo;
pub mod ols;

pub use dgp::{generate, DgpConfig, DgpKind, GroundTruth, KinkParams, ShiftParams, KINK_COVARIATES};
pub use montecarlo::{run_monte_carlo, simulate_once, MonteCarloConfig, RejectionRates, RejectionTable};
pub use ols::{fit_interaction_rows, ols_interaction_cate, InteractionFit};
