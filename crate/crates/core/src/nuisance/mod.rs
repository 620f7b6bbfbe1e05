//! Nuisance learners: honest regression trees, subsampled forests and the
//! cross-fitting driver for μ₁(x), μ₀(x) and p(x).

pub mod crossfit;
pub mod forest;
pub mod tree;

pub use crossfit::{assign_folds, cross_fit_nuisances, Fold, NuisanceConfig, NuisanceFit};
pub use forest::{fit_regression_forest, predict_forest, ForestConfig, RegressionForest};
pub use tree::{Node, RegressionTree};
