//! Clustered bootstrap, empirical distributions and dominance tests.

pub mod bootstrap;
pub mod dominance;
pub mod edf;

pub use bootstrap::{
    bootstrap_bands, bootstrap_ci, cluster_bootstrap_indices, completed, percentile_interval, rows_by_cluster,
    run_replicates, BootstrapPlan, ClusterResample, Interval,
};
pub use dominance::{
    dominance_statistics, dominance_test, dominance_test_fixed, DominanceOptions, DominanceResult, DominanceStats,
    PValues, RefitMode, SupremumGrid,
};
pub use edf::{signed_extrema, sup_abs_combination, Edf, Ratio};
