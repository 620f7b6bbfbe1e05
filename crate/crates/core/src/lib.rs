//! Heterogeneous treatment effects in randomized experiments.
//!
//! The crate estimates conditional average treatment effects (CATEs) from a
//! clustered panel: cross-fitted nuisance forests feed an orthogonal score,
//! which a local constant model, an honest tree or an honest forest turns
//! into per-row CATEs. Clustered bootstrap tests then ask whether the CATEs
//! of a subgroup are all non-negative or all non-positive, and KS tests ask
//! whether the CATEs can explain the observed outcome distributions.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64`.

pub mod cate;
pub mod data;
pub mod error;
pub mod inference;
pub mod nuisance;
pub mod pipeline;
pub mod qte;
pub mod rng;
pub mod scalar;
pub mod score;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = data::PanelDataset<f64>;
pub type Obs = data::Observation<f64>;
pub type Features = data::FeatureMatrix<f64>;
pub type Filter = data::SubgroupFilter<f64>;
pub type Tree = nuisance::RegressionTree<f64>;
pub type Forest = nuisance::RegressionForest<f64>;
pub type Nuisances = nuisance::NuisanceFit<f64>;
pub type Scores = score::ScoreVector<f64>;
pub type Cates = cate::CateEstimates<f64>;
pub type LocalConstant = cate::LocalConstantModel<f64>;
pub type Curve = cate::CurvePoints<f64>;
pub type Dominance = inference::DominanceResult<f64>;
pub type Ks = qte::KsResult<f64>;
pub type Qte = qte::QteCurve<f64>;
pub type Pipeline = pipeline::PipelineConfig<f64>;
