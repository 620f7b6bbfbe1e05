//! CATE estimators: saturated local constant model, cross-validated honest
//! tree and subsampled forest, plus reporting helpers.

pub mod local_constant;
pub mod report;
pub mod tree;

pub use local_constant::{fit_local_constant, EarningsTier, GroupKey, LocalConstantModel, PartitionSpec};
pub use report::{sign_shares, silverman_bandwidth, smooth_cates, CurvePoints, SignShares, SmoothOptions};
pub use tree::{fit_cate_tree, CateTreeConfig, CateTreeFit, Complexity, CvScore};

use crate::data::{FeatureMatrix, PanelDataset};
use crate::error::{Error, Result};
use crate::nuisance::{fit_regression_forest, predict_forest, ForestConfig, RegressionForest, RegressionTree};
use crate::scalar::Scalar;

/// Per-row CATE estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct CateEstimates<T> {
    pub values: Vec<T>,
    pub estimator: String,
    pub covariate_set: String,
}

impl<T: Scalar> CateEstimates<T> {
    pub fn new(values: Vec<T>, estimator: impl Into<String>, covariate_set: impl Into<String>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidRow {
                row: i,
                message: "non-finite CATE".into(),
            });
        }
        Ok(Self {
            values,
            estimator: estimator.into(),
            covariate_set: covariate_set.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Forest defaults for CATEs: 1000 trees, leaves of at least 10.
pub fn cate_forest_defaults() -> ForestConfig {
    ForestConfig::default()
}

/// Regression forest with the score as target.
pub fn fit_cate_forest<T: Scalar>(
    features: &FeatureMatrix<T>,
    score: &[T],
    clusters: &[usize],
    cfg: &ForestConfig,
    seed: u64,
) -> Result<RegressionForest<T>> {
    fit_regression_forest(features, score, clusters, cfg, seed)
}

/// A fitted CATE model.
#[derive(Debug, Clone)]
pub enum CateModel<T> {
    LocalConstant(LocalConstantModel<T>),
    Tree(RegressionTree<T>),
    /// Forests fitted on different score samples; predictions are averaged.
    Forests(Vec<RegressionForest<T>>),
}

impl<T: Scalar> CateModel<T> {
    pub fn label(&self) -> &'static str {
        match self {
            CateModel::LocalConstant(_) => "local-constant",
            CateModel::Tree(_) => "tree",
            CateModel::Forests(_) => "forest",
        }
    }
}

/// Routes every row through the model. The local constant model reads its
/// strata from `ds`; the others use `features`.
pub fn predict_cate<T: Scalar>(
    model: &CateModel<T>,
    ds: &PanelDataset<T>,
    features: &FeatureMatrix<T>,
    covariate_set: &str,
) -> Result<CateEstimates<T>> {
    if features.n_rows() != ds.len() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} observations",
            features.n_rows(),
            ds.len()
        )));
    }
    let values = match model {
        CateModel::LocalConstant(m) => m.predict(ds)?,
        CateModel::Tree(t) => t.predict(features)?,
        CateModel::Forests(fs) => {
            let preds = fs
                .iter()
                .map(|f| predict_forest(f, features))
                .collect::<Result<Vec<_>>>()?;
            let first = preds.first().ok_or_else(|| Error::Config("no forests".into()))?;
            let k = T::from_count(preds.len());
            (0..features.n_rows())
                .map(|i| {
                    let a = first[i];
                    a + preds[1..].iter().map(|p| p[i] - a).sum::<T>() / k
                })
                .collect()
        }
    };
    CateEstimates::new(values, model.label(), covariate_set)
}
