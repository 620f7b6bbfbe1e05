//! Subsampled forests of honest trees.

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::nuisance::tree::RegressionTree;
use crate::rng::stream;
use crate::scalar::{stable_mean, Scalar};

/// Forest hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub trees: usize,
    pub min_leaf: usize,
    /// Share of clusters drawn (without replacement) for each tree.
    pub subsample_fraction: f64,
    /// Share of covariates offered to each tree's split search.
    pub feature_fraction: f64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 1000,
            min_leaf: 10,
            subsample_fraction: 0.5,
            feature_fraction: 2.0 / 3.0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        for (name, f) in [
            ("subsample fraction", self.subsample_fraction),
            ("feature fraction", self.feature_fraction),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("{name} {f} outside (0, 1]")));
            }
        }
        Ok(())
    }

    /// Clusters drawn per tree: ⌊fraction · n⌋, at least 2.
    pub fn clusters_per_tree(&self, n_clusters: usize) -> usize {
        (((self.subsample_fraction * n_clusters as f64) + 1e-9).floor() as usize).clamp(2, n_clusters)
    }

    /// Features offered per tree: ⌈fraction · p⌉, at least 1.
    pub fn features_per_tree(&self, n_features: usize) -> usize {
        (((self.feature_fraction * n_features as f64) - 1e-9).ceil() as usize).clamp(1, n_features.max(1))
    }
}

/// Average of honest trees.
#[derive(Debug, Clone)]
pub struct RegressionForest<T> {
    trees: Vec<RegressionTree<T>>,
    config: ForestConfig,
    seed: u64,
    n_features: usize,
}

impl<T: Scalar> RegressionForest<T> {
    pub fn trees(&self) -> &[RegressionTree<T>] {
        &self.trees
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Assembles a forest from already fitted trees.
    pub fn from_trees(trees: Vec<RegressionTree<T>>, config: ForestConfig, seed: u64) -> Result<Self> {
        let n_features = trees
            .first()
            .map(RegressionTree::n_features)
            .ok_or_else(|| Error::Config("forest needs at least one tree".into()))?;
        if trees.iter().any(|t| t.n_features() != n_features) {
            return Err(Error::Shape("trees disagree on feature width".into()));
        }
        Ok(Self {
            trees,
            config,
            seed,
            n_features,
        })
    }

    pub fn predict_row(&self, row: &[T]) -> T {
        stable_mean(self.trees.iter().map(|t| t.predict_row(row))).unwrap_or_else(T::nan)
    }
}

/// Fits `cfg.trees` honest trees, each on a cluster subsample and a random
/// feature subset. Tree `h` draws from the stream `(seed, "forest-tree", h)`,
/// so the result does not depend on how trees are scheduled.
pub fn fit_regression_forest<T: Scalar>(
    features: &FeatureMatrix<T>,
    target: &[T],
    clusters: &[usize],
    cfg: &ForestConfig,
    seed: u64,
) -> Result<RegressionForest<T>> {
    cfg.validate()?;
    if features.n_rows() != target.len() || target.len() != clusters.len() {
        return Err(Error::Shape(format!(
            "{} feature rows, {} targets, {} cluster keys",
            features.n_rows(),
            target.len(),
            clusters.len()
        )));
    }
    let mut uniq: Vec<usize> = clusters.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    if uniq.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "forest needs at least 4 clusters, found {}",
            uniq.len()
        )));
    }
    // rows per dense cluster position
    let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); uniq.len()];
    for (r, c) in clusters.iter().enumerate() {
        let pos = uniq.binary_search(c).expect("cluster present");
        rows_of[pos].push(r);
    }
    let n_sub = cfg.clusters_per_tree(uniq.len());
    let n_feat = cfg.features_per_tree(features.n_cols());

    let trees = (0..cfg.trees)
        .into_par_iter()
        .map(|h| {
            let mut rng = stream(seed, "forest-tree", h as u64);
            let mut picked = index::sample(&mut rng, uniq.len(), n_sub).into_vec();
            picked.sort_unstable();
            let rows: Vec<usize> = picked.iter().flat_map(|&p| rows_of[p].iter().copied()).collect();
            let mut feats: Vec<usize> = (0..features.n_cols()).collect();
            feats.shuffle(&mut rng);
            feats.truncate(n_feat);
            feats.sort_unstable();
            RegressionTree::fit_honest(features, target, clusters, &rows, &feats, cfg.min_leaf, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    RegressionForest::from_trees(trees, *cfg, seed)
}

/// Per-row unweighted mean of the trees' leaf values.
pub fn predict_forest<T: Scalar>(m: &RegressionForest<T>, features: &FeatureMatrix<T>) -> Result<Vec<T>> {
    if features.n_cols() != m.n_features {
        return Err(Error::Shape(format!(
            "forest trained on {} features, got {}",
            m.n_features,
            features.n_cols()
        )));
    }
    Ok((0..features.n_rows())
        .into_par_iter()
        .map(|i| m.predict_row(features.row(i)))
        .collect())
}
