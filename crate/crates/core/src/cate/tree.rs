//! Honest CATE tree with cross-validated leaf size.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::nuisance::RegressionTree;
use crate::rng::stream;
use crate::scalar::{stable_mean, Scalar};

/// Candidate complexity: a single leaf, or a tree grown down to `min_leaf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Complexity {
    RootOnly,
    MinLeaf(usize),
}

impl std::fmt::Display for Complexity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Complexity::RootOnly => write!(f, "root-only"),
            Complexity::MinLeaf(m) => write!(f, "min-leaf {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CateTreeConfig {
    /// Candidates, simplest first. Ties keep the earlier one.
    pub candidates: Vec<Complexity>,
    pub cv_folds: usize,
    /// Pick the simplest candidate within one standard error of the lowest
    /// cross-validated MSE instead of the lowest itself.
    pub one_se: bool,
    /// Skip cross-validation and grow with this leaf size.
    pub fixed_min_leaf: Option<usize>,
}

impl Default for CateTreeConfig {
    fn default() -> Self {
        let mut candidates = vec![Complexity::RootOnly];
        candidates.extend([1600, 800, 400, 200, 100, 50].map(Complexity::MinLeaf));
        Self {
            candidates,
            cv_folds: 10,
            one_se: true,
            fixed_min_leaf: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CateTreeFit<T> {
    pub tree: RegressionTree<T>,
    pub selected: Complexity,
    /// Cross-validation result per candidate; empty when the leaf size was
    /// fixed.
    pub cv_mse: Vec<CvScore<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvScore<T> {
    pub complexity: Complexity,
    /// Pooled held-out mean squared error.
    pub mse: T,
    /// Standard error of the per-fold MSEs.
    pub se: T,
}

/// Splits the clusters in half, chooses the complexity by cluster-level
/// K-fold cross-validation on the training half, then grows the chosen tree
/// on the training half and fills its leaves from the estimation half.
pub fn fit_cate_tree<T: Scalar>(
    features: &FeatureMatrix<T>,
    score: &[T],
    clusters: &[usize],
    cfg: &CateTreeConfig,
    seed: u64,
) -> Result<CateTreeFit<T>> {
    if features.n_rows() != score.len() || score.len() != clusters.len() {
        return Err(Error::Shape(format!(
            "{} feature rows, {} scores, {} cluster keys",
            features.n_rows(),
            score.len(),
            clusters.len()
        )));
    }
    let mut uniq: Vec<usize> = clusters.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    if uniq.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "CATE tree needs at least 4 clusters, found {}",
            uniq.len()
        )));
    }
    uniq.shuffle(&mut stream(seed, "cate-tree-honesty", 0));
    let n_train = uniq.len() / 2;
    let mut train_groups = uniq[..n_train].to_vec();
    let mut est_groups = uniq[n_train..].to_vec();
    train_groups.sort_unstable();
    est_groups.sort_unstable();
    let all_rows: Vec<usize> = (0..score.len()).collect();
    let feats: Vec<usize> = (0..features.n_cols()).collect();

    let (selected, cv_mse) = match cfg.fixed_min_leaf {
        Some(m) => (Complexity::MinLeaf(m), Vec::new()),
        None => {
            if cfg.candidates.is_empty() || cfg.cv_folds < 2 {
                return Err(Error::Config("tree CV needs candidates and at least 2 folds".into()));
            }
            let train_rows: Vec<usize> = all_rows
                .iter()
                .copied()
                .filter(|&r| train_groups.binary_search(&clusters[r]).is_ok())
                .collect();
            let cv = cross_validate(features, score, clusters, &train_groups, &train_rows, &feats, cfg, seed)?;
            let mut best = 0;
            for (i, c) in cv.iter().enumerate() {
                if c.mse < cv[best].mse {
                    best = i;
                }
            }
            if cfg.one_se {
                let bound = cv[best].mse + cv[best].se;
                best = cv.iter().position(|c| c.mse <= bound).unwrap_or(best);
            }
            (cv[best].complexity, cv)
        }
    };

    let tree = match selected {
        Complexity::RootOnly => {
            let est: Vec<T> = all_rows
                .iter()
                .filter(|&&r| est_groups.binary_search(&clusters[r]).is_ok())
                .map(|&r| score[r])
                .collect();
            let mean =
                stable_mean(est.iter().copied()).ok_or(Error::InsufficientData("empty estimation half".into()))?;
            RegressionTree::constant(
                mean,
                est.len(),
                features.n_cols(),
                train_groups.clone(),
                est_groups.clone(),
            )
        }
        Complexity::MinLeaf(m) => RegressionTree::fit_honest_split(
            features,
            score,
            clusters,
            &all_rows,
            &train_groups,
            &est_groups,
            &feats,
            m,
        )?,
    };
    Ok(CateTreeFit { tree, selected, cv_mse })
}

#[allow(clippy::too_many_arguments)]
fn cross_validate<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[T],
    clusters: &[usize],
    train_groups: &[usize],
    train_rows: &[usize],
    feats: &[usize],
    cfg: &CateTreeConfig,
    seed: u64,
) -> Result<Vec<CvScore<T>>> {
    let k = cfg.cv_folds.min(train_groups.len());
    if k < 2 {
        return Err(Error::InsufficientData(
            "too few training clusters for cross-validation".into(),
        ));
    }
    let mut order = train_groups.to_vec();
    order.shuffle(&mut stream(seed, "cate-tree-cv", 0));
    let mut fold_of_group = std::collections::HashMap::new();
    for (i, g) in order.iter().enumerate() {
        fold_of_group.insert(*g, i % k);
    }
    let fold_of = |r: usize| fold_of_group[&clusters[r]];
    let n = T::from_count(train_rows.len());

    cfg.candidates
        .par_iter()
        .map(|&cand| {
            let mut sse = T::zero();
            let mut fold_mse = Vec::with_capacity(k);
            for fold in 0..k {
                let fit_rows: Vec<usize> = train_rows.iter().copied().filter(|&r| fold_of(r) != fold).collect();
                let held: Vec<usize> = train_rows.iter().copied().filter(|&r| fold_of(r) == fold).collect();
                let pred: Box<dyn Fn(usize) -> T> = match cand {
                    Complexity::RootOnly => {
                        let m = stable_mean(fit_rows.iter().map(|&r| y[r])).unwrap_or_else(T::zero);
                        Box::new(move |_| m)
                    }
                    Complexity::MinLeaf(m) => {
                        let t = RegressionTree::fit_plain(x, y, &fit_rows, feats, m)?;
                        Box::new(move |r| t.predict_row(x.row(r)))
                    }
                };
                let mut fold_sse = T::zero();
                for &r in &held {
                    let e = y[r] - pred(r);
                    fold_sse += e * e;
                }
                sse += fold_sse;
                if !held.is_empty() {
                    fold_mse.push(fold_sse / T::from_count(held.len()));
                }
            }
            let se = if fold_mse.len() > 1 {
                let kf = T::from_count(fold_mse.len());
                let m = fold_mse.iter().fold(T::zero(), |a, &b| a + b) / kf;
                let var = fold_mse.iter().fold(T::zero(), |a, &b| a + (b - m) * (b - m)) / (kf - T::one());
                (var / kf).sqrt()
            } else {
                T::zero()
            };
            Ok(CvScore {
                complexity: cand,
                mse: sse / n,
                se,
            })
        })
        .collect()
}
