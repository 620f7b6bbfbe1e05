//! Two-fold cross-fitting of μ₁(x), μ₀(x) and p(x).

use rand::seq::SliceRandom;

use crate::data::{select_covariates, CovariateSet, PanelDataset};
use crate::error::{Error, Result};
use crate::nuisance::forest::{fit_regression_forest, predict_forest, ForestConfig};
use crate::rng::{derive_seed, stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fold {
    A,
    B,
}

impl Fold {
    pub fn other(self) -> Fold {
        match self {
            Fold::A => Fold::B,
            Fold::B => Fold::A,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Fold::A => 0,
            Fold::B => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Fold::A => "A",
            Fold::B => "B",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuisanceConfig {
    pub forest: ForestConfig,
    /// Propensity predictions are clipped to `[clip, 1 − clip]`.
    pub clip: f64,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            forest: ForestConfig::default(),
            clip: 0.01,
        }
    }
}

/// Minimum number of split groups per arm in each fold; the forests need
/// four clusters.
pub const MIN_GROUPS_PER_ARM_PER_FOLD: usize = 4;

/// Out-of-fold nuisance predictions for every row.
#[derive(Debug, Clone)]
pub struct NuisanceFit<T> {
    pub mu1_hat: Vec<T>,
    pub mu0_hat: Vec<T>,
    /// Clipped propensity.
    pub p_hat: Vec<T>,
    /// Propensity before clipping.
    pub p_raw: Vec<T>,
    /// Fold of each row; its predictions come from models fit on the other fold.
    pub fold: Vec<Fold>,
    /// Split groups each fold's models were trained on, sorted.
    pub training_groups: [Vec<usize>; 2],
    pub n_clipped: usize,
}

impl<T: Scalar> NuisanceFit<T> {
    pub fn len(&self) -> usize {
        self.mu1_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu1_hat.is_empty()
    }

    /// Rows belonging to `fold`.
    pub fn rows_in(&self, fold: Fold) -> Vec<usize> {
        self.fold
            .iter()
            .enumerate()
            .filter(|(_, f)| **f == fold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Randomly assigns split groups to two folds, separately within each arm.
/// Returns the fold of every row.
pub fn assign_folds<T: Scalar>(ds: &PanelDataset<T>, seed: u64) -> Result<Vec<Fold>> {
    let groups = ds.split_groups();
    let n_groups = groups.iter().copied().max().map_or(0, |m| m + 1);
    let mut arm_of: Vec<Option<bool>> = vec![None; n_groups];
    for (obs, &g) in ds.records().iter().zip(groups) {
        arm_of[g] = Some(obs.treated);
    }
    let mut fold_of = vec![Fold::A; n_groups];
    for (a, arm) in [true, false].into_iter().enumerate() {
        let mut members: Vec<usize> = (0..n_groups).filter(|&g| arm_of[g] == Some(arm)).collect();
        let per_fold = members.len() / 2;
        if per_fold < MIN_GROUPS_PER_ARM_PER_FOLD {
            return Err(Error::InsufficientData(format!(
                "cross-fitting needs {} {} individuals per fold, found {} in total",
                MIN_GROUPS_PER_ARM_PER_FOLD,
                if arm { "treated" } else { "control" },
                members.len()
            )));
        }
        members.shuffle(&mut stream(seed, "crossfit-folds", a as u64));
        for (k, &g) in members.iter().enumerate() {
            fold_of[g] = if k < per_fold { Fold::A } else { Fold::B };
        }
    }
    Ok(groups.iter().map(|&g| fold_of[g]).collect())
}

/// Cross-fits the outcome and propensity forests.
///
/// Models trained on one fold predict the other, then the roles swap, so
/// every row's predictions come from models that never saw its individual.
pub fn cross_fit_nuisances<T: Scalar>(
    ds: &PanelDataset<T>,
    cs: &CovariateSet,
    cfg: &NuisanceConfig,
    seed: u64,
) -> Result<NuisanceFit<T>> {
    if !(cfg.clip >= 0.0 && cfg.clip < 0.5) {
        return Err(Error::Config(format!("propensity clip {} outside [0, 0.5)", cfg.clip)));
    }
    let x = select_covariates(ds, cs)?;
    let fold = assign_folds(ds, seed)?;
    let groups = ds.split_groups();
    let y = ds.outcomes();
    let d: Vec<T> = ds.records().iter().map(|o| o.d()).collect();

    let n = ds.len();
    let mut mu1 = vec![T::zero(); n];
    let mut mu0 = vec![T::zero(); n];
    let mut p_raw = vec![T::zero(); n];
    let mut training_groups: [Vec<usize>; 2] = [Vec::new(), Vec::new()];

    for train_fold in [Fold::A, Fold::B] {
        let train_rows: Vec<usize> = (0..n).filter(|&i| fold[i] == train_fold).collect();
        let pred_rows: Vec<usize> = (0..n).filter(|&i| fold[i] != train_fold).collect();
        let mut tg: Vec<usize> = train_rows.iter().map(|&r| groups[r]).collect();
        tg.sort_unstable();
        tg.dedup();
        training_groups[train_fold.index()] = tg;

        let x_pred = x.select_rows(&pred_rows);
        let fi = train_fold.index() as u64;
        let treated: Vec<usize> = train_rows
            .iter()
            .copied()
            .filter(|&r| ds.records()[r].treated)
            .collect();
        let control: Vec<usize> = train_rows
            .iter()
            .copied()
            .filter(|&r| !ds.records()[r].treated)
            .collect();

        let fit_predict = |rows: &[usize], target: &[T], label: &str| -> Result<Vec<T>> {
            let xs = x.select_rows(rows);
            let ts: Vec<T> = rows.iter().map(|&r| target[r]).collect();
            let gs: Vec<usize> = rows.iter().map(|&r| groups[r]).collect();
            let forest = fit_regression_forest(&xs, &ts, &gs, &cfg.forest, derive_seed(seed, label, fi))
                .map_err(|e| e.in_stage("nuisance forest"))?;
            predict_forest(&forest, &x_pred)
        };
        let m1 = fit_predict(&treated, &y, "nuisance-mu1")?;
        let m0 = fit_predict(&control, &y, "nuisance-mu0")?;
        let pp = fit_predict(&train_rows, &d, "nuisance-p")?;
        for (k, &r) in pred_rows.iter().enumerate() {
            mu1[r] = m1[k];
            mu0[r] = m0[k];
            p_raw[r] = pp[k];
        }
    }

    let lo = T::lit(cfg.clip);
    let hi = T::lit(1.0 - cfg.clip);
    let mut n_clipped = 0;
    let p_hat = p_raw
        .iter()
        .map(|&p| {
            if p < lo {
                n_clipped += 1;
                lo
            } else if p > hi {
                n_clipped += 1;
                hi
            } else {
                p
            }
        })
        .collect();
    Ok(NuisanceFit {
        mu1_hat: mu1,
        mu0_hat: mu0,
        p_hat,
        p_raw,
        fold,
        training_groups,
        n_clipped,
    })
}
