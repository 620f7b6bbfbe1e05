//! End-to-end CATE estimation and the subgroup test battery.

use crate::cate::{
    fit_cate_forest, fit_cate_tree, fit_local_constant, predict_cate, sign_shares, CateEstimates, CateModel,
    CateTreeConfig, PartitionSpec, SignShares,
};
use crate::data::{apply_filter, select_covariates, CovariateSet, PanelDataset, SubgroupFilter};
use crate::error::{Error, Result};
use crate::inference::{dominance_test, BootstrapPlan, ClusterResample, DominanceOptions, DominanceResult};
use crate::nuisance::{cross_fit_nuisances, Fold, ForestConfig, NuisanceConfig, NuisanceFit};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::score::{orthogonal_score, unadjusted_score, ScoreKind, ScoreVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    LocalConstant,
    Tree,
    Forest,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Estimator::LocalConstant => "local-constant",
            Estimator::Tree => "tree",
            Estimator::Forest => "forest",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "local-constant" => Ok(Estimator::LocalConstant),
            "tree" => Ok(Estimator::Tree),
            "forest" => Ok(Estimator::Forest),
            other => Err(Error::Config(format!("unknown estimator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig<T> {
    pub estimator: Estimator,
    pub covariates: CovariateSet,
    pub score: ScoreKind,
    pub nuisance: NuisanceConfig,
    pub cate_forest: ForestConfig,
    pub tree: CateTreeConfig,
    pub partition: PartitionSpec<T>,
}

impl<T: Scalar> PipelineConfig<T> {
    pub fn new(estimator: Estimator, covariates: CovariateSet) -> Self {
        Self {
            estimator,
            covariates,
            score: ScoreKind::Orthogonal,
            nuisance: NuisanceConfig::default(),
            cate_forest: ForestConfig::default(),
            tree: CateTreeConfig::default(),
            partition: PartitionSpec::Pooled,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput<T> {
    pub nuisance: Option<NuisanceFit<T>>,
    pub score: Option<ScoreVector<T>>,
    pub model: CateModel<T>,
    pub cates: CateEstimates<T>,
}

/// Nuisances, scores and the chosen CATE model.
///
/// With orthogonal scores the tree is grown on the second cross-fitting
/// sample only, while forests are grown on each sample and averaged. The
/// local constant model uses raw outcomes on every row.
pub fn estimate_cates<T: Scalar>(
    ds: &PanelDataset<T>,
    cfg: &PipelineConfig<T>,
    seed: u64,
) -> Result<PipelineOutput<T>> {
    let x = select_covariates(ds, &cfg.covariates)?;
    if cfg.estimator == Estimator::LocalConstant {
        let m = fit_local_constant(ds, &cfg.partition).map_err(|e| e.in_stage("local constant"))?;
        let model = CateModel::LocalConstant(m);
        let cates = predict_cate(&model, ds, &x, &cfg.covariates.name)?;
        return Ok(PipelineOutput {
            nuisance: None,
            score: None,
            model,
            cates,
        });
    }

    let (nuisance, score) = match cfg.score {
        ScoreKind::Orthogonal => {
            let nf = cross_fit_nuisances(ds, &cfg.covariates, &cfg.nuisance, derive_seed(seed, "nuisance", 0))
                .map_err(|e| e.in_stage("nuisance"))?;
            let sv = orthogonal_score(ds, &nf).map_err(|e| e.in_stage("score"))?;
            (Some(nf), sv)
        }
        ScoreKind::Unadjusted => (None, unadjusted_score(ds, None).map_err(|e| e.in_stage("score"))?),
    };
    let samples: Vec<Vec<usize>> = match &nuisance {
        Some(nf) => match cfg.estimator {
            Estimator::Tree => vec![nf.rows_in(Fold::B)],
            _ => vec![nf.rows_in(Fold::A), nf.rows_in(Fold::B)],
        },
        None => vec![(0..ds.len()).collect()],
    };
    let groups = ds.split_groups();

    let model = match cfg.estimator {
        Estimator::Tree => {
            let rows = &samples[0];
            let xs = x.select_rows(rows);
            let ys: Vec<T> = rows.iter().map(|&r| score.values[r]).collect();
            let gs: Vec<usize> = rows.iter().map(|&r| groups[r]).collect();
            let fit = fit_cate_tree(&xs, &ys, &gs, &cfg.tree, derive_seed(seed, "cate-tree", 0))
                .map_err(|e| e.in_stage("cate tree"))?;
            CateModel::Tree(fit.tree)
        }
        Estimator::Forest => {
            let forests = samples
                .iter()
                .enumerate()
                .map(|(k, rows)| {
                    let xs = x.select_rows(rows);
                    let ys: Vec<T> = rows.iter().map(|&r| score.values[r]).collect();
                    let gs: Vec<usize> = rows.iter().map(|&r| groups[r]).collect();
                    fit_cate_forest(
                        &xs,
                        &ys,
                        &gs,
                        &cfg.cate_forest,
                        derive_seed(seed, "cate-forest", k as u64),
                    )
                    .map_err(|e| e.in_stage("cate forest"))
                })
                .collect::<Result<Vec<_>>>()?;
            CateModel::Forests(forests)
        }
        Estimator::LocalConstant => unreachable!("handled above"),
    };
    let cates = predict_cate(&model, ds, &x, &cfg.covariates.name)?;
    Ok(PipelineOutput {
        nuisance,
        score: Some(score),
        model,
        cates,
    })
}

/// Re-runs the whole pipeline on a cluster resample of `ds`. The returned
/// CATEs follow the resample's row order, which matches `resample.rows`
/// when the resample was drawn from `ds.rows_by_cluster()`.
pub fn full_refit<'a, T: Scalar>(
    ds: &'a PanelDataset<T>,
    cfg: &'a PipelineConfig<T>,
) -> impl Fn(&ClusterResample, u64) -> Result<Vec<T>> + Sync + 'a {
    move |rs, seed| {
        let boot = ds.from_cluster_draws(&rs.draws)?;
        Ok(estimate_cates(&boot, cfg, seed)?.cates.values)
    }
}

/// A named subgroup of the test battery.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgroup<T> {
    pub name: String,
    pub filter: SubgroupFilter<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupReport<T> {
    pub name: String,
    pub n: usize,
    pub shares: SignShares<T>,
    pub test: DominanceResult<T>,
}

/// Sign shares and dominance tests per subgroup, with the bootstrap refit
/// given by `refit`.
pub fn run_battery<T, F>(
    ds: &PanelDataset<T>,
    cates: &[T],
    subgroups: &[Subgroup<T>],
    plan: &BootstrapPlan,
    opts: &DominanceOptions,
    refit: F,
) -> Result<Vec<SubgroupReport<T>>>
where
    T: Scalar,
    F: Fn(&ClusterResample, u64) -> Result<Vec<T>> + Sync,
{
    let by_cluster = ds.rows_by_cluster();
    subgroups
        .iter()
        .map(|sg| {
            let idx = apply_filter(ds, &sg.filter);
            if idx.is_empty() {
                return Err(Error::InsufficientData(format!("subgroup `{}` is empty", sg.name)));
            }
            let shares = sign_shares(cates, &idx)?;
            let test = dominance_test(&by_cluster, &idx, cates, plan, opts, &refit)?;
            Ok(SubgroupReport {
                name: sg.name.clone(),
                n: idx.len(),
                shares,
                test,
            })
        })
        .collect()
}
