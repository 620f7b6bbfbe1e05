//! Individual-clustered bootstrap engine.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapPlan {
    pub replications: usize,
    pub seed: u64,
}

impl BootstrapPlan {
    pub fn new(replications: usize, seed: u64) -> Result<Self> {
        let plan = Self { replications, seed };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("bootstrap needs at least one replication".into()));
        }
        Ok(())
    }

    /// Random stream of replicate `b`.
    pub fn replicate_rng(&self, b: usize) -> StreamRng {
        stream(self.seed, "bootstrap", b as u64)
    }
}

/// One cluster resample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterResample {
    /// Drawn cluster indices, with replacement.
    pub draws: Vec<usize>,
    /// Every row of every drawn cluster, in draw order, with multiplicity.
    pub rows: Vec<usize>,
}

/// Draws `n_clusters` clusters with replacement and expands them to rows.
pub fn cluster_bootstrap_indices<R: Rng>(rows_by_cluster: &[Vec<usize>], rng: &mut R) -> ClusterResample {
    let g = rows_by_cluster.len();
    let draws: Vec<usize> = (0..g).map(|_| rng.random_range(0..g)).collect();
    let rows = draws.iter().flat_map(|&c| rows_by_cluster[c].iter().copied()).collect();
    ClusterResample { draws, rows }
}

/// Row lists per cluster from a per-row cluster index.
pub fn rows_by_cluster(clusters: &[usize]) -> Vec<Vec<usize>> {
    let g = clusters.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); g];
    for (r, &c) in clusters.iter().enumerate() {
        out[c].push(r);
    }
    out.retain(|v| !v.is_empty());
    out
}

/// Runs `f` on each of the plan's replicates in parallel. Replicate `b`
/// sees its own resample and stream, so the output does not depend on the
/// number of worker threads.
pub fn run_replicates<O, F>(rows_by_cluster: &[Vec<usize>], plan: &BootstrapPlan, f: F) -> Result<Vec<Result<O>>>
where
    O: Send,
    F: Fn(usize, &ClusterResample, &mut StreamRng) -> Result<O> + Sync,
{
    plan.validate()?;
    if rows_by_cluster.is_empty() {
        return Err(Error::InsufficientData("bootstrap needs at least one cluster".into()));
    }
    Ok((0..plan.replications)
        .into_par_iter()
        .map(|b| {
            let mut rng = plan.replicate_rng(b);
            let rs = cluster_bootstrap_indices(rows_by_cluster, &mut rng);
            f(b, &rs, &mut rng)
        })
        .collect())
}

/// Splits replicate outcomes into successes and a drop count, warning when
/// more than 1% failed.
pub fn completed<O>(results: Vec<Result<O>>, what: &str) -> (Vec<O>, usize) {
    let total = results.len();
    let mut ok = Vec::with_capacity(total);
    let mut dropped = 0;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                log::debug!("{what}: replicate dropped: {e}");
                dropped += 1;
            }
        }
    }
    if dropped * 100 > total {
        log::warn!("{what}: {dropped} of {total} bootstrap replicates failed and were dropped");
    }
    (ok, dropped)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub low: T,
    pub high: T,
}

/// Linear-interpolation quantile of sorted values at probability `q`.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], q: f64) -> T {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let w = T::lit(h - lo as f64);
    if sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * w
    }
}

/// Central percentile interval at coverage `level` (0.95 → 2.5%, 97.5%).
pub fn percentile_interval<T: Scalar>(mut values: Vec<T>, level: f64) -> Result<Interval<T>> {
    if values.is_empty() {
        return Err(Error::InsufficientData("no completed bootstrap replicates".into()));
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let tail = (1.0 - level) / 2.0;
    Ok(Interval {
        low: quantile_sorted(&values, tail),
        high: quantile_sorted(&values, 1.0 - tail),
    })
}

/// 95% percentile interval of a statistic over cluster resamples.
/// `statistic` receives the resampled row indices.
pub fn bootstrap_ci<T, F>(rows_by_cluster: &[Vec<usize>], plan: &BootstrapPlan, statistic: F) -> Result<Interval<T>>
where
    T: Scalar,
    F: Fn(&[usize]) -> Result<T> + Sync,
{
    let results = run_replicates(rows_by_cluster, plan, |_, rs, _| statistic(&rs.rows))?;
    let (values, _) = completed(results, "bootstrap_ci");
    percentile_interval(values, 0.95)
}

/// Pointwise 95% percentile bands of a vector-valued statistic.
pub fn bootstrap_bands<T, F>(
    rows_by_cluster: &[Vec<usize>],
    plan: &BootstrapPlan,
    width: usize,
    statistic: F,
) -> Result<Vec<Interval<T>>>
where
    T: Scalar,
    F: Fn(&[usize]) -> Result<Vec<T>> + Sync,
{
    let results = run_replicates(rows_by_cluster, plan, |_, rs, _| {
        let v = statistic(&rs.rows)?;
        if v.len() != width {
            return Err(Error::Shape(format!("statistic width {} != {width}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateDistribution("non-finite replicate".into()));
        }
        Ok(v)
    })?;
    let (reps, _) = completed(results, "bootstrap_bands");
    (0..width)
        .map(|j| percentile_interval(reps.iter().map(|r| r[j]).collect(), 0.95))
        .collect()
}
