//! Modified outcomes whose conditional mean is the CATE.

use crate::data::PanelDataset;
use crate::error::{Error, Result};
use crate::inference::bootstrap::{bootstrap_ci, rows_by_cluster, BootstrapPlan, Interval};
use crate::nuisance::NuisanceFit;
use crate::scalar::{stable_mean, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    /// Doubly robust score built from cross-fitted nuisances.
    Orthogonal,
    /// Inverse-propensity transform with a constant propensity.
    Unadjusted,
}

impl ScoreKind {
    pub fn label(self) -> &'static str {
        match self {
            ScoreKind::Orthogonal => "orthogonal",
            ScoreKind::Unadjusted => "unadjusted",
        }
    }
}

/// One score per panel row.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector<T> {
    pub values: Vec<T>,
    pub kind: ScoreKind,
    /// Cluster (individual) index per row.
    pub clusters: Vec<usize>,
}

impl<T: Scalar> ScoreVector<T> {
    pub fn new(values: Vec<T>, kind: ScoreKind, clusters: Vec<usize>) -> Result<Self> {
        if values.len() != clusters.len() {
            return Err(Error::Shape(format!(
                "{} scores for {} cluster keys",
                values.len(),
                clusters.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidRow {
                row: i,
                message: "non-finite score".into(),
            });
        }
        Ok(Self { values, kind, clusters })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `μ̂₁ − μ̂₀ + D(Y − μ̂₁)/p̂ − (1 − D)(Y − μ̂₀)/(1 − p̂)` for one row.
pub fn orthogonal_value<T: Scalar>(d: bool, y: T, mu1: T, mu0: T, p: T) -> T {
    if d {
        mu1 - mu0 + (y - mu1) / p
    } else {
        mu1 - mu0 - (y - mu0) / (T::one() - p)
    }
}

pub fn orthogonal_score<T: Scalar>(ds: &PanelDataset<T>, nf: &NuisanceFit<T>) -> Result<ScoreVector<T>> {
    if nf.len() != ds.len() || nf.mu0_hat.len() != ds.len() || nf.p_hat.len() != ds.len() {
        return Err(Error::Shape(format!(
            "nuisance fit has {} rows, dataset {}",
            nf.len(),
            ds.len()
        )));
    }
    if nf.p_hat.iter().any(|&p| !(p > T::zero() && p < T::one())) {
        return Err(Error::Config("propensity outside (0, 1)".into()));
    }
    let values = ds
        .records()
        .iter()
        .enumerate()
        .map(|(i, o)| orthogonal_value(o.treated, o.outcome, nf.mu1_hat[i], nf.mu0_hat[i], nf.p_hat[i]))
        .collect();
    ScoreVector::new(values, ScoreKind::Orthogonal, ds.clusters().to_vec())
}

/// `(D − p) Y / (p (1 − p))`. `p_marginal = None` uses the treated share.
pub fn unadjusted_score<T: Scalar>(ds: &PanelDataset<T>, p_marginal: Option<T>) -> Result<ScoreVector<T>> {
    let p = p_marginal.unwrap_or_else(|| ds.treated_share());
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::Config(format!("marginal propensity {p} outside (0, 1)")));
    }
    let scale = p * (T::one() - p);
    let values = ds.records().iter().map(|o| (o.d() - p) * o.outcome / scale).collect();
    ScoreVector::new(values, ScoreKind::Unadjusted, ds.clusters().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AteEstimate<T> {
    pub estimate: T,
    pub ci_low: T,
    pub ci_high: T,
}

/// Mean score with a 95% cluster-bootstrap percentile interval.
pub fn ate<T: Scalar>(sv: &ScoreVector<T>, plan: &BootstrapPlan) -> Result<AteEstimate<T>> {
    let estimate = stable_mean(sv.values.iter().copied()).ok_or(Error::EmptyDataset)?;
    let by = rows_by_cluster(&sv.clusters);
    let Interval { low, high } = bootstrap_ci(&by, plan, |rows| {
        stable_mean(rows.iter().map(|&r| sv.values[r])).ok_or(Error::EmptyDataset)
    })?;
    Ok(AteEstimate {
        estimate,
        ci_low: low,
        ci_high: high,
    })
}
