//! Saturated stratified model: control mean and treatment effect per group.

use std::collections::BTreeMap;

use crate::data::PanelDataset;
use crate::error::{Error, Result};
use crate::scalar::{stable_mean, Scalar};

/// Prior-earnings stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EarningsTier {
    Zero,
    /// Positive and at most the median of positive values.
    BelowMedian,
    AboveMedian,
}

impl EarningsTier {
    pub fn label(self) -> &'static str {
        match self {
            EarningsTier::Zero => "zero",
            EarningsTier::BelowMedian => "below-median",
            EarningsTier::AboveMedian => "above-median",
        }
    }
}

/// How rows are assigned to groups.
#[derive(Debug, Clone, PartialEq)]
pub enum PartitionSpec<T> {
    /// Prior-earnings tier (from a covariate) crossed with period.
    EarningsByPeriod {
        /// Covariate column holding prior earnings.
        column: usize,
        /// Tier cut between the below- and above-median positives. `None`
        /// computes the median of the positive values in the fitting sample.
        median: Option<T>,
    },
    /// A single group containing every row.
    Pooled,
}

/// Group key: tier and period, or the pooled group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupKey {
    Stratum { tier: EarningsTier, period: i64 },
    Pooled,
}

impl std::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GroupKey::Stratum { tier, period } => write!(f, "({}, {period})", tier.label()),
            GroupKey::Pooled => write!(f, "pooled"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalConstantModel<T> {
    /// Groups present in the fitting sample, sorted.
    pub groups: Vec<GroupKey>,
    /// Control mean per group.
    pub gamma: Vec<T>,
    /// Treated minus control mean per group.
    pub delta: Vec<T>,
    /// Prior-earnings column and resolved median cut, if stratified.
    pub column: Option<usize>,
    pub median: Option<T>,
}

/// Lower median (type-1 quantile at ½) of the strictly positive values.
fn positive_median<T: Scalar>(values: impl Iterator<Item = T>) -> Option<T> {
    let mut pos: Vec<T> = values.filter(|&v| v > T::zero()).collect();
    if pos.is_empty() {
        return None;
    }
    pos.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Some(pos[(pos.len() - 1) / 2])
}

fn tier_of<T: Scalar>(v: T, median: Option<T>) -> EarningsTier {
    if v <= T::zero() {
        EarningsTier::Zero
    } else if median.is_some_and(|m| v <= m) {
        EarningsTier::BelowMedian
    } else {
        EarningsTier::AboveMedian
    }
}

impl<T: Scalar> LocalConstantModel<T> {
    /// Group of every row of `ds`.
    pub fn keys(&self, ds: &PanelDataset<T>) -> Result<Vec<GroupKey>> {
        row_keys(ds, self.column, self.median)
    }

    /// δ of each row's group. Rows whose group was absent from the fitting
    /// sample are an error.
    pub fn predict(&self, ds: &PanelDataset<T>) -> Result<Vec<T>> {
        self.keys(ds)?
            .into_iter()
            .map(|k| {
                self.groups
                    .binary_search(&k)
                    .map(|j| self.delta[j])
                    .map_err(|_| Error::DegenerateGroup {
                        group: k.to_string(),
                        message: "group not present in the fitting sample".into(),
                    })
            })
            .collect()
    }
}

fn row_keys<T: Scalar>(ds: &PanelDataset<T>, column: Option<usize>, median: Option<T>) -> Result<Vec<GroupKey>> {
    match column {
        None => Ok(vec![GroupKey::Pooled; ds.len()]),
        Some(c) => {
            if c >= ds.n_covariates() {
                return Err(Error::OutOfBounds {
                    index: c,
                    len: ds.n_covariates(),
                });
            }
            Ok(ds
                .records()
                .iter()
                .map(|o| GroupKey::Stratum {
                    tier: tier_of(o.covariates[c], median),
                    period: o.period,
                })
                .collect())
        }
    }
}

/// Fits the saturated model. Every group needs both arms.
pub fn fit_local_constant<T: Scalar>(ds: &PanelDataset<T>, spec: &PartitionSpec<T>) -> Result<LocalConstantModel<T>> {
    let (column, median) = match spec {
        PartitionSpec::Pooled => (None, None),
        PartitionSpec::EarningsByPeriod { column, median } => {
            if *column >= ds.n_covariates() {
                return Err(Error::OutOfBounds {
                    index: *column,
                    len: ds.n_covariates(),
                });
            }
            let m = match median {
                Some(m) => Some(*m),
                None => positive_median(ds.records().iter().map(|o| o.covariates[*column])),
            };
            (Some(*column), m)
        }
    };
    let keys = row_keys(ds, column, median)?;
    let mut cells: BTreeMap<GroupKey, (Vec<T>, Vec<T>)> = BTreeMap::new();
    for (o, k) in ds.records().iter().zip(&keys) {
        let cell = cells.entry(*k).or_default();
        if o.treated {
            cell.0.push(o.outcome);
        } else {
            cell.1.push(o.outcome);
        }
    }
    let mut groups = Vec::with_capacity(cells.len());
    let mut gamma = Vec::with_capacity(cells.len());
    let mut delta = Vec::with_capacity(cells.len());
    for (k, (t, c)) in cells {
        let (Some(mt), Some(mc)) = (stable_mean(t.iter().copied()), stable_mean(c.iter().copied())) else {
            return Err(Error::DegenerateGroup {
                group: k.to_string(),
                message: format!("{} treated and {} control rows", t.len(), c.len()),
            });
        };
        groups.push(k);
        gamma.push(mc);
        delta.push(mt - mc);
    }
    Ok(LocalConstantModel {
        groups,
        gamma,
        delta,
        column,
        median,
    })
}
