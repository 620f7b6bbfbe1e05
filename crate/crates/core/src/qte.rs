//! Quantile treatment effects, simulated potential-outcome distributions and
//! KS tests of whether the CATEs reproduce the observed outcome distributions.

use crate::data::PanelDataset;
use crate::error::{Error, Result};
use crate::inference::bootstrap::{
    bootstrap_bands, completed, run_replicates, BootstrapPlan, ClusterResample, Interval,
};
use crate::inference::edf::{signed_extrema, sup_abs_combination, Edf, Ratio};
use crate::inference::RefitMode;
use crate::rng::derive_seed;
use crate::scalar::Scalar;

/// Type-1 quantiles: `Q(τ) = min{y : F̂(y) ≥ τ}`.
pub fn empirical_quantiles<T: Scalar>(values: &[T], taus: &[T]) -> Result<Vec<T>> {
    if values.is_empty() {
        return Err(Error::DegenerateDistribution("quantiles of an empty sample".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::DegenerateDistribution("NaN in sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = sorted.len();
    let nf = T::from_count(n);
    taus.iter()
        .map(|&tau| {
            if !(tau > T::zero() && tau < T::one()) {
                return Err(Error::Config(format!("quantile level {tau} outside (0, 1)")));
            }
            let reaches = |k: usize| T::from_count(k) / nf >= tau;
            let mut k = (tau * nf).ceil().to_usize().unwrap_or(n).clamp(1, n);
            while k > 1 && reaches(k - 1) {
                k -= 1;
            }
            while k < n && !reaches(k) {
                k += 1;
            }
            Ok(sorted[k - 1])
        })
        .collect()
}

/// `lo + k · step` for `k = 0, 1, …` while below `hi + step/2`; the default grid
/// is 0.05, 0.10, …, 0.95.
pub fn tau_grid<T: Scalar>(lo: T, hi: T, step: T) -> Result<Vec<T>> {
    if !(step > T::zero() && lo > T::zero() && hi < T::one() && lo <= hi) {
        return Err(Error::Config("quantile grid needs 0 < lo ≤ hi < 1 and step > 0".into()));
    }
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let t = lo + step * T::from_count(k);
        if t > hi + step * T::lit(0.5) {
            break;
        }
        out.push(t.min(hi).max(lo));
        k += 1;
    }
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QteCurve<T> {
    pub taus: Vec<T>,
    pub q1: Vec<T>,
    pub q0: Vec<T>,
    pub qte: Vec<T>,
}

fn arm_outcomes<T: Scalar>(ds: &PanelDataset<T>, rows: &[usize], treated: bool) -> Vec<T> {
    rows.iter()
        .map(|&r| &ds.records()[r])
        .filter(|o| o.treated == treated)
        .map(|o| o.outcome)
        .collect()
}

fn qte_on_rows<T: Scalar>(ds: &PanelDataset<T>, rows: &[usize], taus: &[T]) -> Result<QteCurve<T>> {
    let q1 = empirical_quantiles(&arm_outcomes(ds, rows, true), taus)?;
    let q0 = empirical_quantiles(&arm_outcomes(ds, rows, false), taus)?;
    let qte = q1.iter().zip(&q0).map(|(&a, &b)| a - b).collect();
    Ok(QteCurve {
        taus: taus.to_vec(),
        q1,
        q0,
        qte,
    })
}

/// Arm-wise quantiles and their difference.
pub fn qte<T: Scalar>(ds: &PanelDataset<T>, taus: &[T]) -> Result<QteCurve<T>> {
    let rows: Vec<usize> = (0..ds.len()).collect();
    qte_on_rows(ds, &rows, taus)
}

/// Pointwise 95% cluster-bootstrap intervals of the QTE curve.
pub fn qte_bands<T: Scalar>(ds: &PanelDataset<T>, taus: &[T], plan: &BootstrapPlan) -> Result<Vec<Interval<T>>> {
    bootstrap_bands(&ds.rows_by_cluster(), plan, taus.len(), |rows| {
        Ok(qte_on_rows(ds, rows, taus)?.qte)
    })
}

/// Which potential outcome a simulated distribution stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialArm {
    /// `Y(0) + δ̂` over control rows.
    Treated,
    /// `Y(1) − δ̂` over treated rows.
    Control,
}

fn simulated_values<T: Scalar>(ds: &PanelDataset<T>, rows: &[usize], cates: &[T], arm: PotentialArm) -> Vec<T> {
    rows.iter()
        .zip(cates)
        .filter_map(|(&r, &c)| {
            let o = &ds.records()[r];
            match (arm, o.treated) {
                (PotentialArm::Treated, false) => Some(o.outcome + c),
                (PotentialArm::Control, true) => Some(o.outcome - c),
                _ => None,
            }
        })
        .collect()
}

/// Simulated distribution of one potential outcome from the opposite arm.
pub fn simulated_distribution<T: Scalar>(ds: &PanelDataset<T>, cates: &[T], arm: PotentialArm) -> Result<Edf<T>> {
    if cates.len() != ds.len() {
        return Err(Error::Shape(format!(
            "{} CATEs for {} observations",
            cates.len(),
            ds.len()
        )));
    }
    let rows: Vec<usize> = (0..ds.len()).collect();
    Edf::from_values(&simulated_values(ds, &rows, cates, arm))
}

/// `F⁺(y) = Pr(0 < Y ≤ y)`: the values above zero over the full count.
pub fn positive_part<T: Scalar>(values: &[T]) -> Result<Edf<T>> {
    if values.is_empty() {
        return Err(Error::DegenerateDistribution("empty sample".into()));
    }
    let pos: Vec<T> = values.iter().copied().filter(|&v| v > T::zero()).collect();
    if pos.is_empty() {
        return Ok(Edf::zero(values.len() as u64));
    }
    Edf::from_counted(pos, values.len() as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KsResult<T> {
    pub ks_treated: T,
    pub ks_control: T,
    pub ks_joint: T,
    pub p_treated: T,
    pub p_control: T,
    pub p_joint: T,
    pub completed: usize,
    pub dropped: usize,
}

/// Actual and simulated positive parts for both arms.
struct PositiveParts<T> {
    actual_1: Edf<T>,
    sim_1: Edf<T>,
    actual_0: Edf<T>,
    sim_0: Edf<T>,
}

fn positive_parts<T: Scalar>(ds: &PanelDataset<T>, rows: &[usize], cates: &[T]) -> Result<PositiveParts<T>> {
    let y1 = arm_outcomes(ds, rows, true);
    let y0 = arm_outcomes(ds, rows, false);
    if y1.is_empty() || y0.is_empty() {
        return Err(Error::DegenerateDistribution("an arm is empty".into()));
    }
    Ok(PositiveParts {
        actual_1: positive_part(&y1)?,
        sim_1: positive_part(&simulated_values(ds, rows, cates, PotentialArm::Treated))?,
        actual_0: positive_part(&y0)?,
        sim_0: positive_part(&simulated_values(ds, rows, cates, PotentialArm::Control))?,
    })
}

/// KS nesting test. `refit(resample, seed)` returns CATEs for the resample's
/// rows and is only called in [`RefitMode::Full`].
pub fn ks_nesting_test<T, F>(
    ds: &PanelDataset<T>,
    cates: &[T],
    plan: &BootstrapPlan,
    mode: RefitMode,
    refit: F,
) -> Result<KsResult<T>>
where
    T: Scalar,
    F: Fn(&ClusterResample, u64) -> Result<Vec<T>> + Sync,
{
    plan.validate()?;
    if cates.len() != ds.len() {
        return Err(Error::Shape(format!(
            "{} CATEs for {} observations",
            cates.len(),
            ds.len()
        )));
    }
    let rows: Vec<usize> = (0..ds.len()).collect();
    let base = positive_parts(ds, &rows, cates)?;
    for (name, e) in [("treated", &base.actual_1), ("control", &base.actual_0)] {
        if e.total_count() == 0 {
            return Err(Error::DegenerateDistribution(format!(
                "{name} arm has no positive outcomes"
            )));
        }
    }
    let ks1 = sup_abs_combination(&[(&base.actual_1, 1), (&base.sim_1, -1)]);
    let ks0 = sup_abs_combination(&[(&base.actual_0, 1), (&base.sim_0, -1)]);
    let ksj = ks1.max(ks0);

    let results = run_replicates(&ds.rows_by_cluster(), plan, |b, rs, _| {
        let rep: Vec<T> = match mode {
            RefitMode::FixedModel => rs.rows.iter().map(|&r| cates[r]).collect(),
            RefitMode::Full => {
                let v = refit(rs, derive_seed(plan.seed, "bootstrap-refit", b as u64))?;
                if v.len() != rs.rows.len() {
                    return Err(Error::Shape("refit returned the wrong number of CATEs".into()));
                }
                v
            }
        };
        let p = positive_parts(ds, &rs.rows, &rep)?;
        let stat = |a: &Edf<T>, s: &Edf<T>, a0: &Edf<T>, s0: &Edf<T>| {
            let (hi, lo) = signed_extrema(&[(a, 1), (s, -1), (a0, -1), (s0, 1)], None);
            hi.max(lo.negated())
        };
        let k1 = stat(&p.actual_1, &p.sim_1, &base.actual_1, &base.sim_1);
        let k0 = stat(&p.actual_0, &p.sim_0, &base.actual_0, &base.sim_0);
        Ok((k1, k0))
    })?;
    let (reps, dropped) = completed(results, "ks_nesting_test");
    if reps.is_empty() {
        return Err(Error::InsufficientData("every bootstrap replicate failed".into()));
    }
    let n = T::from_count(reps.len());
    let share = |pred: &dyn Fn(&(Ratio, Ratio)) -> bool| T::from_count(reps.iter().filter(|r| pred(r)).count()) / n;
    Ok(KsResult {
        ks_treated: ks1.to_scalar(),
        ks_control: ks0.to_scalar(),
        ks_joint: ksj.to_scalar(),
        p_treated: share(&|r| r.0 > ks1),
        p_control: share(&|r| r.1 > ks0),
        p_joint: share(&|r| r.0.max(r.1) > ksj),
        completed: reps.len(),
        dropped,
    })
}
