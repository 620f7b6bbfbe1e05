//! Sign shares and kernel-smoothed CATE curves.

use crate::error::{Error, Result};
use crate::inference::bootstrap::{completed, run_replicates, BootstrapPlan, Interval};
use crate::inference::percentile_interval;
use crate::scalar::{sample_sd, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignShares<T> {
    /// Percentage of CATEs ≥ 0; exact zeros count as positive.
    pub pct_positive: T,
    /// Percentage of CATEs < 0.
    pub pct_negative: T,
}

pub fn sign_shares<T: Scalar>(values: &[T], idx: &[usize]) -> Result<SignShares<T>> {
    if idx.is_empty() {
        return Err(Error::InsufficientData("sign shares of an empty subgroup".into()));
    }
    let mut neg = 0usize;
    for &i in idx {
        let v = *values.get(i).ok_or(Error::OutOfBounds {
            index: i,
            len: values.len(),
        })?;
        if v < T::zero() {
            neg += 1;
        }
    }
    let hundred = T::lit(100.0);
    let n = T::from_count(idx.len());
    let pct_negative = T::from_count(neg) * hundred / n;
    Ok(SignShares {
        pct_positive: T::from_count(idx.len() - neg) * hundred / n,
        pct_negative,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoints<T> {
    pub grid: Vec<T>,
    pub effect: Vec<T>,
    /// Pointwise 95% band; equal to `effect` when no bootstrap was run.
    pub ci_low: Vec<T>,
    pub ci_high: Vec<T>,
    pub bandwidth: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothOptions<T> {
    pub grid_size: usize,
    /// Rows with a running value above the cap are dropped.
    pub cap: Option<T>,
}

impl<T: Scalar> Default for SmoothOptions<T> {
    fn default() -> Self {
        Self {
            grid_size: 200,
            cap: None,
        }
    }
}

/// Silverman's rule of thumb, `1.06 · sd · m^(−1/5)`.
pub fn silverman_bandwidth<T: Scalar>(running: &[T]) -> T {
    T::lit(1.06) * sample_sd(running) * T::from_count(running.len()).powf(T::lit(-0.2))
}

/// Gaussian-kernel Nadaraya–Watson estimate at `z`. Weights are shifted by
/// their largest exponent so that far-away evaluation points stay finite.
fn nadaraya_watson<T: Scalar>(xs: &[T], ys: &[T], z: T, h: T) -> T {
    let half = T::lit(0.5);
    let mut max_e = T::neg_infinity();
    for &x in xs {
        let u = (x - z) / h;
        max_e = max_e.max(-half * u * u);
    }
    // anchored at the first value so constant inputs come back exactly
    let anchor = ys[0];
    let mut num = T::zero();
    let mut den = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        let u = (x - z) / h;
        let w = (-half * u * u - max_e).exp();
        num += w * (y - anchor);
        den += w;
    }
    anchor + num / den
}

fn evenly_spaced<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / T::from_count(n - 1);
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + step * T::from_count(i) })
        .collect()
}

fn subsample<T: Scalar>(values: &[T], running: &[T], idx: &[usize], cap: Option<T>) -> Result<(Vec<T>, Vec<T>)> {
    let mut xs = Vec::with_capacity(idx.len());
    let mut ys = Vec::with_capacity(idx.len());
    for &i in idx {
        if i >= values.len() || i >= running.len() {
            return Err(Error::OutOfBounds {
                index: i,
                len: values.len().min(running.len()),
            });
        }
        let x = running[i];
        if !x.is_finite() {
            return Err(Error::InvalidRow {
                row: i,
                message: "non-finite running variable".into(),
            });
        }
        if cap.is_some_and(|c| x > c) {
            continue;
        }
        xs.push(x);
        ys.push(values[i]);
    }
    Ok((xs, ys))
}

/// Smoothed CATE curve over the `idx` rows against `running`.
///
/// With `bands = Some((rows_by_cluster, plan))` the rows are resampled by
/// cluster and the curve re-evaluated on the same grid and bandwidth; the
/// pointwise percentile band is widened where needed to contain the estimate.
pub fn smooth_cates<T: Scalar>(
    values: &[T],
    running: &[T],
    idx: &[usize],
    opts: &SmoothOptions<T>,
    bands: Option<(&[Vec<usize>], &BootstrapPlan)>,
) -> Result<CurvePoints<T>> {
    if idx.is_empty() {
        return Err(Error::InsufficientData("smoothing an empty subgroup".into()));
    }
    if opts.grid_size == 0 {
        return Err(Error::Config("grid size must be positive".into()));
    }
    let (xs, ys) = subsample(values, running, idx, opts.cap)?;
    if xs.is_empty() {
        return Err(Error::InsufficientData("no rows below the running-variable cap".into()));
    }
    let h = silverman_bandwidth(&xs);
    if h.is_nan() || h <= T::zero() {
        return Err(Error::DegenerateDistribution(
            "zero bandwidth: running variable is constant".into(),
        ));
    }
    let lo = xs.iter().copied().fold(T::infinity(), T::min);
    let hi = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let grid = evenly_spaced(lo, hi, opts.grid_size);
    let effect: Vec<T> = grid.iter().map(|&z| nadaraya_watson(&xs, &ys, z, h)).collect();

    let (ci_low, ci_high) = match bands {
        None => (effect.clone(), effect.clone()),
        Some((by_cluster, plan)) => {
            let mut member = vec![false; values.len()];
            for &i in idx {
                member[i] = true;
            }
            let results = run_replicates(by_cluster, plan, |_, rs, _| {
                let rows: Vec<usize> = rs.rows.iter().copied().filter(|&r| member[r]).collect();
                let (bx, by) = subsample(values, running, &rows, opts.cap)?;
                if bx.is_empty() {
                    return Err(Error::InsufficientData("replicate has no subgroup rows".into()));
                }
                Ok(grid
                    .iter()
                    .map(|&z| nadaraya_watson(&bx, &by, z, h))
                    .collect::<Vec<T>>())
            })?;
            let (reps, _) = completed(results, "smooth_cates");
            let mut low = Vec::with_capacity(grid.len());
            let mut high = Vec::with_capacity(grid.len());
            for (j, &e) in effect.iter().enumerate() {
                let Interval { low: l, high: u } = percentile_interval(reps.iter().map(|r| r[j]).collect(), 0.95)?;
                low.push(l.min(e));
                high.push(u.max(e));
            }
            (low, high)
        }
    };
    Ok(CurvePoints {
        grid,
        effect,
        ci_low,
        ci_high,
        bandwidth: h,
    })
}
