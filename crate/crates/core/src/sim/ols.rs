//! Interacted linear model `Y = γ₀ + D·β₀ + X·γ₁ + D·X·β₁ + U`.

#![allow(clippy::needless_range_loop)]

use crate::cate::CateEstimates;
use crate::data::PanelDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionFit<T> {
    pub gamma0: T,
    pub beta0: T,
    pub gamma1: T,
    pub beta1: T,
}

impl<T: Scalar> InteractionFit<T> {
    pub fn cate(&self, x: T) -> T {
        self.beta0 + x * self.beta1
    }
}

/// Solves `A c = b` by Gaussian elimination with partial pivoting.
fn solve4<T: Scalar>(mut a: [[T; 4]; 4], mut b: [T; 4]) -> Result<[T; 4]> {
    let scale = (0..4).map(|i| a[i][i].abs()).fold(T::zero(), T::max);
    let tol = scale * T::epsilon() * T::lit(1e4);
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite"))
            .expect("non-empty");
        if a[piv][col].is_nan() || a[piv][col].abs() <= tol {
            return Err(Error::RankDeficient(format!("column {col} is collinear")));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..4 {
            let f = a[r][col] / a[col][col];
            for c in col..4 {
                let v = a[col][c];
                a[r][c] -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
        }
    }
    let mut x = [T::zero(); 4];
    for r in (0..4).rev() {
        let mut s = b[r];
        for c in r + 1..4 {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    Ok(x)
}

/// Least squares by the normal equations on rows `rows` (with multiplicity).
/// `x` is centered at its row mean first to keep the system well conditioned.
pub fn fit_interaction_rows<T: Scalar>(x: &[T], d: &[bool], y: &[T], rows: &[usize]) -> Result<InteractionFit<T>> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("no rows".into()));
    }
    let n = T::from_count(rows.len());
    let xbar = rows.iter().map(|&r| x[r]).sum::<T>() / n;
    let mut a = [[T::zero(); 4]; 4];
    let mut b = [T::zero(); 4];
    for &r in rows {
        let xc = x[r] - xbar;
        let dv = if d[r] { T::one() } else { T::zero() };
        let z = [T::one(), dv, xc, dv * xc];
        for i in 0..4 {
            for j in i..4 {
                a[i][j] += z[i] * z[j];
            }
            b[i] += z[i] * y[r];
        }
    }
    for i in 0..4 {
        for j in 0..i {
            a[i][j] = a[j][i];
        }
    }
    let c = solve4(a, b)?;
    // undo the centering
    Ok(InteractionFit {
        gamma0: c[0] - c[2] * xbar,
        beta0: c[1] - c[3] * xbar,
        gamma1: c[2],
        beta1: c[3],
    })
}

/// Fits the interacted model on a single-covariate dataset and returns the
/// coefficients and the CATEs `β̂₀ + X·β̂₁`.
pub fn ols_interaction_cate<T: Scalar>(ds: &PanelDataset<T>) -> Result<(InteractionFit<T>, CateEstimates<T>)> {
    if ds.n_covariates() != 1 {
        return Err(Error::Shape(format!(
            "expected one covariate, found {}",
            ds.n_covariates()
        )));
    }
    let x: Vec<T> = ds.records().iter().map(|o| o.covariates[0]).collect();
    let d = ds.treatments();
    let y = ds.outcomes();
    if d.iter().all(|&v| v) || d.iter().all(|&v| !v) {
        return Err(Error::InsufficientData("both arms are needed".into()));
    }
    let rows: Vec<usize> = (0..ds.len()).collect();
    let fit = fit_interaction_rows(&x, &d, &y, &rows)?;
    let cates = CateEstimates::new(x.iter().map(|&v| fit.cate(v)).collect(), "ols", "x")?;
    Ok((fit, cates))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_recovery() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        let d: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        let y: Vec<f64> = x
            .iter()
            .zip(&d)
            .map(|(&x, &d)| 1.0 + 2.0 * f64::from(u8::from(d)) + 3.0 * x + 4.0 * f64::from(u8::from(d)) * x)
            .collect();
        let rows: Vec<usize> = (0..20).collect();
        let f = fit_interaction_rows(&x, &d, &y, &rows).unwrap();
        for (a, b) in [(f.gamma0, 1.0), (f.beta0, 2.0), (f.gamma1, 3.0), (f.beta1, 4.0)] {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_x_is_rank_deficient() {
        let x = vec![0.5; 10];
        let d: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let rows: Vec<usize> = (0..10).collect();
        assert!(matches!(
            fit_interaction_rows(&x, &d, &y, &rows),
            Err(Error::RankDeficient(_))
        ));
    }
}
