//! Floating-point abstraction shared by every estimator in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar used for outcomes, covariates, scores and statistics: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Arithmetic mean from a compensated sum.
///
/// A constant sample returns its value bit-exactly, and a sample whose sum is
/// exactly representable returns the correctly rounded mean. Returns `None`
/// for an empty input.
pub fn stable_mean<T: Scalar, I: IntoIterator<Item = T>>(values: I) -> Option<T> {
    let mut iter = values.into_iter();
    let first = iter.next()?;
    let mut n = 1usize;
    let mut constant = true;
    let mut sum = first;
    let mut comp = T::zero();
    for v in iter {
        constant &= v == first;
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
        n += 1;
    }
    if constant {
        return Some(first);
    }
    Some((sum + comp) / T::from_count(n))
}

/// Population mean and variance (denominator n) via two passes.
pub fn mean_var_population<T: Scalar>(values: &[T]) -> Option<(T, T)> {
    let mean = stable_mean(values.iter().copied())?;
    let n = T::from_count(values.len());
    let ss: T = values.iter().map(|&v| (v - mean) * (v - mean)).sum();
    Some((mean, ss / n))
}

/// Sample standard deviation (denominator n − 1); zero for fewer than two values.
pub fn sample_sd<T: Scalar>(values: &[T]) -> T {
    if values.len() < 2 {
        return T::zero();
    }
    let mean = stable_mean(values.iter().copied()).unwrap_or_else(T::zero);
    let ss: T = values.iter().map(|&v| (v - mean) * (v - mean)).sum();
    (ss / T::from_count(values.len() - 1)).sqrt()
}
