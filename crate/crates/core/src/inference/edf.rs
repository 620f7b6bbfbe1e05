//! Count-based empirical distribution functions.
//!
//! Every distribution here is a right-continuous step function
//! `F(z) = count(values ≤ z) / denominator`. Keeping integer counts lets
//! suprema of signed combinations be computed as exact rationals, so lattice
//! statistics compare without rounding noise.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Edf<T> {
    /// Distinct support points, ascending.
    points: Vec<T>,
    /// Cumulative counts at each support point.
    cum_counts: Vec<u64>,
    denominator: u64,
}

impl<T: Scalar> Edf<T> {
    /// Empirical distribution of `values` (each weighted `1/n`).
    pub fn from_values(values: &[T]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DegenerateDistribution("empty sample".into()));
        }
        Self::from_counted(values.to_vec(), values.len() as u64)
    }

    /// Sub-distribution of `values` with each value weighted `1/denominator`;
    /// `denominator` may exceed `values.len()`.
    pub fn from_counted(mut values: Vec<T>, denominator: u64) -> Result<Self> {
        if denominator == 0 || (values.len() as u64) > denominator {
            return Err(Error::DegenerateDistribution(format!(
                "{} values over denominator {denominator}",
                values.len()
            )));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::DegenerateDistribution("NaN in sample".into()));
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
        let mut points = Vec::new();
        let mut cum_counts = Vec::new();
        for (i, v) in values.iter().enumerate() {
            if points.last() == Some(v) {
                *cum_counts.last_mut().expect("pushed") = i as u64 + 1;
            } else {
                points.push(*v);
                cum_counts.push(i as u64 + 1);
            }
        }
        Ok(Self {
            points,
            cum_counts,
            denominator,
        })
    }

    /// Unit point mass at `z`: `F(y) = 1{y ≥ z}`.
    pub fn point_mass(z: T) -> Self {
        Self {
            points: vec![z],
            cum_counts: vec![1],
            denominator: 1,
        }
    }

    /// Distribution with no mass, over `denominator` draws.
    pub fn zero(denominator: u64) -> Self {
        Self {
            points: Vec::new(),
            cum_counts: Vec::new(),
            denominator: denominator.max(1),
        }
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    /// Number of draws with value ≤ y.
    pub fn count_at(&self, y: T) -> u64 {
        let k = self.points.partition_point(|&p| p <= y);
        if k == 0 {
            0
        } else {
            self.cum_counts[k - 1]
        }
    }

    /// F(y).
    pub fn eval(&self, y: T) -> T {
        T::from_count(self.count_at(y) as usize) / T::from_count(self.denominator as usize)
    }

    /// Cumulative probabilities at the support points.
    pub fn cumulative(&self) -> Vec<T> {
        let d = T::from_count(self.denominator as usize);
        self.cum_counts.iter().map(|&c| T::from_count(c as usize) / d).collect()
    }

    pub fn total_count(&self) -> u64 {
        self.cum_counts.last().copied().unwrap_or(0)
    }

    /// Total mass, 1 for a full distribution and less for a sub-distribution.
    pub fn total_mass(&self) -> T {
        T::from_count(self.total_count() as usize) / T::from_count(self.denominator as usize)
    }
}

/// Exact rational `num / den` with positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: i128,
    pub den: i128,
}

impl Ratio {
    pub fn zero() -> Self {
        Ratio { num: 0, den: 1 }
    }

    /// Nearest scalar; the ratio is reduced first so that equal rationals map
    /// to identical floats.
    pub fn to_scalar<T: Scalar>(self) -> T {
        let g = gcd(self.num.unsigned_abs(), self.den.unsigned_abs()).max(1) as i128;
        T::lit((self.num / g) as f64 / (self.den / g) as f64)
    }

    pub fn negated(self) -> Self {
        Ratio {
            num: -self.num,
            den: self.den,
        }
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

/// Maximum and minimum of `Σ_k sign_k · F_k(y)` over `y`.
///
/// With `at = None` the extrema are exact: the combination is evaluated at
/// every support point of every term plus the region left of all points,
/// which covers all values a sum of right-continuous step functions takes.
/// With `at = Some(points)` only those evaluation points are used.
pub fn signed_extrema<T: Scalar>(terms: &[(&Edf<T>, i8)], at: Option<&[T]>) -> (Ratio, Ratio) {
    let den: i128 = terms.iter().map(|(e, _)| e.denominator as i128).product();
    let scale: Vec<i128> = terms.iter().map(|(e, _)| den / e.denominator as i128).collect();

    let mut grid: Vec<T> = match at {
        Some(p) => p.to_vec(),
        None => terms.iter().flat_map(|(e, _)| e.points.iter().copied()).collect(),
    };
    grid.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    grid.dedup();

    let mut ptr = vec![0usize; terms.len()];
    let (mut hi, mut lo) = if at.is_none() || grid.is_empty() {
        (0i128, 0i128)
    } else {
        (i128::MIN, i128::MAX)
    };
    for &y in &grid {
        let mut v = 0i128;
        for (k, (e, s)) in terms.iter().enumerate() {
            while ptr[k] < e.points.len() && e.points[ptr[k]] <= y {
                ptr[k] += 1;
            }
            let c = if ptr[k] == 0 { 0 } else { e.cum_counts[ptr[k] - 1] } as i128;
            v += i128::from(*s) * c * scale[k];
        }
        hi = hi.max(v);
        lo = lo.min(v);
    }
    (Ratio { num: hi, den }, Ratio { num: lo, den })
}

/// Exact `sup_y |Σ sign_k F_k(y)|`.
pub fn sup_abs_combination<T: Scalar>(terms: &[(&Edf<T>, i8)]) -> Ratio {
    let (hi, lo) = signed_extrema(terms, None);
    hi.max(lo.negated())
}
