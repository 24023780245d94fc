//! Numeric abstraction shared by every estimator.
//!
//! Point estimates, sample variances and randomization moments only need
//! field arithmetic, so they are written against [`Scalar`] and run equally
//! on `f32`, `f64` or exact rationals. Anything that needs a square root or a
//! normal quantile (intervals, p-values) is bounded by [`Real`].

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Ordered field element usable as an outcome value.
pub trait Scalar:
    Clone + Debug + PartialOrd + Num + Signed + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Exact conversion of a unit count.
    fn from_count(n: usize) -> Self;

    /// Lossy conversion from a finite `f64` (exact for rationals).
    fn from_real(x: f64) -> Self;

    fn to_real(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `false` for NaN or infinite floats; rationals are always finite.
    fn is_finite_value(&self) -> bool;
}

/// Floating-point scalar: adds square roots and the transcendental functions
/// needed for Wald intervals.
pub trait Real: Scalar + num_traits::Float + Copy {}

impl Scalar for f64 {
    fn from_count(n: usize) -> Self {
        n as f64
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for f32 {
    fn from_count(n: usize) -> Self {
        n as f32
    }
    fn from_real(x: f64) -> Self {
        x as f32
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Real for f64 {}
impl Real for f32 {}

impl Scalar for BigRational {
    fn from_count(n: usize) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
    fn from_real(x: f64) -> Self {
        BigRational::from_float(x).expect("finite value")
    }
    fn is_finite_value(&self) -> bool {
        true
    }
}

/// Arithmetic mean of a non-empty slice, summed left to right.
pub(crate) fn mean<T: Scalar>(values: &[T]) -> T {
    let sum = values.iter().fold(T::zero(), |acc, v| acc + v.clone());
    sum / T::from_count(values.len())
}

/// Sample variance with divisor `len - 1`; `None` below two values.
pub(crate) fn sample_variance<T: Scalar>(values: &[T], mean: &T) -> Option<T> {
    if values.len() < 2 {
        return None;
    }
    let ss = values.iter().fold(T::zero(), |acc, v| {
        let d = v.clone() - mean.clone();
        acc + d.clone() * d
    });
    Some(ss / T::from_count(values.len() - 1))
}

/// Finite-population variance `S²` with divisor `N - 1`.
pub(crate) fn population_variance<T: Scalar>(values: &[T]) -> T {
    let m = mean(values);
    sample_variance(values, &m).unwrap_or_else(T::zero)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    #[test]
    fn mean_and_variance_f64() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let m = mean(&v);
        assert_eq!(m, 2.5);
        assert!((sample_variance(&v, &m).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(sample_variance(&[1.0], &1.0), None);
    }

    #[test]
    fn rational_variance_is_exact() {
        let v: Vec<BigRational> = [1, 2, 4].iter().map(|&x| BigRational::from_count(x)).collect();
        let m = mean(&v);
        assert_eq!(m, BigRational::new(7.into(), 3.into()));
        // ((1-7/3)^2 + (2-7/3)^2 + (4-7/3)^2) / 2 = 7/3
        assert_eq!(population_variance(&v), BigRational::new(7.into(), 3.into()));
    }
}
