//! Numeric abstraction shared by the metric and sampling code.
//!
//! Ranking metrics only ever need field arithmetic on small integers
//! (reciprocal ranks and their means), so they are written against
//! [`Scalar`] and work equally with `f32`, `f64` or an exact rational.
//! Rate smoothing needs real exponentiation and is written against
//! [`num_traits::Float`] instead.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Exact rational used when metric values must compare bit-for-bit.
pub type Rational = Ratio<i64>;

pub trait Scalar:
    Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// `1 / rank`.
    fn reciprocal(rank: usize) -> Self {
        Self::one() / Self::from_count(rank)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
}

/// Arithmetic mean; `None` for an empty input.
pub fn mean<S: Scalar>(values: impl IntoIterator<Item = S>) -> Option<S> {
    let mut n = 0usize;
    let mut sum = S::zero();
    for v in values {
        sum = sum + v;
        n += 1;
    }
    (n > 0).then(|| sum / S::from_count(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reciprocal_is_exact_for_rationals() {
        assert_eq!(Rational::reciprocal(4), Rational::new(1, 4));
        assert_eq!(f64::reciprocal(2), 0.5);
    }

    #[test]
    fn mean_of_empty_is_none() {
        assert_eq!(mean::<f64>(std::iter::empty()), None);
        assert_eq!(
            mean([Rational::new(1, 1), Rational::new(1, 2)]),
            Some(Rational::new(3, 4))
        );
    }
}
