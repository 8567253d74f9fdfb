use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumCast};

/// Real scalar the closed-form model is written against: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + NumCast + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal, panicking only if the target type cannot hold it.
    fn lit(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("literal out of range for scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `[x]^+`
    fn pos(self) -> Self {
        self.max(Self::zero())
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts decibels to a linear ratio.
pub fn db_to_linear<T: Scalar>(db: T) -> T {
    T::lit(10.0).powf(db / T::lit(10.0))
}

/// Converts a linear ratio to decibels.
pub fn linear_to_db<T: Scalar>(x: T) -> T {
    T::lit(10.0) * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn db_roundtrip() {
        assert_eq!(db_to_linear(20.0_f64), 100.0);
        assert!((linear_to_db(db_to_linear(2.0_f64)) - 2.0).abs() < 1e-14);
        assert!((db_to_linear(2.0_f32) - 1.584_893).abs() < 1e-6);
    }

    #[test]
    fn positive_part() {
        assert_eq!((-3.0_f64).pos(), 0.0);
        assert_eq!(2.5_f32.pos(), 2.5);
    }
}
