use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point type used for thresholds, probabilities and metrics: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
    fn of_f64(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts to every Scalar")
    }

    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("count converts to every Scalar")
    }

    fn of_i32(value: i32) -> Self {
        Self::from_i32(value).expect("i32 converts to every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `numerator / denominator` computed in `f64` and narrowed once.
    fn ratio(numerator: u128, denominator: u128) -> Self {
        Self::of_f64(numerator as f64 / denominator as f64)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
