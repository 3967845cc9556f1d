use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type the analysis math runs on: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts from `f64`, the precision engine values arrive in.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("every f64 converts to a float type")
    }

    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("index fits in a float type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }

    fn half() -> Self {
        Self::of(0.5)
    }

    fn two() -> Self {
        Self::of(2.0)
    }

    fn hundred() -> Self {
        Self::of(100.0)
    }

    /// Rounds to two decimals, the precision used in reports.
    fn round2(self) -> Self {
        (self * Self::hundred()).round() / Self::hundred()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Median of a slice; `None` for an empty slice. NaNs sort last.
pub fn median<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Greater));
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        Some(sorted[mid])
    } else {
        Some((sorted[mid - 1] + sorted[mid]) * T::half())
    }
}

/// Median absolute deviation around the median.
pub fn mad<T: Scalar>(values: &[T]) -> Option<T> {
    let center = median(values)?;
    let deviations: Vec<T> = values.iter().map(|v| (*v - center).abs()).collect();
    median(&deviations)
}
