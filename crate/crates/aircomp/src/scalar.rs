//! Real scalar abstraction used throughout the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type the solvers are generic over (`f32`, `f64`, ...).
///
/// Combines nalgebra's `RealField` with num-traits conversions so that
/// literal constants and tolerances can be written once in `f64`.
pub trait Real: RealField + FromPrimitive + ToPrimitive + Copy {
    /// Lossy conversion from `f64`.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant not representable in scalar type")
    }

    /// Lossy conversion to `f64`.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }

    /// Finiteness check (routed through `f64`).
    fn finite(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl<T> Real for T where T: RealField + FromPrimitive + ToPrimitive + Copy {}
