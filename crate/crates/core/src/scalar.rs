use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar the learners are generic over.
///
/// Implemented for `f32` and `f64`. Tolerances are expressed per type so the
/// same invariant checks work at single precision.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + Default + Send + Sync + 'static
{
    /// Absolute asymmetry tolerated in a metric matrix.
    const SYMMETRY_TOL: f64;
    /// Most negative eigenvalue tolerated in a metric matrix.
    const PSD_TOL: f64;

    /// Lossy conversion from `f64`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }
}

impl Scalar for f64 {
    const SYMMETRY_TOL: f64 = 1e-10;
    const PSD_TOL: f64 = 1e-8;
}

impl Scalar for f32 {
    const SYMMETRY_TOL: f64 = 1e-4;
    const PSD_TOL: f64 = 1e-4;
}
