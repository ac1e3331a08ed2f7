//! Scalar abstraction for the numeric kernels.
//!
//! All tensor math in this crate is written against [`Scalar`] so the same
//! kernels run at `f32` or `f64`. The crate root exports [`crate::Real`]
//! (`f64`), which the trainer, statistics, and I/O layers instantiate; the
//! tolerances documented throughout assume that alias.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar usable by every numeric kernel in the crate.
///
/// Implemented for `f32` and `f64`.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + Sum
    + ScalarOperand
    + LinalgScalar
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts a literal constant appearing in a formula.
    fn cst(v: f64) -> Self {
        Self::from_f64(v).expect("finite constant representable in scalar type")
    }

    /// Converts a count (batch size, vertex count, ...) to the scalar type.
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
