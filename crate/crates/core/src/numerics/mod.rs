//! Dense tensors, a reverse-mode tape, Adam, and a finite-difference checker.

mod adam;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, ParamCheck};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::sigmoid;

/// Scalar type for tensors and parameters.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
/// Scalar type for tensors and parameters.
#[cfg(feature = "f32")]
pub type Real = f32;
