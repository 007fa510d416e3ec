//! Dense `f64` matrices, a reverse-mode tape over them, and a
//! finite-difference gradient checker.

mod exec;
pub mod gradcheck;
mod matrix;
mod tape;

pub(crate) use exec::map_indices;
pub use exec::Exec;
pub use gradcheck::{check_taped, gradient_check, numeric_gradient, GradCheckOptions, GradCheckReport};
pub use matrix::{dot, sigmoid, Matrix};
pub use tape::{Gradients, Tape, Var, ZERO_NORM};
