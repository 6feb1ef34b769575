//! Minimal reverse-mode automatic differentiation over dense 2-D `f64`
//! tensors.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s. Trainable
//! values live in a [`ParameterSet`]; each forward pass binds them onto a
//! fresh tape as leaves, and after [`Tape::backward`] the gradients are
//! accumulated back into the set.

mod adam;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{gradient_check, gradient_check_params, GradCheckReport, FD_STEP};
pub use params::{Bindings, Parameter, ParameterSet, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
