//! Dense tensors, reverse-mode autodiff and Adam.

mod adam;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use params::{Binding, GradMode, Param, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
