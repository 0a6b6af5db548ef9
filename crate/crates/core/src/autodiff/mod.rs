//! Minimal reverse-mode differentiation engine: dense f64 tensors, a
//! Wengert tape of primitive operations, an Adam optimizer over a named
//! parameter store, and a versioned checkpoint format.

pub mod checkpoint;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use optim::{Ctx, ParamStore};
pub use tape::{softmax_slice, wrap_angle, Tape, Var};
pub use tensor::Tensor;
