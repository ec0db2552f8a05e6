//! Dense `f64` tensors and a reverse-mode tape covering every operation the
//! model composes.

pub mod check;
mod tape;
mod tensor;

pub use tape::{BatchStats, ElementOp, Tape, Var, BATCH_NORM_EPS};
pub use tensor::{dot, leaky_relu, logistic, matvec, softmax_slice, Tensor, LEAKY_SLOPE};
