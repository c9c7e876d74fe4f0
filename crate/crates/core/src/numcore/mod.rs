//! Double-precision tensors, the handful of layers the network needs, and
//! reverse-mode differentiation over them.

mod gradcheck;
pub mod ops;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_with, GradCheckReport};
pub use optim::{Adam, Optimizer, Sgd};
pub use tape::{BranchRecord, ParamId, ParamStore, Parameter, Tape, Var};
pub use tensor::Tensor;
