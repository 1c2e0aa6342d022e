//! Dense matrices, parameter storage, reverse-mode graph and gradient checks.

pub mod gradcheck;
pub mod graph;
pub mod params;
pub mod tensor;

pub use gradcheck::{check_gradients, GradCheckConfig, GradCheckReport};
pub use graph::{Grads, Graph, Var};
pub use params::{clip_global_norm, Component, Param, ParamId, ParamStore};
pub use tensor::{log_softmax, masked_softmax, matmul, Real, Tensor2};
