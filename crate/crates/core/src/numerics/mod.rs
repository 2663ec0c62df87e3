//! Dense-tensor math, reverse-mode differentiation and Adam.

pub mod checkpoint;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use optim::{AdamConfig, ParamStore};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::{matmul2, matmul3, Elem, Tensor};
