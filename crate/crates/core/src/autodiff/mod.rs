//! Dense tensors, reverse-mode differentiation, SGD and the step schedule.

pub mod checkpoint;
pub mod kernels;
mod optim;
mod scalar;
mod schedule;
mod tape;
mod tensor;

pub use kernels::{ConvGeom, SparsePattern};
pub use optim::{Sgd, SgdConfig};
pub use scalar::Scalar;
pub use schedule::LrSchedule;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
