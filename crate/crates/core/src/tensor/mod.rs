//! Dense matrices and a reverse-mode tape over them.

mod matrix;
mod tape;

pub use matrix::{Lu, Matrix, PIVOT_TOLERANCE};
pub use tape::{DiffTensor, Gradients, NodeId, Tape, ACTIVATION_CLAMP};
