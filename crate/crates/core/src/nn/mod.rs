//! Dense-network substrate: tape autodiff, networks, Adam, checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod dense;
pub mod gradcheck;
pub mod softmax;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::CheckpointKind;
pub use dense::{flatten_grads, BoundNet, DenseNet, LEAKY_SLOPE};
pub use gradcheck::finite_difference_check;
pub use tape::{Tape, Tensor, Var};
