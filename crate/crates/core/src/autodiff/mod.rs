//! Dense-tensor numeric core with reverse-mode automatic differentiation.
//!
//! 64-bit floats throughout; a dynamic tape rebuilt each forward pass (the
//! rollout length varies per episode); gradients accumulate across backward
//! calls until zeroed. Single-threaded per graph.

mod checkpoint;
mod gradcheck;
mod graph;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointError, Record};
pub use gradcheck::{gradient_check, gradient_check_coords, rel_err, GradCheckError, GradCheckReport};
pub use graph::Graph;
pub use tensor::{Tensor, TensorError};
