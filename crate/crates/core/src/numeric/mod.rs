//! Dense tensors, a define-by-run reverse-mode graph and a finite-difference
//! gradient checker covering exactly the operations the model needs.

mod gradcheck;
mod graph;
pub mod kernels;
mod sum;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckReport, REL_ERR_FLOOR};
pub use graph::{sigmoid, Gradients, Graph, Var};
pub use sum::exact_sum;
pub use tensor::Tensor;

/// Default `eps` for [`Graph::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;
