//! Dense `f64` tensors with a recorded computation graph and reverse-mode
//! differentiation.
//!
//! Backward rules are expressed with the same tensor ops as the forward pass,
//! so passing `create_graph = true` yields gradients that can themselves be
//! differentiated. This is what lets an unrolled optimizer that consumes
//! `∇ₓJ` be trained end to end.
//!
//! ```
//! use autograd::{grad, Tensor};
//!
//! let x = Tensor::var(vec![1.0, 2.0, 3.0], &[3]).unwrap();
//! let f = x.square().sum();
//! let g = grad(&f, &[&x], true).unwrap().remove(0);
//! assert_eq!(g.to_vec(), vec![2.0, 4.0, 6.0]);
//! let h = grad(&g.sum(), &[&x], false).unwrap().remove(0);
//! assert_eq!(h.to_vec(), vec![2.0, 2.0, 2.0]);
//! ```

mod backward;
mod check;
mod conv;
mod error;
mod kernels;
mod op;
mod tensor;
pub mod zoo;

pub use backward::{grad, GradStore};
pub use check::{finite_diff_gradient, max_rel_error};
pub use conv::{Conv2dSpec, PaddingMode};
pub use error::{Error, Result};
pub use tensor::{Tensor, TensorId};

impl Tensor {
    /// Name of the op that produced this tensor, if it is a graph node.
    pub fn op_name(&self) -> Option<&'static str> {
        self.op().map(op::Op::name)
    }
}
