//! Numerical core: tensors, reverse-mode differentiation, special
//! functions, the Adam optimizer and a finite-difference gradient checker.

mod adam;
mod gradcheck;
pub mod special;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{grad_check, GradCheckReport, GroupError, Objective};
pub use special::{digamma, lgamma, ln_beta, trigamma, EULER_GAMMA};
pub use tape::{Graph, Var};
pub use tensor::{sigmoid, softmax_backward, softmax_in_place, softplus, NamedParams, ParamStore, Tensor};

pub(crate) use tensor::{dot, matvec_acc, matvec_t_acc, outer_acc};
