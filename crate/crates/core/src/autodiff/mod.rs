//! Reverse-mode automatic differentiation.

mod jacobian;
mod tape;

pub(crate) use jacobian::gram;
pub use jacobian::{jacobian_with_grad, Jacobian};
pub use tape::{Gradients, Pairs, Tape, Var};
