//! Vectorized sparse second-order forward automatic differentiation for
//! Legendre-Gauss-Radau direct collocation of optimal control problems.

// `!(a < b)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coo;
pub mod expr;
pub mod graph;
pub mod lgr;
pub mod oracle;
pub mod transcribe;
pub mod vecgraph;
