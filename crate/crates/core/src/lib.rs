//! Conjugate gradients with adaptive, delay-based estimates of the A-norm
//! of the error.

// `!(x > 0.0)` is used on purpose so that NaN is rejected along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod estimator;
pub mod oracle;
pub mod precond;
pub mod report;
pub mod session;
pub mod solver;
pub mod sparse;
pub mod sum;
pub mod synth;
pub mod vector;
