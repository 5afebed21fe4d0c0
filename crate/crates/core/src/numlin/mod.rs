//! Dense linear algebra kernels.
//!
//! Everything here is a pure function on immutable inputs, 64-bit only.

mod eig;
mod lu;
mod matrix;
mod svd;

pub use eig::sym_eig;
pub use lu::{invert, slogdet, solve};
pub use matrix::{dot, norm2, Matrix};
pub use svd::{svd, SvdFactors, MAX_SWEEPS};

pub(crate) use lu::Lu;
pub(crate) use matrix::{axpy, gemm};
