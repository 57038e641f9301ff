//! Numerical diagnostics for discrete Radon measures in `ℝ^{n+1}`: densities,
//! flatness coefficients, elliptic kernels, gradients of single layer
//! potentials and a dyadic-type lattice of cells.

// `!(x > 0.0)` also rejects NaN; index loops mirror the summation formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod check;
pub mod coeffs;
pub mod kernels;
pub mod lattice;
pub mod error;
pub mod linalg;
pub mod measure;
pub mod optim;
pub mod potential;

pub use error::{Error, Result};
