//! Dense kernels for the block-structured KKT systems of the interior-point
//! solver.

pub mod arrow;
pub mod dense;

pub use arrow::{ArrowFactor, ArrowSystem};
pub use dense::{Inertia, Ldlt, SymMatrix};
