//! Steady irrotational compressible potential flow past obstacles under
//! conservative body forces.

// `!(x < y)` rejects NaN on purpose; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod continuation;
pub mod cutoff;
pub mod error;
pub mod export;
pub mod force;
pub mod gas;
pub mod interp;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod sonic;

pub use error::{Error, Result};
