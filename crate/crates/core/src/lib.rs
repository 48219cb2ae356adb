//! Ocean primitive equations with regularized Gent-McWilliams-Redi eddy
//! closures on a rectangular box.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod eddy;
pub mod elliptic;
pub mod dynamics;
pub mod eos;
pub mod error;
pub mod field;
pub mod grid;
pub mod neutral;
pub mod scenario;
pub mod snapshot;
pub mod verify;

pub use error::{GmrError, Result};
pub use field::{Dims, Field2, ScalarField, VectorField};
pub use grid::Grid;
