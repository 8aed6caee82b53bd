//! Pseudospectral solver and analyticity diagnostics for the Novikov-type
//! equation `u_t = d_x(u^2) + d_x Lambda^{-2}(u^2 + d_x(u^2))` on a periodic
//! box standing in for the line.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod norms;
pub mod par;
pub mod runner;
pub mod spectral;
pub mod taylor;
pub mod tracker;

pub use error::{Error, Result};
pub use par::Exec;
pub use spectral::{Field, GridSpec};
