//! Electromagnetically induced transparency and slow light in an
//! inhomogeneously broadened Λ medium.

// NaN must fail every range check, so negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod csv;
pub mod error;
pub mod fit;
pub mod harness;
pub mod lockin;
pub mod medium;
pub mod oracle;
pub mod quadrature;
pub mod signal;
pub mod spectrum;
pub mod susceptibility;

pub use error::{Error, Result};
pub use medium::MediumModel;
