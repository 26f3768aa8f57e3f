//! Continuous-variable quantum direct communication: lattice encoding with
//! masking, control-mode channel testing, cloning attacks and the closed
//! forms for what an eavesdropper can steal before detection.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod analysis;
pub mod channel;
pub mod error;
pub mod lattice;
pub mod montecarlo;
pub mod numerics;
pub mod protocol;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{QdcError, Result};
