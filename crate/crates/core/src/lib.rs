//! Phase connection identification for three-phase distribution feeders.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod connection;
pub mod error;
pub mod exec;
pub mod feeder;
pub mod linear_pf;
pub mod mmle;
pub mod phase;
pub mod sim;
pub mod slsq;
pub mod stats;

pub use error::{Error, ErrorClass, Result};
pub use exec::Exec;
pub use phase::{ConnectionClass, PhaseLabel};
