//! Hierarchical ADMM coordination for AC optimal power flow.
//!
//! The pipeline is: [`network`] data → [`partition`] into a lifted
//! consensus structure → per-partition [`opf`] models solved by the
//! interior-point kernel → [`admm`] coordination, optionally warm-started by
//! a supervisory solve on an aggregated network built by [`coarsen`].

pub mod admm;
pub mod coarsen;
pub mod error;
pub mod graph;
pub mod network;
pub mod opf;
pub mod partition;

pub use error::{CoreError, Result};
