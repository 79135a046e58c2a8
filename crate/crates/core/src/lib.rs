//! Core estimators, learners and synthetic designs.
//!
//! The crate is `no_std` and only needs `alloc`; IO, networking and the
//! experiment CLI live in the companion `statbench` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod covshift;
pub mod error;
pub mod evalsuite;
pub mod hte;
pub mod learners;
pub mod linalg;
pub mod mestim;
pub mod rng;
pub mod synthgen;

pub use data::Dataset;
pub use error::{Error, Result};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
