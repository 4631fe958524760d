//! Symmetric exclusion on a finite channel coupled to two finite
//! reservoirs: stochastic simulation, the dual sticky walk, exact
//! expected-density evolution and analytic limit references.

pub mod error;
pub mod expectation;
pub mod harness;
pub mod kmc;
pub mod limits;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod sticky;
pub mod verify;

pub use error::{Error, Result};
