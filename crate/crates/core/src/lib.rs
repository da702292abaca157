//! Graph total variation and Ginzburg-Landau functionals on random point
//! clouds, their continuum limits, and the Monte-Carlo machinery used to
//! check convergence rates.

pub mod assignment;
pub mod continuum;
pub mod domain;
pub mod energy;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod kernel;
pub mod minimize;
pub mod numeric;
#[cfg(any(test, feature = "oracles"))]
pub mod oracles;
pub mod ratelab;
pub mod transport;

pub use error::{Error, Result};
