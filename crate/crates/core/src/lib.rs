//! Scheduling and blending optimisation for a biomass preprocessing line.

pub mod error;
pub mod milp;
pub mod model;
pub mod pool;
pub mod runner;
pub mod saa;
pub mod sequencing;
pub mod solver;

pub use error::{Error, Result};
