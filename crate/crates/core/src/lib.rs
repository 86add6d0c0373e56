pub mod benchmarks;
pub mod cli;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod paramnet;
pub mod polytope;
pub mod regions;
pub mod solver;
pub mod trainer;

pub use error::{Error, Result};
