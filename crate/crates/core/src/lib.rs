pub mod cli;
pub mod copula;
pub mod dataio;
pub mod generators;
mod error;
pub mod geogrid;
pub mod metrics;
pub mod normal;
pub mod privacy;
pub mod par;
pub mod rng;

pub use error::{Error, Result};
