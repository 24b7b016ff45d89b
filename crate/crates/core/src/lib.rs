pub mod cli;
pub mod dataset;
pub mod error;
pub mod hintgen;
pub mod membench;
pub mod pipeline;
pub mod qa;
pub mod rng;
pub mod sampler;
pub mod schema;
pub mod surface;
pub mod text;

pub use error::{Error, Result};
