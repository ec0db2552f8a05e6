pub mod completion;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluator;
pub mod model;
pub mod numkernel;
pub mod params;
pub mod pipeline;
pub mod rgat;
pub mod rng;
pub mod seq_encoder;
pub mod synthetic;
pub mod tie;
pub mod trainer;

pub use error::{Error, Result};
