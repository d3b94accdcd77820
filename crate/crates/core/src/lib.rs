pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod detector;
pub mod embedder;
pub mod env;
pub mod error;
pub mod graph;
pub mod nn;
pub mod pipeline;
pub mod projection;
pub mod rng;
pub mod sac;
pub mod suite;
pub mod synth;

pub use error::{Error, Result};
