pub mod config;
pub mod counting;
pub mod distribution;
pub mod electrothermal;
pub mod error;
pub mod experiment;
pub mod histogram;
pub mod io;
pub mod pipeline;
mod rng;
pub mod tagger;
pub mod waveform;

pub use error::{Error, Result};
