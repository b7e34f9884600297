//! Detection of collapsed regions in vocoder output and constrained
//! regeneration of those regions under a linear-prediction mask.

pub mod config;
pub mod constraint;
pub mod detector;
pub mod envelope;
pub mod error;
pub mod generator;
pub mod lpc;
pub mod signal;
pub mod wav;

pub use config::Config;
pub use error::{Error, Result};
