//! File formats, configuration and command-line tools around
//! [`crowdcount_core`].

pub mod bench;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod frames;
pub mod model_file;
pub mod report;
pub mod temps;

pub use error::{Error, Result};
