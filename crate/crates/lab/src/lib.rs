//! Experiment harness for `beamlab-core`: dataset and checkpoint files, the
//! TOML experiment configuration, result tables and the commands behind the
//! `beamlab` binary.

pub mod checkpoint;
pub mod config;
pub mod datasets;
pub mod error;
pub mod results;
pub mod run;
pub mod tensorfile;
pub mod verify;

pub use error::{LabError, Result};
