//! Config-driven batch runs of the gapdiff pipeline.

pub mod config;
pub mod error;
pub mod run;

pub use config::{parse_config, RunConfig, SupportConfig, Task};
pub use error::CliError;
pub use run::{run, RunManifest, MANIFEST_NAME};
