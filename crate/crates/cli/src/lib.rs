//! Command implementations behind the `valleycut` binary.

pub mod bench;
pub mod error;
pub mod manifest;
pub mod report;
pub mod simulate;

pub use error::{CliError, CliResult};
pub use manifest::{RunManifest, VERSION};
