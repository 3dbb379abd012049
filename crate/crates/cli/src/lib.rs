//! Configuration, workflows and CSV output behind the `aoisched` command.

pub mod config;
pub mod error;
pub mod run;

pub use config::Config;
pub use error::{CliError, CliResult};
