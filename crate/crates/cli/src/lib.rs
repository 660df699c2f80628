//! Command-line front end for `semicov-core`: TOML run configs, dispatch to
//! the library, and CSV/JSON artifacts.

pub mod artifacts;
pub mod config;
pub mod run;

pub use config::{parse_config, Command, ConfigError, RunConfig};
pub use run::{execute, Outcome, RunError};
