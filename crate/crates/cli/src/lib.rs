//! Command-line front end for `impulse-volterra`: strict TOML configurations,
//! the `solve`, `grad`, `check` and `optimize` commands, and the CSV/JSON
//! artifacts they write.

pub mod checks;
pub mod config;
pub mod output;
pub mod run;

pub use config::{load_config, parse_config, Command, RunConfig};
pub use run::{execute, run, RunError, RunOutcome};
