//! Configuration-driven command line: config parsing, artifact emission,
//! and the run orchestration tying the pipeline together.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, Command, RunConfig};
pub use run::run;
