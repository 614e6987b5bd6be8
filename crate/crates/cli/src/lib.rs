//! Library surface of the `tsavoid` command-line tool: run-configuration
//! parsing and the command implementations, kept callable so integration
//! tests can drive them without spawning processes.

pub mod commands;
pub mod config;
