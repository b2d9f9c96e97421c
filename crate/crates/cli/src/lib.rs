//! Command-line front end for the delayspace pipeline: configuration
//! flags, RIPE Atlas fetching, file-level subcommands and the artifact
//! service that feeds the viewer.

pub mod commands;
pub mod config;
pub mod fetch;
pub mod serve;
