//! Command-line front end for `loopspace`: configuration, run manifests,
//! table output and the experiment commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
