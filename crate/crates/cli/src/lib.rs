//! Experiment-file driven front end for `egd-core`.

pub mod commands;
pub mod config;
pub mod expr;
pub mod output;
