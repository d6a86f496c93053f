//! Experiment driver for `bagprior`: configuration, per-repeat pipeline,
//! report files and the subcommands behind the `bagprior` binary.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;
