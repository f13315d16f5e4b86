//! Experiment harness around `rkm-core`: configuration files, dataset
//! formats, plots and the subcommands of the `rkm` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod svg;
