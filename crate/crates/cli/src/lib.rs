//! Command layer for the `kgperturb` binary: TOML run configuration,
//! the subcommand implementations, and the SVG chart writer.

pub mod chart;
pub mod commands;
pub mod config;
