//! Command-line surface: manifests, configuration, commands.

pub mod commands;
pub mod config;
pub mod manifest;
