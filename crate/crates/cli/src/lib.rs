//! Experiment runner: TOML configs in, deterministic CSV tables out.

pub mod commands;
pub mod config;
pub mod report;
