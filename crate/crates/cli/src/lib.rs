//! Experiment driver for growth-rate analysis of time-periodic
//! age-structured renewal systems: configuration schema, built-in presets,
//! experiment runners with CSV/SVG artifacts, and plot rendering.
//!
//! The `renewal` binary in this crate is a thin command-line wrapper over
//! these modules.

pub mod config;
pub mod experiments;
pub mod presets;
pub mod svg;
