//! Experiment runner for the quantized networked control simulation lab:
//! configuration loading, preset experiment definitions, parallel cell
//! execution and result emission (CSV, JSON, gnuplot).

pub mod config;
pub mod experiment;
pub mod output;
pub mod presets;
