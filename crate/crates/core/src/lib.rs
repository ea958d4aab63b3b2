pub mod cli;
pub mod config;
pub mod correlations;
pub mod detectors;
pub mod evegan;
pub mod experiments;
pub mod format;
pub mod seed;
pub mod sources;
pub mod tinynet;
