//! File formats, configuration and the command line for the `modechoice`
//! toolkit. Estimation and models live in `modechoice-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod envelope;
pub mod io;
pub mod report;

pub use modechoice_core as core;
