//! Experiment driver for the `coil` toolkit: configuration, the shared
//! simulate → train → synthesise → reconstruct pipeline and the bodies of
//! the `coil` subcommands.

pub mod commands;
pub mod config;
pub mod pipeline;
