//! Experiment harness: configuration files, dataset loading, CSV outputs and
//! the `nmnc` command-line interface.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cifar;
pub mod cli;
pub mod config;
pub mod experiments;
pub mod output;
pub mod stats;
pub mod tracker;

pub use config::{ConfigError, ExperimentConfig, Task};
