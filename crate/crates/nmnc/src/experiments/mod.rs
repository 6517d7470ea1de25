//! Per-task experiment drivers. Every seed writes into its own
//! `seed-N/` directory; seeds run in parallel on the rayon pool.

pub mod dim;
pub mod image;
pub mod plot;
pub mod rnn;
pub mod theory;

use std::path::Path;

use rayon::prelude::*;

use nmnc_core::data::Dataset;

use crate::config::{DataSource, ExperimentConfig, Task};
use crate::output::{seed_dir, write_manifest};

/// Result of one seed: the files written, or why it failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub result: Result<Vec<&'static str>, String>,
}

impl SeedOutcome {
    pub fn ok(&self) -> bool {
        self.result.is_ok()
    }
}

/// Runs every seed of `config` and writes outputs below `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> Vec<SeedOutcome> {
    // CIFAR-10 is loaded once and shared; synthetic data is drawn per seed.
    let shared = match (config.task, config.data.source) {
        (Task::ImageClassify | Task::DimEstimate, DataSource::Cifar10) => match image::load_data(config, 0) {
            Ok(d) => Some(d),
            Err(e) => {
                return config
                    .seeds
                    .iter()
                    .map(|&seed| SeedOutcome {
                        seed,
                        result: Err(e.to_string()),
                    })
                    .collect()
            }
        },
        _ => None,
    };
    config
        .seeds
        .par_iter()
        .map(|&seed| {
            let dir = seed_dir(&config.out, seed);
            let result = run_seed(config, seed, shared.as_ref(), &dir).and_then(|(files, late_failure)| {
                write_manifest(&dir, config, seed, &files).map_err(|e| e.to_string())?;
                late_failure.map_or(Ok(files), Err)
            });
            if let Err(e) = &result {
                log::error!("seed {seed} failed: {e}");
            }
            SeedOutcome { seed, result }
        })
        .collect()
}

/// Files written, plus a failure that still left partial outputs behind.
type SeedFiles = (Vec<&'static str>, Option<String>);

fn run_seed(
    config: &ExperimentConfig,
    seed: u64,
    shared: Option<&(Dataset, Dataset)>,
    dir: &Path,
) -> Result<SeedFiles, String> {
    let data = |seed| -> Result<std::borrow::Cow<'_, (Dataset, Dataset)>, String> {
        match shared {
            Some(d) => Ok(std::borrow::Cow::Borrowed(d)),
            None => image::load_data(config, seed)
                .map(std::borrow::Cow::Owned)
                .map_err(|e| e.to_string()),
        }
    };
    let io = |e: std::io::Error| e.to_string();
    match config.task {
        Task::ImageClassify => {
            let d = data(seed)?;
            let run = image::train_image(config, seed, &d.0, &d.1).map_err(|e| e.to_string())?;
            let files = image::write_outputs(config, &run, dir).map_err(io)?;
            let diverged = run
                .diverged
                .map(|d| format!("diverged in {d} (completed epochs written)"));
            Ok((files, diverged))
        }
        Task::DimEstimate => {
            let d = data(seed)?;
            let rows = dim::estimate_dims(config, seed, &d.0, &d.1).map_err(|e| e.to_string())?;
            dim::write_outputs(&rows, dir).map(|f| (f, None)).map_err(io)
        }
        Task::RnnMemory => {
            let run = rnn::train_rnn(config, seed).map_err(|e| e.to_string())?;
            rnn::write_outputs(config, &run, dir).map(|f| (f, None)).map_err(io)
        }
        Task::TheoryValidate => {
            let run = theory::validate_theory(config, seed).map_err(|e| e.to_string())?;
            theory::write_outputs(&run, dir).map(|f| (f, None)).map_err(io)
        }
    }
}
