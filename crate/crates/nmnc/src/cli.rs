use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use nmnc_core::credit::Rule;
use nmnc_core::wp::RnnMethod;

use crate::config::{parse_list, parse_seeds, ConfigError, DataSource, ExperimentConfig, Task};
use crate::experiments::{plot, run_experiment};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "nmnc", version, about = "Noise-correlation credit assignment experiments")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    /// Configuration file; flags below take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// `N..M` (exclusive), `N..=M` or a comma-separated list.
    #[arg(long, global = true)]
    pub seeds: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Learning rule for `train`, perturbation family for `rnn-wp`.
    #[arg(long, global = true)]
    pub rule: Option<String>,
    /// Feedback update interval in batches.
    #[arg(long, global = true)]
    pub b: Option<usize>,
    /// Manifold dimensions, one per hidden layer (`rnn-wp` uses the first).
    #[arg(long, global = true)]
    pub pcs: Option<String>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Directory with the CIFAR-10 binary batches; selects CIFAR-10 data.
    #[arg(long, global = true)]
    pub data_path: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the image classifier with one learning rule.
    Train,
    /// Train the RNN on the sequential memory task.
    RnnWp,
    /// Monte-Carlo checks of the estimator theory.
    ValidateTheory,
    /// TwoNN and PCA dimensionality across network widths.
    EstimateDim,
    /// Train while recording gradient alignment every batch (unless configured otherwise).
    AnalyzeAlignment,
    /// Aggregate seed outputs below `--input` into per-figure tables in `--out`.
    PlotData {
        #[arg(long)]
        input: PathBuf,
    },
}

/// Builds the effective configuration for a subcommand.
pub fn resolve(command: &Command, o: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut c = match &o.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let value_err = |key: &str, message: String| ConfigError::Value {
        key: key.to_string(),
        message,
    };
    c.task = match command {
        Command::Train | Command::AnalyzeAlignment | Command::PlotData { .. } => Task::ImageClassify,
        Command::RnnWp => Task::RnnMemory,
        Command::ValidateTheory => Task::TheoryValidate,
        Command::EstimateDim => Task::DimEstimate,
    };
    if let Some(seed) = o.seed {
        c.seeds = vec![seed];
    }
    if let Some(s) = &o.seeds {
        c.seeds = parse_seeds(s).map_err(|m| value_err("--seeds", m))?;
    }
    if let Some(out) = &o.out {
        c.out = out.clone();
    }
    if let Some(rule) = &o.rule {
        match c.task {
            Task::RnnMemory => c.rnn.method = RnnMethod::parse(rule).map_err(|e| value_err("--rule", e.to_string()))?,
            _ => c.train.rule = Rule::parse(rule).map_err(|e| value_err("--rule", e.to_string()))?,
        }
    }
    if let Some(b) = o.b {
        c.train.b = b;
    }
    if let Some(pcs) = &o.pcs {
        let list = parse_list(pcs).map_err(|m| value_err("--pcs", m))?;
        match c.task {
            Task::RnnMemory => c.rnn.pcs = *list.first().ok_or_else(|| value_err("--pcs", "empty list".into()))?,
            _ => c.train.pcs = list,
        }
    }
    if let Some(sigma) = o.sigma {
        if !(sigma > 0.0) {
            return Err(value_err("--sigma", "must be positive".into()));
        }
        c.train.sigma = sigma;
    }
    if let Some(epochs) = o.epochs {
        c.epochs = epochs;
    }
    if let Some(path) = &o.data_path {
        c.data.source = DataSource::Cifar10;
        c.data.path = path.clone();
    }
    if matches!(command, Command::AnalyzeAlignment) && c.train.alignment_every == 0 {
        c.train.alignment_every = 1;
    }
    c.validate()?;
    Ok(c)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Some(threads) = std::env::var("MC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("MC_THREADS ignored: {e}");
        }
    }
    let config = match resolve(&cli.command, &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Command::PlotData { input } = &cli.command {
        return match plot::plot_data(input, &config.out) {
            Ok(files) => {
                for f in files {
                    println!("{}", config.out.join(f).display());
                }
                EXIT_OK
            }
            Err(e) => {
                eprintln!("plot-data failed: {e}");
                EXIT_RUNTIME
            }
        };
    }
    let outcomes = run_experiment(&config);
    let mut failed = false;
    for o in &outcomes {
        match &o.result {
            Ok(files) => println!("seed {}: ok ({})", o.seed, files.join(", ")),
            Err(e) => {
                failed = true;
                println!("seed {}: FAILED: {e}", o.seed);
            }
        }
    }
    if failed {
        EXIT_RUNTIME
    } else {
        EXIT_OK
    }
}
