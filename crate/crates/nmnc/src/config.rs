//! Line-oriented `key = value` configuration with `[section]` headers.
//!
//! ```text
//! [experiment]
//! task = image-classify
//! seeds = 0,1,2
//!
//! [train]
//! rule = nmnc
//! b = 50
//! ```
//!
//! `#` starts a comment. Keys not listed here are rejected so typos surface
//! as configuration errors rather than silently ignored defaults.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nmnc_core::credit::{FeedbackInit, NoiseSharing, Rule, TrainerConfig};
use nmnc_core::data::{MemoryTaskSpec, SyntheticImageSpec};
use nmnc_core::nets::{Activation, Width};
use nmnc_core::wp::{FactorSide, RnnMethod, WpConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("key '{key}': {message}")]
    Value { key: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    ImageClassify,
    RnnMemory,
    TheoryValidate,
    DimEstimate,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::ImageClassify => "image-classify",
            Task::RnnMemory => "rnn-memory",
            Task::TheoryValidate => "theory-validate",
            Task::DimEstimate => "dim-estimate",
        }
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "image-classify" => Task::ImageClassify,
            "rnn-memory" => Task::RnnMemory,
            "theory-validate" => Task::TheoryValidate,
            "dim-estimate" => Task::DimEstimate,
            other => return Err(format!("unknown task '{other}'")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    Cifar10,
}

impl DataSource {
    pub fn name(self) -> &'static str {
        match self {
            DataSource::Synthetic => "synthetic",
            DataSource::Cifar10 => "cifar10-binary",
        }
    }
}

impl FromStr for DataSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "synthetic" => Ok(DataSource::Synthetic),
            "cifar10" | "cifar10-binary" => Ok(DataSource::Cifar10),
            other => Err(format!("unknown data source '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// The strided convolutional reference network.
    Conv,
    /// Fully connected layers of the sizes in `network.hidden`.
    Mlp,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Conv => "conv",
            Architecture::Mlp => "mlp",
        }
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "conv" => Ok(Architecture::Conv),
            "mlp" => Ok(Architecture::Mlp),
            other => Err(format!("unknown architecture '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    /// Directory holding `data_batch_{1..5}.bin` and `test_batch.bin`.
    pub path: PathBuf,
    /// Training examples; for CIFAR-10 0 means the whole set.
    pub train_size: usize,
    pub test_size: usize,
    pub synthetic: SyntheticImageSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub architecture: Architecture,
    /// Multiplier on every hidden layer (channels for conv, units for mlp).
    pub width: Width,
    /// MLP hidden sizes at width 1.
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub rule: Rule,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Feedback / PCA update interval in batches.
    pub b: usize,
    pub eta_b: f64,
    pub sigma: f64,
    /// Manifold dimensions per hidden layer; empty selects the defaults.
    pub pcs: Vec<usize>,
    pub init: FeedbackInit,
    pub initjac_batch: usize,
    pub sharing: NoiseSharing,
    pub same_minibatch: bool,
    /// `None` keeps the rule-specific default.
    pub mirror_lambda: Option<f64>,
    pub mirror_eta: Option<f64>,
    /// Alignment measured every this many batches; 0 disables it.
    pub alignment_every: usize,
    /// Activation / Jacobian variance curves every this many epochs; 0 disables them.
    pub curves_every: usize,
    /// Run PCA updates on a worker thread with a bounded drop-on-full queue.
    /// Faster on wide layers but no longer bit-reproducible.
    pub async_pca: bool,
    pub queue_capacity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnConfig {
    pub gap: usize,
    pub symbols: usize,
    pub alphabet: usize,
    pub hidden: usize,
    pub method: RnnMethod,
    pub side: FactorSide,
    pub eps: f64,
    /// `None` picks 1e-3 for backprop and 1e-4 for perturbation methods.
    pub lr: Option<f64>,
    pub momentum: f64,
    pub probes: usize,
    pub pcs: usize,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub eval_batches: usize,
    /// Alignment with the exact `W_hh` gradient every this many steps; 0 disables it.
    pub measure_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryConfig {
    pub cos2_trials: usize,
    pub moment_trials: usize,
    pub mse_trials: usize,
    pub fixed_point_updates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimConfig {
    pub widths: Vec<Width>,
    pub points: usize,
    pub train_epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub out: PathBuf,
    pub data: DataConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub rnn: RnnConfig,
    pub theory: TheoryConfig,
    pub dim: DimConfig,
}

/// Retained components of the reference network at full width.
const CONV_PCS: [usize; 4] = [512, 512, 512, 128];

impl Default for ExperimentConfig {
    fn default() -> Self {
        let synthetic = SyntheticImageSpec::cifar_like();
        Self {
            task: Task::ImageClassify,
            seeds: vec![0],
            epochs: 20,
            out: PathBuf::from("runs"),
            data: DataConfig {
                source: DataSource::Synthetic,
                path: PathBuf::from("data/cifar-10-batches-bin"),
                train_size: 5000,
                test_size: 1000,
                synthetic,
            },
            network: NetworkConfig {
                architecture: Architecture::Conv,
                width: Width::EIGHTH,
                hidden: vec![256, 128],
                activation: Activation::Relu,
            },
            train: TrainConfig {
                rule: Rule::Nmnc,
                lr: 0.001,
                momentum: 0.9,
                batch_size: 64,
                b: 5,
                eta_b: 0.001,
                sigma: 1.0,
                pcs: Vec::new(),
                init: FeedbackInit::PermutedInitJac,
                initjac_batch: 32,
                sharing: NoiseSharing::PerExample,
                same_minibatch: true,
                mirror_lambda: None,
                mirror_eta: None,
                alignment_every: 0,
                curves_every: 0,
                async_pca: false,
                queue_capacity: 4,
            },
            rnn: RnnConfig {
                gap: 0,
                symbols: 5,
                alphabet: 5,
                hidden: 128,
                method: RnnMethod::Backprop,
                side: FactorSide::Left,
                eps: 1e-4,
                lr: None,
                momentum: 0.9,
                probes: 1,
                pcs: 32,
                batch_size: 256,
                batches_per_epoch: 50,
                eval_batches: 4,
                measure_every: 10,
            },
            theory: TheoryConfig {
                cos2_trials: 10_000,
                moment_trials: 100_000,
                mse_trials: 1_000_000,
                fixed_point_updates: 10_000,
            },
            dim: DimConfig {
                widths: vec![Width::new(1, 8), Width::new(1, 4), Width::new(1, 2), Width::FULL],
                points: 2000,
                train_epochs: 0,
            },
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses a configuration; keys that are absent keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut fields = Fields::read(text)?;
        let d = Self::default();
        let f = &mut fields;
        let mut synthetic = d.data.synthetic;
        synthetic.classes = f.take("data.classes", synthetic.classes)?;
        synthetic.channels = f.take("data.channels", synthetic.channels)?;
        synthetic.height = f.take("data.height", synthetic.height)?;
        synthetic.width = f.take("data.width", synthetic.width)?;
        synthetic.latent_dim = f.take("data.latent_dim", synthetic.latent_dim)?;
        synthetic.clusters_per_class = f.take("data.clusters_per_class", synthetic.clusters_per_class)?;
        synthetic.separation = f.take("data.separation", synthetic.separation)?;
        synthetic.spread = f.take("data.spread", synthetic.spread)?;
        synthetic.pixel_noise = f.take("data.pixel_noise", synthetic.pixel_noise)?;
        let config = Self {
            task: f.take("experiment.task", d.task)?,
            seeds: f.take_with("experiment.seeds", d.seeds, parse_seeds)?,
            epochs: f.take("experiment.epochs", d.epochs)?,
            out: f.take("experiment.out", d.out)?,
            data: DataConfig {
                source: f.take("data.source", d.data.source)?,
                path: f.take("data.path", d.data.path)?,
                train_size: f.take("data.train_size", d.data.train_size)?,
                test_size: f.take("data.test_size", d.data.test_size)?,
                synthetic,
            },
            network: NetworkConfig {
                architecture: f.take("network.architecture", d.network.architecture)?,
                width: f.take_with("network.width", d.network.width, |s| {
                    Width::parse(s).map_err(|e| e.to_string())
                })?,
                hidden: f.take_with("network.hidden", d.network.hidden, parse_list)?,
                activation: f.take_with("network.activation", d.network.activation, |s| {
                    Activation::parse(s).map_err(|e| e.to_string())
                })?,
            },
            train: TrainConfig {
                rule: f.take_with("train.rule", d.train.rule, |s| {
                    Rule::parse(s).map_err(|e| e.to_string())
                })?,
                lr: f.take("train.lr", d.train.lr)?,
                momentum: f.take("train.momentum", d.train.momentum)?,
                batch_size: f.take("train.batch_size", d.train.batch_size)?,
                b: f.take("train.b", d.train.b)?,
                eta_b: f.take("train.eta_b", d.train.eta_b)?,
                sigma: f.take("train.sigma", d.train.sigma)?,
                pcs: f.take_with("train.pcs", d.train.pcs, parse_list)?,
                init: f.take_with("train.init", d.train.init, |s| {
                    FeedbackInit::parse(s).map_err(|e| e.to_string())
                })?,
                initjac_batch: f.take("train.initjac_batch", d.train.initjac_batch)?,
                sharing: f.take_with("train.sharing", d.train.sharing, |s| {
                    NoiseSharing::parse(s).map_err(|e| e.to_string())
                })?,
                same_minibatch: f.take("train.same_minibatch", d.train.same_minibatch)?,
                mirror_lambda: f.take_with("train.mirror_lambda", d.train.mirror_lambda, parse_auto)?,
                mirror_eta: f.take_with("train.mirror_eta", d.train.mirror_eta, parse_auto)?,
                alignment_every: f.take("train.alignment_every", d.train.alignment_every)?,
                curves_every: f.take("train.curves_every", d.train.curves_every)?,
                async_pca: f.take("train.async_pca", d.train.async_pca)?,
                queue_capacity: f.take("train.queue_capacity", d.train.queue_capacity)?,
            },
            rnn: RnnConfig {
                gap: f.take("rnn.gap", d.rnn.gap)?,
                symbols: f.take("rnn.symbols", d.rnn.symbols)?,
                alphabet: f.take("rnn.alphabet", d.rnn.alphabet)?,
                hidden: f.take("rnn.hidden", d.rnn.hidden)?,
                method: f.take_with("rnn.method", d.rnn.method, |s| {
                    RnnMethod::parse(s).map_err(|e| e.to_string())
                })?,
                side: f.take_with("rnn.side", d.rnn.side, |s| {
                    FactorSide::parse(s).map_err(|e| e.to_string())
                })?,
                eps: f.take("rnn.eps", d.rnn.eps)?,
                lr: f.take_with("rnn.lr", d.rnn.lr, parse_auto)?,
                momentum: f.take("rnn.momentum", d.rnn.momentum)?,
                probes: f.take("rnn.probes", d.rnn.probes)?,
                pcs: f.take("rnn.pcs", d.rnn.pcs)?,
                batch_size: f.take("rnn.batch_size", d.rnn.batch_size)?,
                batches_per_epoch: f.take("rnn.batches_per_epoch", d.rnn.batches_per_epoch)?,
                eval_batches: f.take("rnn.eval_batches", d.rnn.eval_batches)?,
                measure_every: f.take("rnn.measure_every", d.rnn.measure_every)?,
            },
            theory: TheoryConfig {
                cos2_trials: f.take("theory.cos2_trials", d.theory.cos2_trials)?,
                moment_trials: f.take("theory.moment_trials", d.theory.moment_trials)?,
                mse_trials: f.take("theory.mse_trials", d.theory.mse_trials)?,
                fixed_point_updates: f.take("theory.fixed_point_updates", d.theory.fixed_point_updates)?,
            },
            dim: DimConfig {
                widths: f.take_with("dim.widths", d.dim.widths, |s| {
                    s.split(',')
                        .map(|w| Width::parse(w.trim()).map_err(|e| e.to_string()))
                        .collect()
                })?,
                points: f.take("dim.points", d.dim.points)?,
                train_epochs: f.take("dim.train_epochs", d.dim.train_epochs)?,
            },
        };
        fields.finish()?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.train.batch_size == 0 || self.train.b == 0 || self.rnn.batch_size == 0 {
            return bad("batch sizes and the feedback interval must be positive".into());
        }
        if self.train.queue_capacity == 0 {
            return bad("queue capacity must be positive".into());
        }
        if self.network.architecture == Architecture::Mlp && self.network.hidden.is_empty() {
            return bad("an mlp needs at least one hidden layer".into());
        }
        if self.network.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        if let Err(e) = MemoryTaskSpec::new(self.rnn.gap, self.rnn.symbols, self.rnn.alphabet) {
            return bad(e.to_string());
        }
        if self.rnn.hidden == 0 || self.rnn.pcs == 0 {
            return bad("rnn hidden size and pcs must be positive".into());
        }
        if self.dim.widths.is_empty() {
            return bad("dim.widths must not be empty".into());
        }
        let s = &self.data.synthetic;
        if s.classes < 2 || s.channels == 0 || s.height == 0 || s.width == 0 || s.latent_dim == 0 {
            return bad("synthetic data needs at least two classes and non-empty images".into());
        }
        let image_task = matches!(self.task, Task::ImageClassify | Task::DimEstimate);
        if image_task
            && self.network.architecture == Architecture::Conv
            && self.data.source == DataSource::Synthetic
            && ((s.channels, s.height, s.width) != (3, 32, 32) || s.classes != 10)
        {
            return bad("the conv network expects 3x32x32 images in 10 classes; use architecture = mlp".into());
        }
        if !self.train.pcs.is_empty() {
            let dims = self.hidden_dims();
            if self.train.pcs.len() != dims.len() {
                return bad(format!(
                    "pcs lists {} layers, the network has {}",
                    self.train.pcs.len(),
                    dims.len()
                ));
            }
            if let Some((d, n)) = self.train.pcs.iter().zip(&dims).find(|(d, n)| **d == 0 || d > n) {
                return bad(format!("pcs {d} outside 1..={n}"));
            }
        }
        Ok(())
    }

    /// Canonical text form; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let list = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let auto = |v: Option<f64>| v.map_or_else(|| "auto".to_string(), |x| format!("{x:?}"));
        let syn = &self.data.synthetic;
        let t = &self.train;
        let r = &self.rnn;
        let seeds = self.seeds.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let widths = self
            .dim
            .widths
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let _ = write!(
            s,
            "[experiment]\ntask = {}\nseeds = {seeds}\nepochs = {}\nout = {}\n\n",
            self.task.name(),
            self.epochs,
            self.out.display()
        );
        let _ = write!(
            s,
            "[data]\nsource = {}\npath = {}\ntrain_size = {}\ntest_size = {}\nclasses = {}\nchannels = {}\n\
             height = {}\nwidth = {}\nlatent_dim = {}\nclusters_per_class = {}\nseparation = {:?}\nspread = {:?}\n\
             pixel_noise = {:?}\n\n",
            self.data.source.name(),
            self.data.path.display(),
            self.data.train_size,
            self.data.test_size,
            syn.classes,
            syn.channels,
            syn.height,
            syn.width,
            syn.latent_dim,
            syn.clusters_per_class,
            syn.separation,
            syn.spread,
            syn.pixel_noise
        );
        let _ = write!(
            s,
            "[network]\narchitecture = {}\nwidth = {}\nhidden = {}\nactivation = {}\n\n",
            self.network.architecture.name(),
            self.network.width,
            list(&self.network.hidden),
            self.network.activation.name()
        );
        let _ = write!(
            s,
            "[train]\nrule = {}\nlr = {:?}\nmomentum = {:?}\nbatch_size = {}\nb = {}\neta_b = {:?}\nsigma = {:?}\n\
             pcs = {}\ninit = {}\ninitjac_batch = {}\nsharing = {}\nsame_minibatch = {}\nmirror_lambda = {}\n\
             mirror_eta = {}\nalignment_every = {}\ncurves_every = {}\nasync_pca = {}\nqueue_capacity = {}\n\n",
            t.rule.name(),
            t.lr,
            t.momentum,
            t.batch_size,
            t.b,
            t.eta_b,
            t.sigma,
            list(&t.pcs),
            t.init.name(),
            t.initjac_batch,
            t.sharing.name(),
            t.same_minibatch,
            auto(t.mirror_lambda),
            auto(t.mirror_eta),
            t.alignment_every,
            t.curves_every,
            t.async_pca,
            t.queue_capacity
        );
        let _ = write!(
            s,
            "[rnn]\ngap = {}\nsymbols = {}\nalphabet = {}\nhidden = {}\nmethod = {}\nside = {}\neps = {:?}\nlr = {}\n\
             momentum = {:?}\nprobes = {}\npcs = {}\nbatch_size = {}\nbatches_per_epoch = {}\neval_batches = {}\n\
             measure_every = {}\n\n",
            r.gap,
            r.symbols,
            r.alphabet,
            r.hidden,
            r.method.name(),
            r.side.name(),
            r.eps,
            auto(r.lr),
            r.momentum,
            r.probes,
            r.pcs,
            r.batch_size,
            r.batches_per_epoch,
            r.eval_batches,
            r.measure_every
        );
        let _ = write!(
            s,
            "[theory]\ncos2_trials = {}\nmoment_trials = {}\nmse_trials = {}\nfixed_point_updates = {}\n\n",
            self.theory.cos2_trials, self.theory.moment_trials, self.theory.mse_trials, self.theory.fixed_point_updates
        );
        let _ = write!(
            s,
            "[dim]\nwidths = {widths}\npoints = {}\ntrain_epochs = {}\n",
            self.dim.points, self.dim.train_epochs
        );
        s
    }

    /// Flat widths of the hidden layers of the configured image network.
    pub fn hidden_dims(&self) -> Vec<usize> {
        match self.network.architecture {
            Architecture::Conv => nmnc_core::nets::cifar_reference_specs(self.network.width)
                .iter()
                .map(|s| s.output_dim())
                .collect::<Vec<_>>()
                .split_last()
                .map(|(_, h)| h.to_vec())
                .unwrap_or_default(),
            Architecture::Mlp => self
                .network
                .hidden
                .iter()
                .map(|&h| self.network.width.apply(h))
                .collect(),
        }
    }

    /// Retained components per hidden layer: the configured list, or the
    /// width-scaled reference defaults (conv) / `min(n, 32)` (mlp).
    pub fn effective_pcs(&self) -> Vec<usize> {
        if !self.train.pcs.is_empty() {
            return self.train.pcs.clone();
        }
        let dims = self.hidden_dims();
        match self.network.architecture {
            Architecture::Conv => CONV_PCS
                .iter()
                .zip(&dims)
                .map(|(&d, &n)| self.network.width.apply(d).min(n))
                .collect(),
            Architecture::Mlp => dims.iter().map(|&n| n.min(32)).collect(),
        }
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        let t = &self.train;
        let mut c = TrainerConfig::new(t.rule, self.effective_pcs());
        c.lr = t.lr;
        c.momentum = t.momentum;
        c.batch_size = t.batch_size;
        c.interval = t.b;
        c.eta_b = t.eta_b;
        c.sigma_nmnc = t.sigma;
        c.init = t.init;
        c.initjac_batch = t.initjac_batch;
        c.sharing = t.sharing;
        c.same_minibatch = t.same_minibatch;
        if let Some(l) = t.mirror_lambda {
            c.mirror_lambda = l;
        }
        if let Some(e) = t.mirror_eta {
            c.mirror_eta = e;
        }
        c
    }

    pub fn wp_config(&self) -> WpConfig {
        let r = &self.rnn;
        let mut c = WpConfig::new(r.method);
        c.side = r.side;
        c.eps_wp = r.eps;
        if let Some(lr) = r.lr {
            c.lr = lr;
        }
        c.momentum = r.momentum;
        c.probes = r.probes;
        c.pcs = r.pcs;
        c
    }

    pub fn memory_spec(&self) -> MemoryTaskSpec {
        MemoryTaskSpec {
            gap: self.rnn.gap,
            symbols: self.rnn.symbols,
            alphabet: self.rnn.alphabet,
        }
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

/// Accepts `3`, `0,2,5`, `0..5` (exclusive) and `0..=4`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let s = s.trim();
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("invalid seed '{t}'"));
    let seeds = if let Some((a, b)) = s.split_once("..=") {
        (num(a)?..=num(b)?).collect()
    } else if let Some((a, b)) = s.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if seeds.is_empty() {
        return Err(format!("seed range '{s}' is empty"));
    }
    Ok(seeds)
}

/// Comma-separated positive integers; the empty string is the empty list.
pub fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("invalid integer '{t}'")))
        .collect()
}

fn parse_auto(s: &str) -> Result<Option<f64>, String> {
    if s == "auto" {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| format!("expected a number or 'auto', got '{s}'"))
}

struct Fields {
    values: BTreeMap<String, String>,
}

impl Fields {
    fn read(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: &str| ConfigError::Syntax {
                line: i + 1,
                message: message.to_string(),
            };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| syntax("unterminated section header"))?;
                section = name.trim().to_string();
                if section.is_empty() {
                    return Err(syntax("empty section name"));
                }
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| syntax("expected 'key = value'"))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(syntax("empty key"));
            }
            if section.is_empty() {
                return Err(syntax("key outside of any section"));
            }
            let key = format!("{section}.{k}");
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(syntax(&format!("duplicate key '{key}'")));
            }
        }
        Ok(Self { values })
    }

    fn take<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.take_with(key, default, |s| s.parse::<T>().map_err(|e| e.to_string()))
    }

    fn take_with<T>(
        &mut self,
        key: &str,
        default: T,
        parse: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<T, ConfigError> {
        match self.values.remove(key) {
            None => Ok(default),
            Some(v) => parse(&v).map_err(|message| ConfigError::Value {
                key: key.to_string(),
                message,
            }),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.values.into_keys().next() {
            Some(k) => Err(ConfigError::UnknownKey(k)),
            None => Ok(()),
        }
    }
}
