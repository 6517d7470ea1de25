//! Image classification with any of the learning rules.

use std::path::Path;

use nmnc_core::analysis::{step_alignment, AlignmentAccumulator, AlignmentSummary};
use nmnc_core::credit::{manifold_states, Trainer};
use nmnc_core::data::{Dataset, SyntheticImages};
use nmnc_core::manifold::{jacobian_variance_curve, variance_explained_curve, InlineTracker, ManifoldTracker};
use nmnc_core::nets::{cifar_reference_specs, mlp_specs, Network};
use nmnc_core::numerics::{leading_right_singular, DenseMatrix, SeededRng};
use nmnc_core::{Error, Result};

use crate::cifar;
use crate::config::{Architecture, DataSource, ExperimentConfig};
use crate::output::{num, Table};
use crate::tracker::AsyncTracker;

/// Test examples used for manifold curves.
const CURVE_SAMPLES: usize = 500;
/// Inputs whose Jacobians are stacked for the Jacobian curve.
const JACOBIAN_SAMPLES: usize = 16;
const EVAL_CHUNK: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub feedback_updates: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub epoch: usize,
    pub layer: usize,
    /// `activation` or `jacobian`.
    pub kind: &'static str,
    pub pc_index: usize,
    pub cumulative_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRun {
    pub seed: u64,
    pub epochs: Vec<EpochRow>,
    pub alignment: Vec<AlignmentSummary>,
    pub curves: Vec<CurveRow>,
    /// Set when training stopped early on a non-finite value; `epochs` holds
    /// the epochs completed before that.
    pub diverged: Option<String>,
}

impl ImageRun {
    pub fn best_test_accuracy(&self) -> f64 {
        self.epochs
            .iter()
            .map(|e| e.test_accuracy)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Training and test splits for `seed`.
pub fn load_data(config: &ExperimentConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    match config.data.source {
        DataSource::Synthetic => {
            let root = SeededRng::new(seed).fork(1);
            let generator = SyntheticImages::new(config.data.synthetic, &mut root.fork(0))?;
            let train = generator.sample(config.data.train_size, &mut root.fork(1));
            let test = generator.sample(config.data.test_size, &mut root.fork(2));
            Ok((train, test))
        }
        DataSource::Cifar10 => cifar::load_dir(&config.data.path, config.data.train_size, config.data.test_size)
            .map_err(|e| Error::InvalidArgument(e.to_string())),
    }
}

pub fn build_network(
    config: &ExperimentConfig,
    features: usize,
    classes: usize,
    rng: &mut SeededRng,
) -> Result<Network> {
    let specs = match config.network.architecture {
        Architecture::Conv => cifar_reference_specs(config.network.width),
        Architecture::Mlp => {
            let mut sizes = vec![features];
            sizes.extend(config.hidden_dims());
            sizes.push(classes);
            mlp_specs(&sizes, config.network.activation)
        }
    };
    let net = Network::new(&specs, rng)?;
    if net.input_dim() != features || net.output_dim() != classes {
        return Err(Error::InvalidArgument(format!(
            "network maps {} -> {}, data has {features} features and {classes} classes",
            net.input_dim(),
            net.output_dim()
        )));
    }
    Ok(net)
}

/// Mean loss and accuracy over `data`, evaluated in fixed-size chunks.
pub fn evaluate(net: &Network, data: &Dataset) -> Result<(f64, f64)> {
    let (mut loss, mut acc) = (0.0, 0.0);
    let mut start = 0;
    while start < data.len() {
        let end = (start + EVAL_CHUNK).min(data.len());
        let idx: Vec<usize> = (start..end).collect();
        let (x, y) = data.batch(&idx);
        let (l, a) = net.evaluate(&x, &y)?;
        loss += l * idx.len() as f64;
        acc += a * idx.len() as f64;
        start = end;
    }
    let n = data.len().max(1) as f64;
    Ok((loss / n, acc / n))
}

/// Cumulative activation-variance and Jacobian-variance curves of every hidden layer.
pub fn manifold_curves(net: &Network, data: &Dataset, epoch: usize) -> Result<Vec<CurveRow>> {
    let sample = data.head(CURVE_SAMPLES.min(data.len()));
    let cache = net.forward(&sample.inputs)?;
    let mut rows = Vec::new();
    for l in 0..net.hidden_count() {
        let acts = &cache.post[l];
        let curve = variance_explained_curve(acts)?;
        let k = acts.rows().min(acts.cols()) - 1;
        rows.extend(curve.cumulative.iter().take(k).enumerate().map(|(i, &c)| CurveRow {
            epoch,
            layer: l,
            kind: "activation",
            pc_index: i + 1,
            cumulative_fraction: c,
        }));
        if k == 0 || curve.eigenvalues[0] == 0.0 {
            continue;
        }
        let mut centered = acts.clone();
        let means: Vec<f64> = centered.column_sums().iter().map(|s| s / acts.rows() as f64).collect();
        for r in 0..centered.rows() {
            centered.row_mut(r).iter_mut().zip(&means).for_each(|(v, m)| *v -= m);
        }
        let positive = curve
            .eigenvalues
            .iter()
            .take(k)
            .filter(|&&e| e > 1e-12 * curve.eigenvalues[0])
            .count();
        let (_, u) = leading_right_singular(&centered, positive)?;
        let jacobians = (0..JACOBIAN_SAMPLES.min(sample.len()))
            .map(|i| net.jacobian(sample.inputs.row(i), l))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&DenseMatrix> = jacobians.iter().collect();
        let j = DenseMatrix::vstack(&refs)?;
        let jc = jacobian_variance_curve(&j, &u)?;
        rows.extend(jc.iter().enumerate().map(|(i, &c)| CurveRow {
            epoch,
            layer: l,
            kind: "jacobian",
            pc_index: i + 1,
            cumulative_fraction: c,
        }));
    }
    Ok(rows)
}

/// Trains one seed on the given splits.
pub fn train_image(config: &ExperimentConfig, seed: u64, train: &Dataset, test: &Dataset) -> Result<ImageRun> {
    let root = SeededRng::new(seed);
    let net = build_network(config, train.features(), train.classes, &mut root.fork(2))?;
    let tc = config.trainer_config();
    let mut trainer_rng = root.fork(3);
    if config.train.async_pca {
        let states = manifold_states(&net, &tc, &mut trainer_rng)?;
        let tracker = AsyncTracker::new(states, config.train.queue_capacity);
        let trainer = Trainer::with_tracker(net, tc, tracker, &mut trainer_rng)?;
        run(trainer, config, seed, train, test, root.fork(4))
    } else {
        let trainer: Trainer<InlineTracker> = Trainer::new(net, tc, &mut trainer_rng)?;
        run(trainer, config, seed, train, test, root.fork(4))
    }
}

fn run<T: ManifoldTracker>(
    mut trainer: Trainer<T>,
    config: &ExperimentConfig,
    seed: u64,
    train: &Dataset,
    test: &Dataset,
    mut shuffle: SeededRng,
) -> Result<ImageRun> {
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut alignment = AlignmentAccumulator::default();
    let mut curves = Vec::new();
    let curves_every = config.train.curves_every;
    if curves_every > 0 {
        curves.extend(manifold_curves(&trainer.net, test, 0)?);
    }
    let mut diverged = None;
    for epoch in 1..=config.epochs {
        match train_one_epoch(&mut trainer, config, train, test, &mut shuffle, &mut alignment, epoch) {
            Ok(row) => {
                log::info!(
                    "seed {seed} epoch {epoch}: train loss {:.4} test acc {:.4}",
                    row.train_loss,
                    row.test_accuracy
                );
                epochs.push(row);
            }
            Err(e @ Error::NonFinite(_)) => {
                log::warn!("seed {seed} diverged in epoch {epoch}: {e}");
                diverged = Some(format!("epoch {epoch}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        }
        if curves_every > 0 && epoch % curves_every == 0 {
            curves.extend(manifold_curves(&trainer.net, test, epoch)?);
        }
    }
    Ok(ImageRun {
        seed,
        epochs,
        alignment: alignment.summaries(),
        curves,
        diverged,
    })
}

fn train_one_epoch<T: ManifoldTracker>(
    trainer: &mut Trainer<T>,
    config: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    shuffle: &mut SeededRng,
    alignment: &mut AlignmentAccumulator,
    epoch: usize,
) -> Result<EpochRow> {
    let every = config.train.alignment_every;
    let mut failure = None;
    let metrics = trainer.train_epoch_observed(train, shuffle, &mut |view| {
        if every == 0 || (view.step - 1) % every != 0 || failure.is_some() {
            return;
        }
        match step_alignment(view, epoch) {
            Ok(records) => records.iter().for_each(|r| alignment.push(r)),
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    if !metrics.train_loss.is_finite() {
        return Err(Error::NonFinite("training loss"));
    }
    let (test_loss, test_accuracy) = evaluate(&trainer.net, test)?;
    if !test_loss.is_finite() {
        return Err(Error::NonFinite("test loss"));
    }
    Ok(EpochRow {
        epoch,
        train_loss: metrics.train_loss,
        train_accuracy: metrics.train_accuracy,
        test_loss,
        test_accuracy,
        feedback_updates: metrics.feedback_updates,
    })
}

pub fn metrics_table(config: &ExperimentConfig, run: &ImageRun) -> Table {
    let layers = run.epochs.first().map_or(0, |e| e.feedback_updates.len());
    let mut header: Vec<String> = [
        "epoch",
        "rule",
        "test_accuracy",
        "test_loss",
        "train_loss",
        "train_accuracy",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..layers).map(|l| format!("feedback_updates_l{l}")));
    let mut t = Table::new(&header);
    for e in &run.epochs {
        let mut row = vec![
            e.epoch.to_string(),
            config.train.rule.name().to_string(),
            num(e.test_accuracy),
            num(e.test_loss),
            num(e.train_loss),
            num(e.train_accuracy),
        ];
        row.extend(e.feedback_updates.iter().map(ToString::to_string));
        t.push(row);
    }
    t
}

pub fn alignment_table(config: &ExperimentConfig, run: &ImageRun) -> Table {
    let mut t = Table::new(&[
        "epoch",
        "layer",
        "space",
        "angle_deg",
        "mean_angle_deg",
        "proj_mag",
        "pseudo_norm",
        "true_norm",
        "rule",
        "seed",
    ]);
    for s in &run.alignment {
        t.push(vec![
            s.epoch.to_string(),
            s.layer.to_string(),
            s.space.name().to_string(),
            num(s.angle_of_mean),
            num(s.mean_angle),
            num(s.projected_magnitude),
            num(s.pseudo_norm),
            num(s.true_norm),
            config.train.rule.name().to_string(),
            run.seed.to_string(),
        ]);
    }
    t
}

pub fn curves_table(run: &ImageRun) -> Table {
    let mut t = Table::new(&["epoch", "layer", "kind", "pc_index", "cumulative_fraction"]);
    for c in &run.curves {
        t.push(vec![
            c.epoch.to_string(),
            c.layer.to_string(),
            c.kind.to_string(),
            c.pc_index.to_string(),
            num(c.cumulative_fraction),
        ]);
    }
    t
}

/// Writes the tables of one seed and returns their file names.
pub fn write_outputs(config: &ExperimentConfig, run: &ImageRun, dir: &Path) -> std::io::Result<Vec<&'static str>> {
    let mut files = vec!["metrics.csv"];
    metrics_table(config, run).write(&dir.join("metrics.csv"))?;
    if config.train.alignment_every > 0 {
        alignment_table(config, run).write(&dir.join("alignment.csv"))?;
        files.push("alignment.csv");
    }
    if config.train.curves_every > 0 {
        curves_table(run).write(&dir.join("curves.csv"))?;
        files.push("curves.csv");
    }
    Ok(files)
}
