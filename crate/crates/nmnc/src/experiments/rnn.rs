//! Sequential memory task with a vanilla RNN trained by weight perturbation.

use std::path::Path;

use nmnc_core::data::{generate_memory_batch, MemoryBatch};
use nmnc_core::nets::{argmax, Rnn};
use nmnc_core::numerics::SeededRng;
use nmnc_core::wp::WpTrainer;
use nmnc_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::output::{num, opt, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct RnnEpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: f64,
    /// Fraction of recalled symbols reproduced correctly.
    pub eval_recall: f64,
    /// Mean cosine between the estimated and exact `W_hh` updates.
    pub cos_whh: Option<f64>,
    pub proj_whh: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnRun {
    pub seed: u64,
    pub epochs: Vec<RnnEpochRow>,
}

impl RnnRun {
    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.eval_loss)
    }

    /// Mean `W_hh` cosine over every measured step of the run.
    pub fn mean_cosine(&self) -> Option<f64> {
        let v: Vec<f64> = self.epochs.iter().filter_map(|e| e.cos_whh).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Loss over every step and recall accuracy over the final `S` steps.
pub fn evaluate_rnn(rnn: &Rnn, batches: &[MemoryBatch], symbols: usize) -> Result<(f64, f64)> {
    let (mut loss, mut correct, mut total) = (0.0, 0usize, 0usize);
    for batch in batches {
        let (l, traj) = rnn.forward_loss(&batch.inputs, &batch.targets)?;
        loss += l;
        let t_len = batch.targets.len();
        for t in t_len - symbols..t_len {
            for (b, &target) in batch.targets[t].iter().enumerate() {
                correct += usize::from(argmax(traj.logits[t].row(b)) == target);
                total += 1;
            }
        }
    }
    Ok((loss / batches.len().max(1) as f64, correct as f64 / total.max(1) as f64))
}

pub fn train_rnn(config: &ExperimentConfig, seed: u64) -> Result<RnnRun> {
    let spec = config.memory_spec();
    spec.validate()?;
    let r = &config.rnn;
    let root = SeededRng::new(seed);
    let rnn = Rnn::new(spec.alphabet, r.hidden, spec.alphabet, &mut root.fork(2));
    let mut trainer = WpTrainer::new(rnn, config.wp_config(), &mut root.fork(3))?;
    let mut data_rng = root.fork(4);
    let mut eval_rng = root.fork(5);
    let eval: Vec<MemoryBatch> = (0..r.eval_batches.max(1))
        .map(|_| generate_memory_batch(&spec, r.batch_size, &mut eval_rng))
        .collect::<Result<_>>()?;
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let (mut loss, mut cos, mut proj, mut measured) = (0.0, 0.0, 0.0, 0usize);
        for _ in 0..r.batches_per_epoch {
            let batch = generate_memory_batch(&spec, r.batch_size, &mut data_rng)?;
            let measure = r.measure_every > 0 && trainer.steps() % r.measure_every == 0;
            let report = trainer.step(&batch, measure)?;
            loss += report.loss;
            if let Some(a) = report.w_hh {
                if a.cosine.is_finite() {
                    cos += a.cosine;
                    proj += a.projected;
                    measured += 1;
                }
            }
        }
        let (eval_loss, eval_recall) = evaluate_rnn(&trainer.rnn, &eval, spec.symbols)?;
        if !eval_loss.is_finite() {
            return Err(Error::NonFinite("rnn evaluation loss"));
        }
        log::info!("seed {seed} epoch {epoch}: eval loss {eval_loss:.4} recall {eval_recall:.3}");
        epochs.push(RnnEpochRow {
            epoch,
            train_loss: loss / r.batches_per_epoch.max(1) as f64,
            eval_loss,
            eval_recall,
            cos_whh: (measured > 0).then(|| cos / measured as f64),
            proj_whh: (measured > 0).then(|| proj / measured as f64),
        });
    }
    Ok(RnnRun { seed, epochs })
}

pub fn rnn_table(config: &ExperimentConfig, run: &RnnRun) -> Table {
    let mut t = Table::new(&[
        "epoch",
        "method",
        "train_loss",
        "eval_loss",
        "eval_recall",
        "cos_whh",
        "proj_whh",
        "seed",
    ]);
    for e in &run.epochs {
        t.push(vec![
            e.epoch.to_string(),
            config.rnn.method.name(),
            num(e.train_loss),
            num(e.eval_loss),
            num(e.eval_recall),
            opt(e.cos_whh),
            opt(e.proj_whh),
            run.seed.to_string(),
        ]);
    }
    t
}

pub fn write_outputs(config: &ExperimentConfig, run: &RnnRun, dir: &Path) -> std::io::Result<Vec<&'static str>> {
    rnn_table(config, run).write(&dir.join("rnn.csv"))?;
    Ok(vec!["rnn.csv"])
}
