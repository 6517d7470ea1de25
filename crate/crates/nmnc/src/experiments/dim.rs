//! Manifold dimensionality against network width.

use std::collections::HashSet;
use std::path::Path;

use nmnc_core::credit::{Rule, Trainer};
use nmnc_core::data::Dataset;
use nmnc_core::manifold::{twonn_estimate, variance_explained_curve, DEFAULT_TRIM};
use nmnc_core::nets::Width;
use nmnc_core::numerics::{DenseMatrix, SeededRng};
use nmnc_core::Result;

use super::image::build_network;
use crate::config::ExperimentConfig;
use crate::output::{num, Table};

pub const VARIANCE_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct DimRow {
    pub width: Width,
    pub layer: usize,
    pub n: usize,
    /// `None` when too few distinct points remain.
    pub twonn: Option<f64>,
    pub pcs_90: usize,
}

/// Rows of `points` with exact duplicates removed (first occurrence kept).
/// ReLU layers routinely map several inputs to the all-zero vector, which
/// would make nearest-neighbour ratios undefined.
pub fn distinct_rows(points: &DenseMatrix) -> DenseMatrix {
    let mut seen = HashSet::new();
    let keep: Vec<usize> = (0..points.rows())
        .filter(|&r| seen.insert(points.row(r).iter().map(|v| v.to_bits()).collect::<Vec<u64>>()))
        .collect();
    DenseMatrix::from_fn(keep.len(), points.cols(), |r, c| points[(keep[r], c)])
}

pub fn estimate_dims(config: &ExperimentConfig, seed: u64, train: &Dataset, test: &Dataset) -> Result<Vec<DimRow>> {
    let root = SeededRng::new(seed);
    let probe = test.head(config.dim.points.min(test.len()));
    let mut rows = Vec::new();
    for &width in &config.dim.widths {
        let mut c = config.clone();
        c.network.width = width;
        c.train.rule = Rule::Backprop;
        c.train.pcs.clear();
        let net = build_network(&c, train.features(), train.classes, &mut root.fork(2))?;
        let mut trainer = Trainer::new(net, c.trainer_config(), &mut root.fork(3))?;
        let mut shuffle = root.fork(4);
        for _ in 0..config.dim.train_epochs {
            trainer.train_epoch(train, &mut shuffle)?;
        }
        let cache = trainer.net.forward(&probe.inputs)?;
        for (l, acts) in cache.post[..trainer.net.hidden_count()].iter().enumerate() {
            let distinct = distinct_rows(acts);
            let twonn = if distinct.rows() >= 10 {
                Some(twonn_estimate(&distinct, DEFAULT_TRIM)?)
            } else {
                None
            };
            let curve = variance_explained_curve(acts)?;
            rows.push(DimRow {
                width,
                layer: l,
                n: acts.cols(),
                twonn,
                pcs_90: curve.pcs_for_threshold(VARIANCE_THRESHOLD),
            });
        }
    }
    Ok(rows)
}

pub fn write_outputs(rows: &[DimRow], dir: &Path) -> std::io::Result<Vec<&'static str>> {
    let mut t = Table::new(&["width", "layer", "n", "twonn", "pcs_90"]);
    for r in rows {
        t.push(vec![
            r.width.to_string(),
            r.layer.to_string(),
            r.n.to_string(),
            r.twonn.map_or_else(String::new, num),
            r.pcs_90.to_string(),
        ]);
    }
    t.write(&dir.join("dims.csv"))?;
    Ok(vec!["dims.csv"])
}
