//! Aggregates per-seed tables into per-figure tables (mean and standard
//! deviation across seeds). Runs are identified by the directory holding
//! their `seed-*` folders, relative to the input root.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use crate::output::{num, Table};
use crate::stats::{mean, std_dev};

/// Source table, grouping columns and aggregated value columns of one figure.
struct FigureSpec {
    output: &'static str,
    source: &'static str,
    keys: &'static [&'static str],
    values: &'static [&'static str],
}

const FIGURES: [FigureSpec; 6] = [
    FigureSpec {
        output: "variance_curves.csv",
        source: "curves.csv",
        keys: &["epoch", "layer", "kind", "pc_index"],
        values: &["cumulative_fraction"],
    },
    FigureSpec {
        output: "dimensionality.csv",
        source: "dims.csv",
        keys: &["width", "layer", "n"],
        values: &["twonn", "pcs_90"],
    },
    FigureSpec {
        output: "accuracy.csv",
        source: "metrics.csv",
        keys: &["rule", "epoch"],
        values: &["test_accuracy", "train_loss"],
    },
    FigureSpec {
        output: "alignment_summary.csv",
        source: "alignment.csv",
        keys: &["rule", "space", "layer", "epoch"],
        values: &["angle_deg", "mean_angle_deg", "proj_mag"],
    },
    FigureSpec {
        output: "rnn_summary.csv",
        source: "rnn.csv",
        keys: &["method", "epoch"],
        values: &["eval_loss", "eval_recall", "cos_whh"],
    },
    FigureSpec {
        output: "theory_cos2.csv",
        source: "cos2.csv",
        keys: &["method", "n", "d", "alpha", "k"],
        values: &["predicted", "empirical", "moment_ratio"],
    },
];

/// Key cells compared numerically when both parse as numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Key(Vec<String>);

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            let ord = match (numeric(a), numeric(b)) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                _ => a.cmp(b),
            };
            if ord.is_ne() {
                return ord;
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

/// Plain numbers and width fractions such as `1/8`.
fn numeric(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => Some(a.parse::<f64>().ok()? / b.parse::<f64>().ok()?),
        None => s.parse().ok(),
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Every `seed-*` directory below `root`, sorted.
pub fn seed_dirs(root: &Path) -> io::Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if !path.is_dir() {
                continue;
            }
            let is_seed = path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("seed-"));
            if is_seed {
                found.push(path);
            } else {
                stack.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

fn run_name(root: &Path, seed_dir: &Path) -> String {
    let parent = seed_dir.parent().unwrap_or(root);
    match parent.strip_prefix(root) {
        Ok(p) if !p.as_os_str().is_empty() => p.to_string_lossy().replace('\\', "/"),
        _ => ".".to_string(),
    }
}

/// Writes every figure table for which at least one seed produced the source
/// file; returns the names written.
pub fn plot_data(input: &Path, out: &Path) -> io::Result<Vec<&'static str>> {
    let seeds = seed_dirs(input)?;
    let mut written = Vec::new();
    for fig in &FIGURES {
        // (run, key values) -> per-value samples across seeds
        let mut groups: BTreeMap<(String, Key), Vec<Vec<f64>>> = BTreeMap::new();
        let mut any = false;
        for dir in &seeds {
            let path = dir.join(fig.source);
            if !path.is_file() {
                continue;
            }
            any = true;
            let table = Table::read(&path)?;
            let cols = |names: &[&str]| -> io::Result<Vec<usize>> {
                names
                    .iter()
                    .map(|n| {
                        table.column(n).ok_or_else(|| {
                            io::Error::new(
                                io::ErrorKind::InvalidData,
                                format!("{}: missing column {n}", path.display()),
                            )
                        })
                    })
                    .collect()
            };
            let key_cols = cols(fig.keys)?;
            let value_cols = cols(fig.values)?;
            let run = run_name(input, dir);
            for row in &table.rows {
                let key = Key(key_cols.iter().map(|&c| row[c].clone()).collect());
                let samples = groups
                    .entry((run.clone(), key))
                    .or_insert_with(|| vec![Vec::new(); fig.values.len()]);
                for (s, &c) in samples.iter_mut().zip(&value_cols) {
                    if let Ok(v) = row[c].parse::<f64>() {
                        s.push(v);
                    }
                }
            }
        }
        if !any {
            continue;
        }
        let mut header = vec!["run".to_string()];
        header.extend(fig.keys.iter().map(|k| k.to_string()));
        for v in fig.values {
            header.push(format!("{v}_mean"));
            header.push(format!("{v}_std"));
        }
        header.push("seeds".to_string());
        let mut t = Table::new(&header);
        for ((run, key), samples) in groups {
            let mut row = vec![run];
            row.extend(key.0);
            for s in &samples {
                if s.is_empty() {
                    row.extend([String::new(), String::new()]);
                } else {
                    row.push(num(mean(s)));
                    row.push(num(std_dev(s)));
                }
            }
            row.push(samples.iter().map(Vec::len).max().unwrap_or(0).to_string());
            t.push(row);
        }
        t.write(&out.join(fig.output))?;
        written.push(fig.output);
    }
    Ok(written)
}
