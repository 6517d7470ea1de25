#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use nmnc::config::ExperimentConfig;

/// Every `.csv` below `root`, keyed by relative path.
pub fn csv_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Small MLP image run on low-resolution synthetic data.
pub fn small_image_config(text: &str) -> ExperimentConfig {
    let base = "[experiment]\nepochs = 2\n\
                [data]\ntrain_size = 256\ntest_size = 64\nchannels = 1\nheight = 8\nwidth = 8\nclasses = 4\n\
                [network]\narchitecture = mlp\nwidth = 1\nhidden = 24,16\nactivation = tanh\n";
    ExperimentConfig::parse(&format!("{base}{text}")).unwrap()
}
