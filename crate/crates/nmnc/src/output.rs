//! CSV tables and per-seed run manifests.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// A table accumulated in memory and written in one go, so partially failed
/// runs never leave half-written files behind.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|h| h.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width differs from header");
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut w = csv::Writer::from_path(path).map_err(std::io::Error::other)?;
        w.write_record(&self.header).map_err(std::io::Error::other)?;
        for row in &self.rows {
            w.write_record(row).map_err(std::io::Error::other)?;
        }
        w.flush()
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(std::io::Error::other)?;
        let header = r
            .headers()
            .map_err(std::io::Error::other)?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(std::io::Error::other)?;
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Shortest round-trip decimal, in exponent form for very small or large
/// magnitudes; non-finite values become an empty cell.
pub fn num(x: f64) -> String {
    if !x.is_finite() {
        String::new()
    } else if x != 0.0 && !(1e-5..1e15).contains(&x.abs()) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

pub fn config_hash(config: &ExperimentConfig) -> String {
    let digest = Sha256::digest(config.serialize().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn version() -> String {
    match option_env!("NMNC_GIT_DESCRIBE") {
        Some(rev) => format!("nmnc {} ({rev})", env!("CARGO_PKG_VERSION")),
        None => format!("nmnc {}", env!("CARGO_PKG_VERSION")),
    }
}

/// Writes `manifest.txt` (hash, seed, version) and the canonical config next
/// to a seed's outputs. Contains nothing time- or host-dependent.
pub fn write_manifest(dir: &Path, config: &ExperimentConfig, seed: u64, files: &[&str]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.ini"), config.serialize())?;
    let mut f = File::create(dir.join("manifest.txt"))?;
    writeln!(f, "task = {}", config.task.name())?;
    writeln!(f, "seed = {seed}")?;
    writeln!(f, "config_sha256 = {}", config_hash(config))?;
    writeln!(f, "version = {}", version())?;
    writeln!(f, "files = {}", files.join(","))?;
    Ok(())
}
