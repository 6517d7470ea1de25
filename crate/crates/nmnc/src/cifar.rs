//! CIFAR-10 binary format: records of one label byte followed by 3072 pixel
//! bytes (1024 red, 1024 green, 1024 blue, each row-major 32×32).

use std::path::{Path, PathBuf};

use nmnc_core::data::Dataset;
use nmnc_core::numerics::DenseMatrix;

pub const RECORD_LEN: usize = 1 + PIXELS;
pub const PIXELS: usize = 3 * 32 * 32;
pub const CLASSES: usize = 10;
pub const CHANNEL_MEAN: [f64; 3] = [0.4914, 0.4822, 0.4465];
pub const CHANNEL_STD: [f64; 3] = [0.2470, 0.2435, 0.2616];

pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

#[derive(Debug, thiserror::Error)]
pub enum CifarError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: truncated record at byte offset {offset} ({len} bytes, records are {RECORD_LEN})", path.display())]
    Truncated { path: PathBuf, offset: usize, len: usize },
    #[error("{}: label {label} out of range at byte offset {offset}", path.display())]
    BadLabel { path: PathBuf, offset: usize, label: u8 },
    #[error("{}: no records", path.display())]
    Empty { path: PathBuf },
}

/// `(p/255 − mean_c)/std_c` for a raw byte `p` in channel `c`.
pub fn normalize(pixel: u8, channel: usize) -> f64 {
    (pixel as f64 / 255.0 - CHANNEL_MEAN[channel]) / CHANNEL_STD[channel]
}

/// Decodes the records in `bytes`, keeping at most `limit` (0 = all).
pub fn decode(bytes: &[u8], limit: usize, path: &Path) -> Result<Dataset, CifarError> {
    if bytes.is_empty() {
        return Err(CifarError::Empty { path: path.into() });
    }
    if !bytes.len().is_multiple_of(RECORD_LEN) {
        let offset = bytes.len() / RECORD_LEN * RECORD_LEN;
        return Err(CifarError::Truncated {
            path: path.into(),
            offset,
            len: bytes.len(),
        });
    }
    let mut n = bytes.len() / RECORD_LEN;
    if limit > 0 {
        n = n.min(limit);
    }
    let mut data = Vec::with_capacity(n * PIXELS);
    let mut labels = Vec::with_capacity(n);
    for (i, record) in bytes.chunks_exact(RECORD_LEN).take(n).enumerate() {
        let label = record[0];
        if label as usize >= CLASSES {
            return Err(CifarError::BadLabel {
                path: path.into(),
                offset: i * RECORD_LEN,
                label,
            });
        }
        labels.push(label as usize);
        data.extend(record[1..].iter().enumerate().map(|(j, &p)| normalize(p, j / 1024)));
    }
    let inputs = DenseMatrix::from_vec(n, PIXELS, data).expect("record layout fixes the shape");
    Ok(Dataset::new(inputs, labels, CLASSES).expect("labels checked above"))
}

pub fn load_file(path: &Path, limit: usize) -> Result<Dataset, CifarError> {
    let bytes = std::fs::read(path).map_err(|source| CifarError::Io {
        path: path.into(),
        source,
    })?;
    decode(&bytes, limit, path)
}

/// Training and test splits from a `cifar-10-batches-bin` directory.
pub fn load_dir(dir: &Path, train_limit: usize, test_limit: usize) -> Result<(Dataset, Dataset), CifarError> {
    let mut parts = Vec::new();
    let mut remaining = train_limit;
    for name in TRAIN_FILES {
        let part = load_file(&dir.join(name), remaining)?;
        if train_limit > 0 {
            remaining -= part.len();
        }
        parts.push(part);
        if train_limit > 0 && remaining == 0 {
            break;
        }
    }
    let test = load_file(&dir.join(TEST_FILE), test_limit)?;
    let rows: Vec<&DenseMatrix> = parts.iter().map(|p| &p.inputs).collect();
    let inputs = DenseMatrix::vstack(&rows).expect("all parts share the record width");
    let labels = parts.iter().flat_map(|p| p.labels.iter().copied()).collect();
    let train = Dataset::new(inputs, labels, CLASSES).expect("consistent parts");
    Ok((train, test))
}

/// Whether `dir` looks like an extracted CIFAR-10 binary archive.
pub fn available(dir: &Path) -> bool {
    dir.join(TEST_FILE).is_file() && TRAIN_FILES.iter().all(|f| dir.join(f).is_file())
}
