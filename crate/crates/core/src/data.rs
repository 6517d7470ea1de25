//! In-memory labelled datasets, the sequential memory task and a synthetic
//! image classification generator.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::numerics::{DenseMatrix, SeededRng};

/// Labelled examples stored one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: DenseMatrix,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(inputs: DenseMatrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(invalid!("{} inputs but {} labels", inputs.rows(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(invalid!("label {bad} out of range for {classes} classes"));
        }
        Ok(Self {
            inputs,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.inputs.cols()
    }

    /// Rows `indices` gathered into a batch.
    pub fn batch(&self, indices: &[usize]) -> (DenseMatrix, Vec<usize>) {
        let cols = self.inputs.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(self.inputs.row(i));
        }
        let x = DenseMatrix::from_vec(indices.len(), cols, data).expect("consistent batch shape");
        (x, indices.iter().map(|&i| self.labels[i]).collect())
    }

    /// The first `n` examples.
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        let (inputs, labels) = self.batch(&idx);
        Dataset {
            inputs,
            labels,
            classes: self.classes,
        }
    }
}

/// Shuffled minibatch index lists covering `0..n`; the last batch may be short.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut SeededRng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Sequential memory task: `S` payload symbols, `L` blanks, a go-cue, then
/// `S − 1` blanks; the target is blank until the go-cue and then replays the
/// payload. Symbols: blank `0`, payload `1..=K−2`, go-cue `K−1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryTaskSpec {
    pub gap: usize,
    pub symbols: usize,
    pub alphabet: usize,
}

impl MemoryTaskSpec {
    pub fn new(gap: usize, symbols: usize, alphabet: usize) -> Result<Self> {
        let spec = Self { gap, symbols, alphabet };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphabet < 3 {
            return Err(invalid!(
                "memory task needs an alphabet of at least 3 symbols, got {}",
                self.alphabet
            ));
        }
        if self.symbols == 0 {
            return Err(invalid!("memory task needs at least one payload symbol"));
        }
        Ok(())
    }

    pub fn seq_len(&self) -> usize {
        2 * self.symbols + self.gap
    }

    pub fn go_cue(&self) -> usize {
        self.alphabet - 1
    }

    /// Index of the go-cue step.
    pub fn cue_step(&self) -> usize {
        self.symbols + self.gap
    }
}

/// Time-major batch: `inputs[t]` is `batch × K` one-hot, `targets[t]` the
/// class per sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBatch {
    pub inputs: Vec<DenseMatrix>,
    pub targets: Vec<Vec<usize>>,
    /// Token ids of the input sequences, `batch` rows of length `T`.
    pub tokens: Vec<Vec<usize>>,
}

pub fn generate_memory_batch(spec: &MemoryTaskSpec, batch: usize, rng: &mut SeededRng) -> Result<MemoryBatch> {
    spec.validate()?;
    let t_len = spec.seq_len();
    let k = spec.alphabet;
    let mut inputs = vec![DenseMatrix::zeros(batch, k); t_len];
    let mut targets = vec![vec![0usize; batch]; t_len];
    let mut tokens = Vec::with_capacity(batch);
    for b in 0..batch {
        let mut seq = vec![0usize; t_len];
        for s in 0..spec.symbols {
            let sym = 1 + rng.below(k - 2);
            seq[s] = sym;
            targets[spec.cue_step() + s][b] = sym;
        }
        seq[spec.cue_step()] = spec.go_cue();
        for (t, &tok) in seq.iter().enumerate() {
            inputs[t][(b, tok)] = 1.0;
        }
        tokens.push(seq);
    }
    Ok(MemoryBatch {
        inputs,
        targets,
        tokens,
    })
}

/// Gaussian-mixture image classes rendered through smooth spatial patterns.
///
/// Every class owns `clusters_per_class` centres in a `latent_dim` latent
/// space; an example is a centre plus isotropic latent jitter, mapped to
/// pixels by a fixed set of low-frequency patterns, plus pixel noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticImageSpec {
    pub classes: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub latent_dim: usize,
    pub clusters_per_class: usize,
    /// Standard deviation of cluster centres in latent space.
    pub separation: f64,
    /// Within-cluster latent standard deviation.
    pub spread: f64,
    /// Per-pixel noise standard deviation.
    pub pixel_noise: f64,
}

impl SyntheticImageSpec {
    /// CIFAR-shaped default: 10 classes of 3×32×32 images.
    pub fn cifar_like() -> Self {
        Self {
            classes: 10,
            channels: 3,
            height: 32,
            width: 32,
            latent_dim: 24,
            clusters_per_class: 3,
            separation: 1.0,
            spread: 1.0,
            pixel_noise: 0.3,
        }
    }

    pub fn pixels(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// Generator state: the pattern bank and cluster centres, fixed by the seed.
#[derive(Debug, Clone)]
pub struct SyntheticImages {
    pub spec: SyntheticImageSpec,
    /// `latent_dim × pixels`, unit-RMS rows.
    patterns: DenseMatrix,
    /// `classes·clusters × latent_dim`.
    centres: DenseMatrix,
}

impl SyntheticImages {
    pub fn new(spec: SyntheticImageSpec, rng: &mut SeededRng) -> Result<Self> {
        if spec.classes < 2 || spec.latent_dim == 0 || spec.clusters_per_class == 0 || spec.pixels() == 0 {
            return Err(invalid!("synthetic images: degenerate specification {spec:?}"));
        }
        let (c, h, w) = (spec.channels, spec.height, spec.width);
        let tau = 2.0 * core::f64::consts::PI;
        let mut patterns = DenseMatrix::zeros(spec.latent_dim, spec.pixels());
        for j in 0..spec.latent_dim {
            let row = patterns.row_mut(j);
            for _ in 0..3 {
                let fy = rng.below(4) as f64;
                let fx = rng.below(4) as f64;
                let phase = tau * rng.uniform();
                let gains: Vec<f64> = (0..c).map(|_| rng.normal()).collect();
                for ch in 0..c {
                    for y in 0..h {
                        for x in 0..w {
                            let arg = tau * (fy * y as f64 / h as f64 + fx * x as f64 / w as f64) + phase;
                            row[ch * h * w + y * w + x] += gains[ch] * libm::cos(arg);
                        }
                    }
                }
            }
            let rms = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64);
            if rms > 0.0 {
                row.iter_mut().for_each(|v| *v /= rms);
            }
        }
        let centres = DenseMatrix::from_fn(spec.classes * spec.clusters_per_class, spec.latent_dim, |_, _| {
            spec.separation * rng.normal()
        });
        Ok(Self {
            spec,
            patterns,
            centres,
        })
    }

    /// `n` examples with labels cycling through the classes in random order.
    pub fn sample(&self, n: usize, rng: &mut SeededRng) -> Dataset {
        let s = &self.spec;
        let mut latent = DenseMatrix::zeros(n, s.latent_dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = rng.below(s.classes);
            let cluster = class * s.clusters_per_class + rng.below(s.clusters_per_class);
            let centre = self.centres.row(cluster);
            for (z, m) in latent.row_mut(i).iter_mut().zip(centre) {
                *z = m + s.spread * rng.normal();
            }
            labels.push(class);
        }
        let mut inputs = latent.matmul(&self.patterns);
        if s.pixel_noise > 0.0 {
            inputs
                .as_mut_slice()
                .iter_mut()
                .for_each(|v| *v += s.pixel_noise * rng.normal());
        }
        Dataset {
            inputs,
            labels,
            classes: s.classes,
        }
    }
}
