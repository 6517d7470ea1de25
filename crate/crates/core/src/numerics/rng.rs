use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::matrix::DenseMatrix;
use super::orthonormalize_columns;
use crate::error::{invalid, Result};

/// Deterministic random stream. Same seed (and stream id) gives a bit-identical sequence.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            stream: 0,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent substream of `seed`, used for per-trial or per-layer streams.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    /// Derives a child stream from this generator's seed and stream without
    /// advancing it. Forks of forks get distinct streams.
    pub fn fork(&self, stream: u64) -> Self {
        let child = self
            .stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(stream.wrapping_add(1));
        Self::with_stream(self.seed, child)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Matrix of i.i.d. `N(0, sigma²)` entries.
pub fn gaussian_matrix(rng: &mut SeededRng, rows: usize, cols: usize, sigma: f64) -> Result<DenseMatrix> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid!(
            "gaussian_matrix: sigma must be positive and finite, got {sigma}"
        ));
    }
    Ok(DenseMatrix::from_fn(rows, cols, |_, _| sigma * rng.normal()))
}

/// Uniformly distributed `n × k` matrix with orthonormal columns.
pub fn random_orthonormal(rng: &mut SeededRng, n: usize, k: usize) -> Result<DenseMatrix> {
    if k > n || k == 0 {
        return Err(invalid!("random_orthonormal: need 1 <= k <= n, got k={k}, n={n}"));
    }
    let mut m = DenseMatrix::from_fn(n, k, |_, _| rng.normal());
    orthonormalize_columns(&mut m)?;
    Ok(m)
}
