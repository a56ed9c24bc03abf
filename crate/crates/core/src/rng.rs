//! Deterministic uniform sampling on top of ChaCha8.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub(crate) struct Prng(ChaCha8Rng);

impl Prng {
    #[cfg(test)]
    pub(crate) fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Independent stream `stream` of the generator seeded with `seed`.
    pub(crate) fn with_stream(seed: u64, stream: u64) -> Self {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        g.set_stream(stream);
        Self(g)
    }

    /// Uniform on [0, 1).
    pub(crate) fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[cfg(test)]
    pub(crate) fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    #[cfg(test)]
    pub(crate) fn matrix(&mut self, rows: usize, cols: usize, scale: f64) -> crate::densemat::DenseMatrix {
        let data = (0..rows * cols).map(|_| self.range(-scale, scale)).collect();
        crate::densemat::DenseMatrix::from_vec(rows, cols, data).unwrap()
    }
}
