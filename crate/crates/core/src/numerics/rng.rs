use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};

use super::Vector;

/// Deterministic, addressable random stream.
///
/// A stream is identified by a root seed and a path of integer tags, e.g.
/// `(purpose, epoch, batch, sample, layer)`. Its key is a pure function of
/// that address: each [`derive`](Self::derive) step keys ChaCha20 with the
/// parent key, selects the tag as the ChaCha stream id and takes the first
/// 32 output bytes as the child key. Streams can therefore be built in any
/// order, or on any worker, and still yield the same draws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    path: Vec<u64>,
    key: [u8; 32],
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        let mut root = ChaCha20Rng::seed_from_u64(seed);
        let mut key = [0u8; 32];
        root.fill_bytes(&mut key);
        RngStream {
            seed,
            path: Vec::new(),
            key,
        }
    }

    pub fn derive(&self, tag: u64) -> Self {
        let mut parent = ChaCha20Rng::from_seed(self.key);
        parent.set_stream(tag);
        let mut key = [0u8; 32];
        parent.fill_bytes(&mut key);
        let mut path = self.path.clone();
        path.push(tag);
        RngStream {
            seed: self.seed,
            path,
            key,
        }
    }

    pub fn derive_path(&self, tags: &[u64]) -> Self {
        tags.iter().fold(self.clone(), |s, &t| s.derive(t))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key)
    }
}

/// `n` draws from N(0, 1), the first `n` values of the stream.
pub fn standard_normals(n: usize, stream: &RngStream) -> Vector {
    let mut rng = stream.rng();
    (0..n)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect::<Vector>()
}

/// `n` independent draws from N(0, variance).
///
/// The draws are `sqrt(variance)` times [`standard_normals`] of the same
/// stream, so changing only the variance rescales the sample exactly.
pub fn gaussian(n: usize, variance: f64, stream: &RngStream) -> Result<Vector> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(invalid!(
            "variance must be positive and finite, got {variance}"
        ));
    }
    let mut v = standard_normals(n, stream);
    v.scale(libm::sqrt(variance));
    Ok(v)
}
