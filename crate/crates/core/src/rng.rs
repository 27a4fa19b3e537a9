//! Keyed random streams.
//!
//! Every stream is a ChaCha8 generator whose 256-bit key is the tuple
//! `(base_seed, path, tag, counter)`, so each draw is addressed by where it is
//! used rather than by the order in which draws happen. The x-noise and
//! y-noise of step `t` on one path come from two distinct keys and are
//! therefore independent and insensitive to evaluation order.
//!
//! Gaussian variates use the ziggurat sampler of `rand_distr::StandardNormal`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type NoiseRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    NoiseX = 1,
    NoiseY = 2,
    Init = 3,
    Selection = 4,
    Construction = 5,
    Trial = 6,
    Search = 7,
    Check = 8,
}

pub fn keyed_stream(seed: u64, path: u64, tag: StreamTag, counter: u64) -> NoiseRng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&path.to_le_bytes());
    key[16..24].copy_from_slice(&(tag as u64).to_le_bytes());
    key[24..32].copy_from_slice(&counter.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// The streams owned by one sample path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStreams {
    pub seed: u64,
    pub path: u64,
}

impl PathStreams {
    pub fn new(seed: u64, path: u64) -> Self {
        Self { seed, path }
    }

    /// Stream for the primal oracle noise revealed at step `t` (ξˣ_{t+1}).
    pub fn x_noise(&self, t: usize) -> NoiseRng {
        keyed_stream(self.seed, self.path, StreamTag::NoiseX, t as u64)
    }

    /// Stream for the dual oracle noise revealed at step `t` (ξʸ_{t+1}).
    pub fn y_noise(&self, t: usize) -> NoiseRng {
        keyed_stream(self.seed, self.path, StreamTag::NoiseY, t as u64)
    }

    pub fn stream(&self, tag: StreamTag, counter: u64) -> NoiseRng {
        keyed_stream(self.seed, self.path, tag, counter)
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

pub fn uniform_box<R: Rng + ?Sized>(rng: &mut R, dim: usize, half_width: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.random_range(-half_width..=half_width))
        .collect()
}
