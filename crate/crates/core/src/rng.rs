//! Deterministic per-trial random streams.
//!
//! Every stream is a ChaCha12 generator keyed by `(seed, trial, purpose)`, so
//! trials can be evaluated in any order or on any number of workers and
//! still reproduce the same frames, channels and noise bit for bit.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::Sample;

/// What a stream is used for. Distinct purposes never share randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Bits,
    Channel,
    Delay,
    RelayNoise,
    DestinationNoise,
    /// Free-form tag for experiments and tests.
    Other(u64),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Bits => 1,
            Purpose::Channel => 2,
            Purpose::Delay => 3,
            Purpose::RelayNoise => 4,
            Purpose::DestinationNoise => 5,
            Purpose::Other(t) => 0x1000_0000_0000_0000 | t,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RngStream(ChaCha12Rng);

impl RngStream {
    pub fn new(seed: u64, trial: u64, purpose: Purpose) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&trial.to_le_bytes());
        key[16..24].copy_from_slice(&purpose.tag().to_le_bytes());
        key[24..].copy_from_slice(b"fdrelay\0");
        RngStream(ChaCha12Rng::from_seed(key))
    }

    /// Circularly symmetric complex Gaussian with the given variance.
    pub fn complex_gaussian(&mut self, variance: f64) -> Sample {
        let scale = (variance / 2.0).sqrt();
        let re: f64 = self.0.sample(StandardNormal);
        let im: f64 = self.0.sample(StandardNormal);
        Sample::new(scale * re, scale * im)
    }

    pub fn complex_gaussian_vec(&mut self, n: usize, variance: f64) -> Vec<Sample> {
        (0..n).map(|_| self.complex_gaussian(variance)).collect()
    }

    pub fn bits(&mut self, n: usize) -> Vec<bool> {
        (0..n).map(|_| self.0.random::<bool>()).collect()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}
