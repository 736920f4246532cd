//! Reproducible randomness.
//!
//! Every random draw in the crate comes from [`SeededRng`], a ChaCha8 stream
//! cipher generator. ChaCha is counter based: a `(seed, stream)` pair fixes the
//! whole output sequence on every platform. Gaussian variates use Box–Muller.
//!
//! Child seeds are derived as `splitmix64(master ^ splitmix64(counter + 1))`,
//! so the `i`-th instance of a dataset gets `derive_seed(master, i)` no matter
//! in which order instances are generated.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream used for channel sinusoid draws.
pub const STREAM_CHANNEL: u64 = 0;
/// Stream used for observation noise.
pub const STREAM_NOISE: u64 = 1;
/// Stream used for reparameterized sampler draws during evaluation.
pub const STREAM_SAMPLER: u64 = 2;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(master: u64, counter: u64) -> u64 {
    splitmix64(master ^ splitmix64(counter.wrapping_add(1)))
}

#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner, spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Standard normal via Box–Muller; the second variate of each pair is cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = loop {
            let u = self.uniform();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
