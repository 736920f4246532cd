//! Sum-of-sinusoids Rayleigh fading taps with a Jakes Doppler spectrum, and
//! pilot-sampled noisy observations of them.
//!
//! Each tap `n` is
//!
//! ```text
//! h_n(t) = sqrt(pdp[n] / K) · Σ_k exp(j(2π f_d cos(α_k) t T_s + φ_k))
//! ```
//!
//! with `α_k, φ_k ~ U[0, 2π)` drawn per tap. Its autocorrelation averages to
//! `J₀(2π f_d τ T_s)` over realizations.
//!
//! Complex vectors are stored real-composite: the `2N` row for one symbol is
//! `[Re h_1 .. Re h_N, Im h_1 .. Im h_N]`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::{SeededRng, STREAM_CHANNEL, STREAM_NOISE};
use crate::tensor::Matrix;

/// Seconds per OFDM symbol at 30 kHz subcarrier spacing with a nominal cyclic prefix.
pub const DEFAULT_SYMBOL_PERIOD_S: f64 = 35.7e-6;
pub const DEFAULT_NUM_SINUSOIDS: usize = 64;

/// Exponentially decaying power-delay profile `pdp[n] ∝ exp(−n/4)`, normalized.
pub fn exponential_pdp(num_taps: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..num_taps).map(|n| (-(n as f64) / 4.0).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelConfig {
    pub num_taps: usize,
    pub symbol_period_s: f64,
    pub doppler_hz: f64,
    pub pdp: Vec<f64>,
    pub num_sinusoids: usize,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn new(num_taps: usize, doppler_hz: f64, seed: u64) -> Self {
        Self {
            num_taps,
            symbol_period_s: DEFAULT_SYMBOL_PERIOD_S,
            doppler_hz,
            pdp: exponential_pdp(num_taps),
            num_sinusoids: DEFAULT_NUM_SINUSOIDS,
            seed,
        }
    }

    pub fn normalized_doppler(&self) -> f64 {
        self.doppler_hz * self.symbol_period_s
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_taps == 0 || self.num_sinusoids == 0 {
            return Err(Error::Config(
                "num_taps and num_sinusoids must be positive".into(),
            ));
        }
        if self.pdp.len() != self.num_taps {
            return Err(Error::Config(format!(
                "pdp has {} entries for {} taps",
                self.pdp.len(),
                self.num_taps
            )));
        }
        if self.pdp.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Config("pdp entries must be positive".into()));
        }
        let total: f64 = self.pdp.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("pdp sums to {total}, expected 1")));
        }
        if !(self.symbol_period_s > 0.0) || !(self.doppler_hz >= 0.0) {
            return Err(Error::Config(
                "symbol period must be positive and Doppler non-negative".into(),
            ));
        }
        let nd = self.normalized_doppler();
        if nd >= 0.5 {
            return Err(Error::Config(format!(
                "normalized Doppler {nd} must stay below 0.5"
            )));
        }
        Ok(())
    }
}

/// One realization: `h` is `T × 2N` real-composite.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelInstance {
    pub h: Matrix,
    pub doppler_hz: f64,
    pub seed: u64,
}

impl ChannelInstance {
    pub fn len(&self) -> usize {
        self.h.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.h.rows() == 0
    }

    pub fn num_taps(&self) -> usize {
        self.h.cols() / 2
    }

    /// Complex tap `n` at symbol `t` as `(re, im)`.
    pub fn tap(&self, t: usize, n: usize) -> (f64, f64) {
        let nt = self.num_taps();
        (self.h.get(t, n), self.h.get(t, nt + n))
    }
}

pub fn generate_instance(cfg: &ChannelConfig, len: usize) -> Result<ChannelInstance> {
    cfg.validate()?;
    if len < 2 {
        return Err(Error::Config(format!(
            "sequence length {len} must be at least 2"
        )));
    }
    let n_taps = cfg.num_taps;
    let k = cfg.num_sinusoids;
    let mut rng = SeededRng::with_stream(cfg.seed, STREAM_CHANNEL);
    let mut h = Matrix::zeros(len, 2 * n_taps);
    let omega_scale = 2.0 * PI * cfg.normalized_doppler();

    // Each sinusoid is advanced by a fixed unit rotation per symbol, which
    // keeps f_d = 0 exactly constant and avoids per-sample trig.
    let mut phasors = vec![(0.0f64, 0.0f64); k];
    let mut steps = vec![(0.0f64, 0.0f64); k];
    for n in 0..n_taps {
        let amp = (cfg.pdp[n] / k as f64).sqrt();
        for i in 0..k {
            let alpha = 2.0 * PI * rng.uniform();
            let phi = 2.0 * PI * rng.uniform();
            let w = omega_scale * alpha.cos();
            phasors[i] = (phi.cos(), phi.sin());
            steps[i] = (w.cos(), w.sin());
        }
        for t in 0..len {
            let (mut re, mut im) = (0.0, 0.0);
            for (p, s) in phasors.iter_mut().zip(&steps) {
                re += p.0;
                im += p.1;
                *p = (p.0 * s.0 - p.1 * s.1, p.0 * s.1 + p.1 * s.0);
            }
            h.set(t, n, amp * re);
            h.set(t, n_taps + n, amp * im);
        }
    }
    Ok(ChannelInstance {
        h,
        doppler_hz: cfg.doppler_hz,
        seed: cfg.seed,
    })
}

/// Pilot every `period` symbols starting at `offset`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PilotPattern {
    pub period: usize,
    pub offset: usize,
}

impl PilotPattern {
    pub fn new(period: usize, offset: usize) -> Result<Self> {
        if period == 0 || offset >= period {
            return Err(Error::Config(format!(
                "pilot pattern needs period ≥ 1 and offset < period (got {period}, {offset})"
            )));
        }
        Ok(Self { period, offset })
    }

    pub fn is_pilot(&self, t: usize) -> bool {
        t >= self.offset && (t - self.offset) % self.period == 0
    }

    pub fn mask(&self, len: usize) -> Vec<bool> {
        (0..len).map(|t| self.is_pilot(t)).collect()
    }
}

/// Noise variance per real component for unit average channel power spread
/// over `num_taps` complex taps: `1 / (2 N · 10^(snr/10))`.
///
/// An infinite SNR yields zero.
pub fn noise_variance_per_component(snr_db: f64, num_taps: usize) -> f64 {
    if snr_db == f64::INFINITY {
        return 0.0;
    }
    1.0 / (10f64.powf(snr_db / 10.0) * num_taps as f64 * 2.0)
}

/// Masked noisy observations `o(t) = h(t) + r(t)`.
///
/// The standard-normal noise sequence is drawn for every symbol from the
/// instance seed, so re-masking or re-scaling the SNR later reuses the same
/// underlying draws. `snr_db = +∞` disables noise.
pub fn observe(inst: &ChannelInstance, pattern: PilotPattern, snr_db: f64) -> (Matrix, Vec<bool>) {
    let noise = noise_draws(inst);
    observe_with_noise(inst, &noise, pattern, snr_db)
}

/// Standard-normal draws backing [`observe`], `T × 2N`.
pub fn noise_draws(inst: &ChannelInstance) -> Matrix {
    let mut rng = SeededRng::with_stream(inst.seed, STREAM_NOISE);
    let (rows, cols) = inst.h.shape();
    Matrix::from_vec(rows, cols, rng.normals(rows * cols)).expect("shape matches")
}

pub fn observe_with_noise(
    inst: &ChannelInstance,
    noise: &Matrix,
    pattern: PilotPattern,
    snr_db: f64,
) -> (Matrix, Vec<bool>) {
    let std = noise_variance_per_component(snr_db, inst.num_taps()).sqrt();
    let mask = pattern.mask(inst.len());
    let mut obs = Matrix::zeros(inst.h.rows(), inst.h.cols());
    for (t, &m) in mask.iter().enumerate() {
        if m {
            let dst = obs.row_mut(t);
            for ((d, &h), &e) in dst.iter_mut().zip(inst.h.row(t)).zip(noise.row(t)) {
                *d = h + std * e;
            }
        }
    }
    (obs, mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_doppler_freezes_taps() {
        let cfg = ChannelConfig::new(3, 0.0, 11);
        let inst = generate_instance(&cfg, 50).unwrap();
        for t in 1..50 {
            assert_eq!(inst.h.row(t), inst.h.row(0));
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ChannelConfig::new(2, 100.0, 1);
        cfg.pdp = vec![0.7, 0.7];
        assert!(cfg.validate().is_err());
        let mut cfg = ChannelConfig::new(2, 20_000.0, 1);
        assert!(cfg.validate().is_err());
        cfg.doppler_hz = 10.0;
        assert!(generate_instance(&cfg, 1).is_err());
        cfg.pdp = vec![1.0, 0.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mask_positions() {
        let p = PilotPattern::new(6, 0).unwrap();
        let idx: Vec<usize> = p
            .mask(13)
            .iter()
            .enumerate()
            .filter_map(|(t, &m)| m.then_some(t))
            .collect();
        assert_eq!(idx, vec![0, 6, 12]);
        assert!(PilotPattern::new(3, 3).is_err());
    }

    #[test]
    fn noiseless_observation_equals_channel_at_pilots() {
        let inst = generate_instance(&ChannelConfig::new(2, 300.0, 5), 20).unwrap();
        let (o, mask) = observe(&inst, PilotPattern::new(4, 1).unwrap(), f64::INFINITY);
        for t in 0..20 {
            if mask[t] {
                assert_eq!(o.row(t), inst.h.row(t));
            } else {
                assert!(o.row(t).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn snr_definition_holds_statistically() {
        let mut noise_energy = 0.0;
        let mut chan_energy = 0.0;
        let mut count = 0usize;
        let mut seed = 0u64;
        while count < 100_000 {
            let inst = generate_instance(&ChannelConfig::new(4, 200.0, seed), 1000).unwrap();
            let (o, _) = observe(&inst, PilotPattern::new(1, 0).unwrap(), 10.0);
            for t in 0..inst.len() {
                for c in 0..8 {
                    let h = inst.h.get(t, c);
                    noise_energy += (o.get(t, c) - h).powi(2);
                    chan_energy += h * h;
                }
            }
            count += 1000;
            seed += 1;
        }
        let ratio = noise_energy / chan_energy;
        assert!((ratio - 0.1).abs() < 0.002, "ratio {ratio}");
    }
}
