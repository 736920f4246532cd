//! Bessel `J₀` reference and empirical tap autocorrelation of the simulator.

use hkf_core::channel::{generate_instance, ChannelConfig};

/// `J₀(x) = Σ_m (−1)^m (x/2)^{2m} / (m!)²`, summed until terms vanish.
pub fn bessel_j0(x: f64) -> f64 {
    let q = -(x * x) / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..200 {
        term *= q / (m as f64 * m as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1.0) {
            break;
        }
    }
    sum
}

/// `Σ Re(h_t h*_{t+τ}) / Σ |h_t|²` pooled over `instances` single-tap
/// realizations, one value per lag.
pub fn empirical_autocorrelation(
    normalized_doppler: f64,
    num_sinusoids: usize,
    len: usize,
    instances: u64,
    lags: &[usize],
) -> Vec<f64> {
    let mut num = vec![0.0; lags.len()];
    let mut den = 0.0;
    for seed in 0..instances {
        let mut cfg = ChannelConfig::new(1, 0.0, 7_000 + seed);
        cfg.doppler_hz = normalized_doppler / cfg.symbol_period_s;
        cfg.num_sinusoids = num_sinusoids;
        let inst = generate_instance(&cfg, len).unwrap();
        for t in 0..len {
            let (re, im) = inst.tap(t, 0);
            den += re * re + im * im;
        }
        for (k, &lag) in lags.iter().enumerate() {
            for t in 0..len - lag {
                let (a, b) = inst.tap(t, 0);
                let (c, d) = inst.tap(t + lag, 0);
                num[k] += a * c + b * d;
            }
        }
    }
    lags.iter()
        .zip(num)
        .map(|(&lag, n)| n / den * len as f64 / (len - lag) as f64)
        .collect()
}

pub const JAKES_LAGS: [usize; 3] = [10, 25, 50];
pub const JAKES_TOL: f64 = 0.03;

/// `(lag, empirical, J₀)` at f_d·T_s = 0.01, K = 256, T = 16384, 100 instances.
pub fn jakes_fidelity() -> Vec<(usize, f64, f64)> {
    let nd = 0.01;
    let emp = empirical_autocorrelation(nd, 256, 16_384, 100, &JAKES_LAGS);
    JAKES_LAGS
        .iter()
        .zip(emp)
        .map(|(&lag, e)| {
            (
                lag,
                e,
                bessel_j0(2.0 * std::f64::consts::PI * nd * lag as f64),
            )
        })
        .collect()
}
