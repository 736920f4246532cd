//! Normalized squared error and the naive pilot-only baselines.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Floor reported instead of −∞ for exact estimates.
pub const MNSE_FLOOR_DB: f64 = -300.0;

/// Running mean of per-symbol NSE values `‖ĥ_t − h_t‖² / ‖h_t‖²`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NseAccumulator {
    pub sum: f64,
    pub count: usize,
}

impl NseAccumulator {
    pub fn add_sequence(&mut self, estimate: &Matrix, truth: &Matrix) -> Result<()> {
        if estimate.shape() != truth.shape() {
            return Err(Error::Dimension(format!(
                "estimate {:?} vs truth {:?}",
                estimate.shape(),
                truth.shape()
            )));
        }
        for t in 0..truth.rows() {
            let power: f64 = truth.row(t).iter().map(|v| v * v).sum();
            if power <= 0.0 {
                return Err(Error::ZeroNorm(t));
            }
            let err: f64 = estimate
                .row(t)
                .iter()
                .zip(truth.row(t))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            self.sum += err / power;
            self.count += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &NseAccumulator) {
        self.sum += other.sum;
        self.count += other.count;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    pub fn db(&self) -> f64 {
        to_db(self.mean())
    }
}

pub fn to_db(ratio: f64) -> f64 {
    if ratio <= 0.0 {
        return MNSE_FLOOR_DB;
    }
    (10.0 * ratio.log10()).max(MNSE_FLOOR_DB)
}

/// Mean NSE over all symbols of all sequences, in dB.
pub fn mnse(estimates: &[&Matrix], truths: &[&Matrix]) -> Result<f64> {
    if estimates.len() != truths.len() || estimates.is_empty() {
        return Err(Error::Dimension(
            "mnse needs matching, non-empty inputs".into(),
        ));
    }
    let mut acc = NseAccumulator::default();
    for (e, t) in estimates.iter().zip(truths) {
        acc.add_sequence(e, t)?;
    }
    Ok(acc.db())
}

/// Repeats the latest pilot observation; zeros before the first pilot.
pub fn zero_order_hold(obs: &Matrix, mask: &[bool]) -> Matrix {
    let mut out = Matrix::zeros(obs.rows(), obs.cols());
    let mut last: Option<usize> = None;
    for t in 0..obs.rows() {
        if mask[t] {
            last = Some(t);
        }
        if let Some(s) = last {
            out.row_mut(t).copy_from_slice(obs.row(s));
        }
    }
    out
}

/// Linear interpolation between consecutive pilots (non-causal); holds the
/// nearest pilot outside the first/last pilot.
pub fn linear_interpolation(obs: &Matrix, mask: &[bool]) -> Matrix {
    let pilots: Vec<usize> = (0..obs.rows()).filter(|&t| mask[t]).collect();
    let mut out = Matrix::zeros(obs.rows(), obs.cols());
    let Some(&first) = pilots.first() else {
        return out;
    };
    let last = *pilots.last().expect("non-empty");
    for t in 0..obs.rows() {
        if t <= first {
            out.row_mut(t).copy_from_slice(obs.row(first));
        } else if t >= last {
            out.row_mut(t).copy_from_slice(obs.row(last));
        } else {
            let k = pilots.partition_point(|&p| p <= t);
            let (a, b) = (pilots[k - 1], pilots[k]);
            let w = (t - a) as f64 / (b - a) as f64;
            let (ra, rb) = (obs.row(a).to_vec(), obs.row(b).to_vec());
            for (c, v) in out.row_mut(t).iter_mut().enumerate() {
                *v = (1.0 - w) * ra[c] + w * rb[c];
            }
        }
    }
    out
}
