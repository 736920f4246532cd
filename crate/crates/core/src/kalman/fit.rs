//! Least-squares fitting of AR(1)/AR(2) transitions from ground-truth channels,
//! per-Doppler (genie) and per-bin (bank) parameter sets, and the `HKP1` file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::filter::KalmanParams;
use crate::channel::{noise_variance_per_component, ChannelDataset, Split};
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::tensor::Matrix;

pub const PARAMS_MAGIC: [u8; 4] = *b"HKP1";
pub const PARAMS_VERSION: u32 = 1;

/// Ridge added to the sample-averaged normal equations.
pub const RIDGE: f64 = 1e-8;
/// Diagonal jitter for the process-noise Cholesky factor.
pub const CHOLESKY_JITTER: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArOrder {
    One,
    Two,
}

impl ArOrder {
    pub fn lags(self) -> usize {
        match self {
            ArOrder::One => 1,
            ArOrder::Two => 2,
        }
    }

    pub fn code(self) -> u8 {
        self.lags() as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(ArOrder::One),
            2 => Ok(ArOrder::Two),
            other => Err(Error::Config(format!(
                "AR order must be 1 or 2, got {other}"
            ))),
        }
    }
}

/// Structure imposed on the fitted transition matrices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TransitionShape {
    /// Unconstrained `d × d` blocks.
    #[default]
    Full,
    /// Each real component regresses on its own past only.
    Diagonal,
}

/// Fits `h_t ≈ F1 h_{t−1} + F2 h_{t−2}` over every `t ≥ 2` of every sequence
/// (rows of each matrix are symbols). `Q` is the residual covariance and
/// `R = diag(rdiag)` is passed through.
pub fn fit_ar(sequences: &[&Matrix], order: ArOrder, rdiag: Vec<f64>) -> Result<KalmanParams> {
    fit_ar_shaped(sequences, order, TransitionShape::Full, rdiag)
}

/// [`fit_ar`] with a chosen transition structure.
pub fn fit_ar_shaped(
    sequences: &[&Matrix],
    order: ArOrder,
    shape: TransitionShape,
    rdiag: Vec<f64>,
) -> Result<KalmanParams> {
    let first = sequences
        .first()
        .ok_or_else(|| Error::Empty("no sequences to fit".into()))?;
    let d = first.cols();
    if sequences.iter().any(|s| s.cols() != d) {
        return Err(Error::Dimension("sequences differ in width".into()));
    }
    if sequences.iter().any(|s| s.rows() < 3) {
        return Err(Error::Config(
            "sequences must have at least 3 symbols".into(),
        ));
    }
    let lags = order.lags();
    let width = lags * d;
    let start = 2;
    let n: usize = sequences.iter().map(|s| s.rows() - start).sum();
    if n < 2 * d + 1 {
        return Err(Error::Config(format!(
            "{n} samples are too few to fit {d}-dimensional dynamics"
        )));
    }

    let mut gram = Matrix::zeros(width, width);
    let mut cross = Matrix::zeros(width, d);
    let mut x = vec![0.0; width];
    for seq in sequences {
        for t in start..seq.rows() {
            for l in 0..lags {
                x[l * d..(l + 1) * d].copy_from_slice(seq.row(t - 1 - l));
            }
            let y = seq.row(t);
            for i in 0..width {
                let xi = x[i];
                if xi == 0.0 {
                    continue;
                }
                let g = gram.row_mut(i);
                for (gv, &xj) in g.iter_mut().zip(&x) {
                    *gv += xi * xj;
                }
                let c = cross.row_mut(i);
                for (cv, &yv) in c.iter_mut().zip(y) {
                    *cv += xi * yv;
                }
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    gram.scale_assign(inv_n);
    cross.scale_assign(inv_n);
    for i in 0..width {
        gram.set(i, i, gram.get(i, i) + RIDGE);
    }
    let top = match shape {
        TransitionShape::Full => gram.solve(&cross)?.transpose(), // d × width = [F1 F2]
        TransitionShape::Diagonal => {
            let mut top = Matrix::zeros(d, width);
            for i in 0..d {
                let idx: Vec<usize> = (0..lags).map(|l| l * d + i).collect();
                let mut g = Matrix::zeros(lags, lags);
                let mut c = Matrix::zeros(lags, 1);
                for (a, &ia) in idx.iter().enumerate() {
                    for (b, &ib) in idx.iter().enumerate() {
                        g.set(a, b, gram.get(ia, ib));
                    }
                    c.set(a, 0, cross.get(ia, i));
                }
                let coef = g.solve(&c)?;
                for (a, &ia) in idx.iter().enumerate() {
                    top.set(i, ia, coef.get(a, 0));
                }
            }
            top
        }
    };
    let f1 = top.slice_cols(0, d);
    let f2 = match order {
        ArOrder::One => Matrix::zeros(d, d),
        ArOrder::Two => top.slice_cols(d, 2 * d),
    };

    let mut resid_cov = Matrix::zeros(d, d);
    let mut e = vec![0.0; d];
    for seq in sequences {
        for t in start..seq.rows() {
            for l in 0..lags {
                x[l * d..(l + 1) * d].copy_from_slice(seq.row(t - 1 - l));
            }
            for (i, ei) in e.iter_mut().enumerate() {
                let pred: f64 = top.row(i).iter().zip(&x).map(|(a, b)| a * b).sum();
                *ei = seq.get(t, i) - pred;
            }
            for i in 0..d {
                let row = resid_cov.row_mut(i);
                for (rv, &ej) in row.iter_mut().zip(&e) {
                    *rv += e[i] * ej;
                }
            }
        }
    }
    resid_cov.scale_assign(inv_n);
    let lq = resid_cov.symmetrized().cholesky(CHOLESKY_JITTER)?;
    KalmanParams::new(f1, f2, lq, rdiag)
}

/// Which grouping a parameter bank uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BankMode {
    /// One entry per distinct Doppler, tagged by the Doppler in Hz (rounded).
    Genie,
    /// One entry per Doppler bin, tagged by bin index.
    Bank,
}

impl std::str::FromStr for BankMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genie" => Ok(BankMode::Genie),
            "bank" => Ok(BankMode::Bank),
            other => Err(Error::Config(format!("unknown fit mode {other:?}"))),
        }
    }
}

/// Tagged parameter sets sharing one AR order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBank {
    pub num_taps: usize,
    pub order: ArOrder,
    pub entries: BTreeMap<u32, KalmanParams>,
}

impl ParamBank {
    pub fn get(&self, tag: u32) -> Result<&KalmanParams> {
        self.entries
            .get(&tag)
            .ok_or_else(|| Error::Config(format!("no parameters stored for tag {tag}")))
    }

    /// Arithmetic mean of the entries' process covariances.
    pub fn mean_q(&self) -> Result<Matrix> {
        let mut it = self.entries.values();
        let first = it
            .next()
            .ok_or_else(|| Error::Empty("parameter bank has no entries".into()))?;
        let mut acc = first.q();
        for p in it {
            acc.add_assign(&p.q());
        }
        acc.scale_assign(1.0 / self.entries.len() as f64);
        Ok(acc)
    }
}

pub fn doppler_tag(doppler_hz: f64) -> u32 {
    doppler_hz.round() as u32
}

/// Fits one parameter set per group of the training split.
pub fn fit_groups(ds: &ChannelDataset, mode: BankMode, order: ArOrder) -> Result<ParamBank> {
    fit_groups_shaped(ds, mode, order, TransitionShape::Full)
}

/// [`fit_groups`] with a chosen transition structure.
pub fn fit_groups_shaped(
    ds: &ChannelDataset,
    mode: BankMode,
    order: ArOrder,
    shape: TransitionShape,
) -> Result<ParamBank> {
    let rdiag = vec![noise_variance_per_component(ds.snr_db, ds.num_taps); 2 * ds.num_taps];
    let mut groups: BTreeMap<u32, Vec<&Matrix>> = BTreeMap::new();
    for r in ds.split(Split::Train) {
        let tag = match mode {
            BankMode::Genie => doppler_tag(r.instance.doppler_hz),
            BankMode::Bank => r.bin,
        };
        groups.entry(tag).or_default().push(r.truth());
    }
    if groups.is_empty() {
        return Err(Error::Empty("training split is empty".into()));
    }
    let rdiag = sanitize_rdiag(rdiag);
    let mut entries = BTreeMap::new();
    for (tag, seqs) in groups {
        entries.insert(tag, fit_ar_shaped(&seqs, order, shape, rdiag.clone())?);
    }
    Ok(ParamBank {
        num_taps: ds.num_taps,
        order,
        entries,
    })
}

/// Filter bank over Doppler bins; fails when a requested bin has no data.
pub fn fit_bank(ds: &ChannelDataset, order: ArOrder, bins: &[u32]) -> Result<ParamBank> {
    let bank = fit_groups(ds, BankMode::Bank, order)?;
    for b in bins {
        if !bank.entries.contains_key(b) {
            return Err(Error::Empty(format!(
                "Doppler bin {b} has no training data"
            )));
        }
    }
    Ok(bank)
}

/// Noise-free datasets still need a strictly positive R for the filter.
fn sanitize_rdiag(rdiag: Vec<f64>) -> Vec<f64> {
    rdiag.into_iter().map(|r| r.max(1e-12)).collect()
}

pub fn encode_params(bank: &ParamBank) -> Vec<u8> {
    let mut w = ByteWriter::default();
    w.bytes(&PARAMS_MAGIC);
    w.u32(PARAMS_VERSION);
    w.u32(bank.num_taps as u32);
    w.u8(bank.order.code());
    w.u32(bank.entries.len() as u32);
    for (&tag, p) in &bank.entries {
        w.u32(tag);
        w.matrix(&p.f1);
        w.matrix(&p.f2);
        w.matrix(&p.lq);
        w.f64s(&p.rdiag);
    }
    w.into_inner()
}

pub fn decode_params(bytes: &[u8]) -> Result<ParamBank> {
    let mut r = ByteReader::new(bytes);
    r.magic(PARAMS_MAGIC)?;
    r.version(PARAMS_VERSION)?;
    let num_taps = r.u32()? as usize;
    let order = ArOrder::from_code(r.u8()?).map_err(|e| Error::Format(e.to_string()))?;
    let count = r.u32()? as usize;
    if num_taps == 0 {
        return Err(Error::Format("zero taps".into()));
    }
    let d = 2 * num_taps;
    r.require(count * (4 + 3 * d * d * 8 + d * 8))?;
    let mut entries = BTreeMap::new();
    for _ in 0..count {
        let tag = r.u32()?;
        let f1 = r.matrix(d, d)?;
        let f2 = r.matrix(d, d)?;
        let lq = r.matrix(d, d)?;
        let rdiag = r.f64s(d)?;
        let p = KalmanParams::new(f1, f2, lq, rdiag).map_err(|e| Error::Format(e.to_string()))?;
        entries.insert(tag, p);
    }
    r.finish()?;
    Ok(ParamBank {
        num_taps,
        order,
        entries,
    })
}

pub fn write_params(path: impl AsRef<Path>, bank: &ParamBank) -> Result<()> {
    fs::write(path, encode_params(bank))?;
    Ok(())
}

pub fn read_params(path: impl AsRef<Path>) -> Result<ParamBank> {
    decode_params(&fs::read(path)?)
}
