//! Labeled collections of channel instances and their `HKD1` file format.

use std::fs;
use std::path::Path;

use super::sim::{generate_instance, observe, ChannelConfig, ChannelInstance, PilotPattern};
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::rng::derive_seed;
use crate::tensor::Matrix;

pub const DATASET_MAGIC: [u8; 4] = *b"HKD1";
pub const DATASET_VERSION: u32 = 1;

/// Doppler bins of the filter bank, as `(bin, member Dopplers in Hz)`.
pub const DOPPLER_BINS: [(u32, [f64; 3]); 5] = [
    (0, [0.0, 30.0, 60.0]),
    (1, [70.0, 100.0, 130.0]),
    (2, [150.0, 210.0, 270.0]),
    (3, [300.0, 400.0, 500.0]),
    (4, [800.0, 1300.0, 1850.0]),
];

/// Bin index of an arbitrary Doppler. Values between two bins go to the bin
/// whose nearest member is closer (edges at 65, 140, 285 and 650 Hz).
pub fn doppler_bin(doppler_hz: f64) -> u32 {
    let mut bin = 0;
    for pair in DOPPLER_BINS.windows(2) {
        let (lo_bin, lo) = pair[0];
        let (_, hi) = pair[1];
        let edge = 0.5 * (lo[2] + hi[0]);
        if doppler_hz >= edge {
            bin = lo_bin + 1;
        }
    }
    bin
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Split::Train),
            1 => Ok(Split::Test),
            other => Err(Error::Format(format!("unknown split code {other}"))),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceRecord {
    pub instance: ChannelInstance,
    pub bin: u32,
    pub split: Split,
    pub mask: Vec<bool>,
    /// `T × 2N`, zero where `mask` is false.
    pub observations: Matrix,
}

impl InstanceRecord {
    pub fn truth(&self) -> &Matrix {
        &self.instance.h
    }
}

/// Observation condition used at evaluation; `None` keeps the dataset's value.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Condition {
    pub snr_db: Option<f64>,
    pub pilot_period: Option<usize>,
}

impl Condition {
    pub fn is_default(&self) -> bool {
        self.snr_db.is_none() && self.pilot_period.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelDataset {
    pub num_taps: usize,
    pub seq_len: usize,
    pub symbol_period_s: f64,
    pub snr_db: f64,
    pub pilot: PilotPattern,
    pub master_seed: u64,
    pub dopplers: Vec<f64>,
    pub records: Vec<InstanceRecord>,
}

impl ChannelDataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &InstanceRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Resolved `(snr_db, pilot pattern)` under `cond`.
    pub fn resolve(&self, cond: Condition) -> Result<(f64, PilotPattern)> {
        let pilot = match cond.pilot_period {
            Some(p) => PilotPattern::new(p, self.pilot.offset % p.max(1))?,
            None => self.pilot,
        };
        Ok((cond.snr_db.unwrap_or(self.snr_db), pilot))
    }

    /// Observations and mask of `record` under `cond`. Channels and noise
    /// draws are reused; only the mask and the noise scale change.
    pub fn observations(
        &self,
        record: &InstanceRecord,
        cond: Condition,
    ) -> Result<(Matrix, Vec<bool>)> {
        let (snr, pilot) = self.resolve(cond)?;
        if snr == self.snr_db && pilot == self.pilot {
            return Ok((record.observations.clone(), record.mask.clone()));
        }
        Ok(observe(&record.instance, pilot, snr))
    }

    /// Records of one split grouped by Doppler, in the dataset's Doppler order.
    pub fn by_doppler(&self, split: Split) -> Vec<(f64, Vec<&InstanceRecord>)> {
        self.dopplers
            .iter()
            .map(|&d| {
                (
                    d,
                    self.split(split)
                        .filter(|r| r.instance.doppler_hz == d)
                        .collect(),
                )
            })
            .collect()
    }
}

/// Arguments to [`make_dataset`].
#[derive(Clone, Debug)]
pub struct DatasetSpec {
    pub dopplers: Vec<f64>,
    pub train_per_doppler: usize,
    pub test_per_doppler: usize,
    pub seq_len: usize,
    /// Channel template; `doppler_hz` and `seed` are overwritten per instance.
    pub template: ChannelConfig,
    pub pilot: PilotPattern,
    pub snr_db: f64,
    pub seed: u64,
}

impl DatasetSpec {
    /// 8 taps, 256 symbols, Dopplers {0, 50, 150, 400, 1000, 1850} Hz,
    /// 64 train / 16 test per Doppler, 10 dB SNR, pilot every 6th symbol.
    pub fn desk_default() -> Self {
        Self {
            dopplers: vec![0.0, 50.0, 150.0, 400.0, 1000.0, 1850.0],
            train_per_doppler: 64,
            test_per_doppler: 16,
            seq_len: 256,
            template: ChannelConfig::new(8, 0.0, 0),
            pilot: PilotPattern {
                period: 6,
                offset: 0,
            },
            snr_db: 10.0,
            seed: 2021,
        }
    }
}

/// Builds a dataset. Instance `i`, counted over Dopplers in list order with
/// each Doppler's train instances before its test instances, uses seed
/// `derive_seed(spec.seed, i)`.
pub fn make_dataset(spec: &DatasetSpec) -> Result<ChannelDataset> {
    if spec.train_per_doppler == 0 || spec.test_per_doppler == 0 {
        return Err(Error::Config(
            "per-Doppler counts must be at least 1".into(),
        ));
    }
    if spec.dopplers.is_empty() {
        return Err(Error::Config("no Doppler values given".into()));
    }
    let mut records = Vec::new();
    let mut counter = 0u64;
    for &doppler in &spec.dopplers {
        let plan = std::iter::repeat(Split::Train)
            .take(spec.train_per_doppler)
            .chain(std::iter::repeat(Split::Test).take(spec.test_per_doppler));
        for split in plan {
            let mut cfg = spec.template.clone();
            cfg.doppler_hz = doppler;
            cfg.seed = derive_seed(spec.seed, counter);
            counter += 1;
            let instance = generate_instance(&cfg, spec.seq_len)?;
            let (observations, mask) = observe(&instance, spec.pilot, spec.snr_db);
            records.push(InstanceRecord {
                bin: doppler_bin(doppler),
                split,
                mask,
                observations,
                instance,
            });
        }
    }
    Ok(ChannelDataset {
        num_taps: spec.template.num_taps,
        seq_len: spec.seq_len,
        symbol_period_s: spec.template.symbol_period_s,
        snr_db: spec.snr_db,
        pilot: spec.pilot,
        master_seed: spec.seed,
        dopplers: spec.dopplers.clone(),
        records,
    })
}

/// Serializes a dataset. After the fixed header (through `num_dopplers`) the
/// Doppler list follows as `num_dopplers` f64 values, then the instances.
pub fn encode_dataset(ds: &ChannelDataset) -> Vec<u8> {
    let mut w = ByteWriter::default();
    w.bytes(&DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    w.u32(ds.num_taps as u32);
    w.u32(ds.seq_len as u32);
    w.u32(ds.records.len() as u32);
    w.f64(ds.symbol_period_s);
    w.f64(ds.snr_db);
    w.u32(ds.pilot.period as u32);
    w.u32(ds.pilot.offset as u32);
    w.u64(ds.master_seed);
    w.u32(ds.dopplers.len() as u32);
    for &d in &ds.dopplers {
        w.f64(d);
    }
    for r in &ds.records {
        w.f64(r.instance.doppler_hz);
        w.u32(r.bin);
        w.u8(r.split.code());
        w.u64(r.instance.seed);
        w.f64s(r.instance.h.as_slice());
        for &m in &r.mask {
            w.u8(m as u8);
        }
        w.f64s(r.observations.as_slice());
    }
    w.into_inner()
}

pub fn decode_dataset(bytes: &[u8]) -> Result<ChannelDataset> {
    let mut r = ByteReader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    r.version(DATASET_VERSION)?;
    let num_taps = r.u32()? as usize;
    let seq_len = r.u32()? as usize;
    let count = r.u32()? as usize;
    let symbol_period_s = r.f64()?;
    let snr_db = r.f64()?;
    let period = r.u32()? as usize;
    let offset = r.u32()? as usize;
    let master_seed = r.u64()?;
    let num_dopplers = r.u32()? as usize;
    if num_taps == 0 || seq_len == 0 {
        return Err(Error::Format("zero taps or zero length".into()));
    }
    let pilot = PilotPattern::new(period, offset).map_err(|e| Error::Format(e.to_string()))?;
    r.require(num_dopplers * 8)?;
    let dopplers = (0..num_dopplers)
        .map(|_| r.f64())
        .collect::<Result<Vec<_>>>()?;

    let width = 2 * num_taps;
    let per_record = 8 + 4 + 1 + 8 + seq_len * width * 8 + seq_len + seq_len * width * 8;
    r.require(count * per_record)?;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let doppler_hz = r.f64()?;
        let bin = r.u32()?;
        let split = Split::from_code(r.u8()?)?;
        let seed = r.u64()?;
        let h = Matrix::from_vec(seq_len, width, r.f64s(seq_len * width)?)?;
        let mask = (0..seq_len)
            .map(|_| r.u8().map(|b| b != 0))
            .collect::<Result<Vec<_>>>()?;
        let observations = Matrix::from_vec(seq_len, width, r.f64s(seq_len * width)?)?;
        records.push(InstanceRecord {
            instance: ChannelInstance {
                h,
                doppler_hz,
                seed,
            },
            bin,
            split,
            mask,
            observations,
        });
    }
    r.finish()?;
    Ok(ChannelDataset {
        num_taps,
        seq_len,
        symbol_period_s,
        snr_db,
        pilot,
        master_seed,
        dopplers,
        records,
    })
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &ChannelDataset) -> Result<()> {
    fs::write(path, encode_dataset(ds))?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<ChannelDataset> {
    decode_dataset(&fs::read(path)?)
}
