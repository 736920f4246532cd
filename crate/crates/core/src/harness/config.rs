//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! known and may appear once; list values are comma separated.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::channel::{ChannelConfig, DatasetSpec, PilotPattern};
use crate::error::{Error, Result};
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub num_taps: usize,
    pub seq_len: usize,
    pub dopplers: Vec<f64>,
    pub train_per_doppler: usize,
    pub test_per_doppler: usize,
    pub snr_db: f64,
    pub pilot_period: usize,
    pub pilot_offset: usize,
    pub symbol_period_s: f64,
    pub num_sinusoids: usize,
    pub seed: u64,
    /// Method to train or evaluate, as named on the command line.
    pub method: String,
    /// Fit diagonal transition matrices instead of full ones.
    pub diagonal_f: bool,
    pub train: TrainConfig,
    /// Output path (dataset, checkpoint or report, depending on the command).
    pub out: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let spec = DatasetSpec::desk_default();
        Self {
            num_taps: spec.template.num_taps,
            seq_len: spec.seq_len,
            dopplers: spec.dopplers,
            train_per_doppler: spec.train_per_doppler,
            test_per_doppler: spec.test_per_doppler,
            snr_db: spec.snr_db,
            pilot_period: spec.pilot.period,
            pilot_offset: spec.pilot.offset,
            symbol_period_s: spec.template.symbol_period_s,
            num_sinusoids: spec.template.num_sinusoids,
            seed: spec.seed,
            method: "hkf2".into(),
            diagonal_f: false,
            train: TrainConfig::default(),
            out: String::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

/// Comma-separated floats, e.g. `0,50,150`.
pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

impl ExperimentConfig {
    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "num_taps" => self.num_taps = parse(key, v)?,
            "seq_len" => self.seq_len = parse(key, v)?,
            "dopplers" => self.dopplers = parse_list(key, v)?,
            "train_per_doppler" => self.train_per_doppler = parse(key, v)?,
            "test_per_doppler" => self.test_per_doppler = parse(key, v)?,
            "snr_db" => self.snr_db = parse(key, v)?,
            "pilot_period" => self.pilot_period = parse(key, v)?,
            "pilot_offset" => self.pilot_offset = parse(key, v)?,
            "symbol_period_s" => self.symbol_period_s = parse(key, v)?,
            "num_sinusoids" => self.num_sinusoids = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "method" => self.method = v.to_string(),
            "diagonal_f" => self.diagonal_f = parse(key, v)?,
            "lr" => self.train.learning_rate = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "clip_norm" => self.train.clip_norm = parse(key, v)?,
            "beta1" => self.train.beta1 = parse(key, v)?,
            "beta2" => self.train.beta2 = parse(key, v)?,
            "eps" => self.train.eps = parse(key, v)?,
            "train_seed" => self.train.seed = parse(key, v)?,
            "out" => self.out = v.to_string(),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a config file body on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim().to_string();
            if seen.contains(&k) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {k:?}",
                    i + 1
                )));
            }
            cfg.set(&k, v)?;
            seen.push(k);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset_spec()?.template.validate()?;
        if self.seq_len < 3 || self.dopplers.is_empty() {
            return Err(Error::Config(
                "seq_len must be ≥ 3 and dopplers nonempty".into(),
            ));
        }
        if self.train_per_doppler == 0 || self.test_per_doppler == 0 {
            return Err(Error::Config("per-Doppler counts must be ≥ 1".into()));
        }
        self.train.validate()
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        let mut template = ChannelConfig::new(self.num_taps, 0.0, 0);
        template.symbol_period_s = self.symbol_period_s;
        template.num_sinusoids = self.num_sinusoids;
        Ok(DatasetSpec {
            dopplers: self.dopplers.clone(),
            train_per_doppler: self.train_per_doppler,
            test_per_doppler: self.test_per_doppler,
            seq_len: self.seq_len,
            template,
            pilot: PilotPattern::new(self.pilot_period, self.pilot_offset)?,
            snr_db: self.snr_db,
            seed: self.seed,
        })
    }

    /// Every setting, one `key=value` line each, in a fixed order.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let list: Vec<String> = self.dopplers.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "num_taps={}", self.num_taps);
        let _ = writeln!(s, "seq_len={}", self.seq_len);
        let _ = writeln!(s, "dopplers={}", list.join(","));
        let _ = writeln!(s, "train_per_doppler={}", self.train_per_doppler);
        let _ = writeln!(s, "test_per_doppler={}", self.test_per_doppler);
        let _ = writeln!(s, "snr_db={}", self.snr_db);
        let _ = writeln!(s, "pilot_period={}", self.pilot_period);
        let _ = writeln!(s, "pilot_offset={}", self.pilot_offset);
        let _ = writeln!(s, "symbol_period_s={}", self.symbol_period_s);
        let _ = writeln!(s, "num_sinusoids={}", self.num_sinusoids);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "method={}", self.method);
        let _ = writeln!(s, "diagonal_f={}", self.diagonal_f);
        s.push_str(&self.train.to_key_values());
        let _ = writeln!(s, "out={}", self.out);
        s
    }
}
