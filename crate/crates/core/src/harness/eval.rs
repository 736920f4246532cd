//! Per-Doppler MNSE of every tracking method on a dataset split.

use std::fmt;
use std::str::FromStr;

use super::report::ReportRow;
use crate::channel::{ChannelDataset, Condition, InstanceRecord, Split};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::hkf::{filter_sequence, init_base, rdiag_for, sampler_draws, HkfVariant};
use crate::kalman::{
    doppler_tag, linear_interpolation, run_filter, zero_order_hold, KalmanParams, NseAccumulator,
    ParamBank, Schedule,
};
use crate::lstm::track_sequence;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Kalman filter fitted to the exact Doppler.
    Gkf,
    /// Kalman filter of the Doppler's bin.
    Bkf,
    Lstm,
    Hkf1,
    Hkf2,
    Hkfg,
    /// The hypernetwork filter's base filter without corrections.
    StaticKf,
    Hold,
    Interp,
}

pub const ALL_METHODS: [Method; 9] = [
    Method::Gkf,
    Method::Bkf,
    Method::Lstm,
    Method::Hkf1,
    Method::Hkf2,
    Method::Hkfg,
    Method::StaticKf,
    Method::Hold,
    Method::Interp,
];

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gkf => "gkf",
            Method::Bkf => "bkf",
            Method::Lstm => "lstm",
            Method::Hkf1 => "hkf1",
            Method::Hkf2 => "hkf2",
            Method::Hkfg => "hkfg",
            Method::StaticKf => "static-kf",
            Method::Hold => "hold",
            Method::Interp => "interp",
        }
    }

    pub fn hkf_variant(self) -> Option<HkfVariant> {
        match self {
            Method::Hkf1 => Some(HkfVariant::One),
            Method::Hkf2 => Some(HkfVariant::Two),
            Method::Hkfg => Some(HkfVariant::General),
            _ => None,
        }
    }

    /// Methods trained into a checkpoint.
    pub fn is_trained(self) -> bool {
        matches!(
            self,
            Method::Lstm | Method::Hkf1 | Method::Hkf2 | Method::Hkfg
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_METHODS
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// What a method needs besides the data.
#[derive(Clone, Debug)]
pub enum Artifact {
    None,
    Params(ParamBank),
    Checkpoint(Checkpoint),
}

/// Evaluates `method` on `split` under `cond`; one row per Doppler that has
/// records, in the dataset's Doppler order.
pub fn evaluate(
    ds: &ChannelDataset,
    method: Method,
    artifact: &Artifact,
    cond: Condition,
    split: Split,
    checkpoint_id: &str,
) -> Result<Vec<ReportRow>> {
    let (snr_db, pilot) = ds.resolve(cond)?;
    let rdiag = rdiag_for(snr_db, ds.num_taps);
    let estimator = Estimator::new(ds, method, artifact, &rdiag, snr_db)?;
    let mut rows = Vec::new();
    for (doppler, records) in ds.by_doppler(split) {
        if records.is_empty() {
            continue;
        }
        let mut acc = NseAccumulator::default();
        for r in &records {
            let (obs, mask) = ds.observations(r, cond)?;
            let est = estimator.estimate(r, &obs, &mask)?;
            acc.add_sequence(&est, r.truth())?;
        }
        rows.push(ReportRow {
            doppler_hz: doppler,
            method: method.name().to_string(),
            mnse_db: acc.db(),
            num_test_instances: records.len(),
            snr_db_eval: snr_db,
            pilot_period_eval: pilot.period,
            seed: ds.master_seed,
            checkpoint_id: checkpoint_id.to_string(),
        });
    }
    Ok(rows)
}

enum Estimator<'a> {
    Genie(&'a ParamBank, Vec<f64>),
    Binned(&'a ParamBank, Vec<f64>),
    Static(KalmanParams),
    Tracker(&'a crate::lstm::TrackerWeights),
    Filter(&'a crate::hkf::HkfModel, Vec<f64>),
    Hold,
    Interp,
}

fn require_taps(have: usize, want: usize) -> Result<()> {
    if have != want {
        return Err(Error::Dimension(format!(
            "artifact is for {have} taps, dataset has {want}"
        )));
    }
    Ok(())
}

impl<'a> Estimator<'a> {
    fn new(
        ds: &ChannelDataset,
        method: Method,
        artifact: &'a Artifact,
        rdiag: &[f64],
        snr_db: f64,
    ) -> Result<Self> {
        let missing = || Error::Config(format!("method {method} needs a different artifact"));
        match (method, artifact) {
            (Method::Hold, _) => Ok(Estimator::Hold),
            (Method::Interp, _) => Ok(Estimator::Interp),
            (Method::Gkf | Method::Bkf | Method::StaticKf, Artifact::Params(bank)) => {
                require_taps(bank.num_taps, ds.num_taps)?;
                Ok(match method {
                    Method::Gkf => Estimator::Genie(bank, rdiag.to_vec()),
                    Method::Bkf => Estimator::Binned(bank, rdiag.to_vec()),
                    _ => Estimator::Static(init_base(bank, snr_db)?.params()),
                })
            }
            (Method::StaticKf, Artifact::Checkpoint(Checkpoint::Filter(m))) => {
                require_taps(m.dim() / 2, ds.num_taps)?;
                Ok(Estimator::Static(m.base.at_snr(snr_db).params()))
            }
            (Method::Lstm, Artifact::Checkpoint(Checkpoint::Tracker(w))) => {
                require_taps(w.dim() / 2, ds.num_taps)?;
                Ok(Estimator::Tracker(w))
            }
            (m, Artifact::Checkpoint(Checkpoint::Filter(model)))
                if m.hkf_variant() == Some(model.variant) =>
            {
                require_taps(model.dim() / 2, ds.num_taps)?;
                Ok(Estimator::Filter(model, rdiag.to_vec()))
            }
            _ => Err(missing()),
        }
    }

    fn estimate(&self, r: &InstanceRecord, obs: &Matrix, mask: &[bool]) -> Result<Matrix> {
        match self {
            Estimator::Genie(bank, rdiag) => {
                let p = bank.get(doppler_tag(r.instance.doppler_hz))?;
                run_filter(
                    obs,
                    mask,
                    Schedule::Static(&p.with_rdiag(rdiag.clone())),
                    None,
                )
            }
            Estimator::Binned(bank, rdiag) => {
                let p = bank.get(r.bin)?;
                run_filter(
                    obs,
                    mask,
                    Schedule::Static(&p.with_rdiag(rdiag.clone())),
                    None,
                )
            }
            Estimator::Static(p) => run_filter(obs, mask, Schedule::Static(p), None),
            Estimator::Tracker(w) => track_sequence(w, obs, mask),
            Estimator::Filter(model, rdiag) => {
                let eps = sampler_draws(r.instance.seed, obs.rows(), obs.cols());
                filter_sequence(model, obs, mask, rdiag, &eps)
            }
            Estimator::Hold => Ok(zero_order_hold(obs, mask)),
            Estimator::Interp => Ok(linear_interpolation(obs, mask)),
        }
    }
}
