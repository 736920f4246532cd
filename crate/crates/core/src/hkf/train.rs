//! End-to-end training of the hypernetwork filter.

use super::model::{hkf_forward, hkf_loss, init_base, rdiag_for, HkfModel, HkfVariant};
use crate::channel::{observe_with_noise, ChannelDataset, InstanceRecord, PilotPattern, Split};
use crate::error::{Error, Result};
use crate::kalman::{fit_groups, ArOrder, BankMode};
use crate::lstm::input_scale;
use crate::rng::SeededRng;
use crate::tensor::Matrix;
use crate::train::{train_loop, LossTrace, TrainConfig};

/// SNR range, in dB, drawn from when training the general variant.
pub const GENERAL_SNR_RANGE_DB: (f64, f64) = (5.0, 15.0);
/// Pilot periods drawn from when training the general variant.
pub const GENERAL_PILOT_PERIODS: [usize; 5] = [3, 5, 6, 8, 10];

/// Observation condition of one training pass.
#[derive(Clone, Debug)]
pub struct TrainingDraw {
    pub snr_db: f64,
    pub pilot: PilotPattern,
    pub observations: Matrix,
    pub mask: Vec<bool>,
    pub rdiag: Vec<f64>,
    /// Sampler draws, `T × 2N`.
    pub eps: Matrix,
}

/// Draws the condition for one pass over `record`.
///
/// Fixed variants reuse the stored observations. The general variant draws an
/// SNR, a pilot period and fresh observation noise from `rng`.
pub fn training_draw(
    ds: &ChannelDataset,
    record: &InstanceRecord,
    variant: HkfVariant,
    rng: &mut SeededRng,
) -> Result<TrainingDraw> {
    let (len, d) = record.truth().shape();
    let draw = if variant == HkfVariant::General {
        let snr_db = rng.uniform_range(GENERAL_SNR_RANGE_DB.0, GENERAL_SNR_RANGE_DB.1);
        let period = GENERAL_PILOT_PERIODS[rng.below(GENERAL_PILOT_PERIODS.len())];
        let pilot = PilotPattern::new(period, ds.pilot.offset % period)?;
        let noise = Matrix::from_vec(len, d, rng.normals(len * d))?;
        let (observations, mask) = observe_with_noise(&record.instance, &noise, pilot, snr_db);
        TrainingDraw {
            snr_db,
            pilot,
            observations,
            mask,
            rdiag: rdiag_for(snr_db, ds.num_taps),
            eps: Matrix::zeros(len, d),
        }
    } else {
        TrainingDraw {
            snr_db: ds.snr_db,
            pilot: ds.pilot,
            observations: record.observations.clone(),
            mask: record.mask.clone(),
            rdiag: rdiag_for(ds.snr_db, ds.num_taps),
            eps: Matrix::zeros(len, d),
        }
    };
    Ok(TrainingDraw {
        eps: Matrix::from_vec(len, d, rng.normals(len * d))?,
        ..draw
    })
}

/// Untrained model for `ds`: base fitted on the training split, zero head.
pub fn new_hkf(ds: &ChannelDataset, variant: HkfVariant, seed: u64) -> Result<HkfModel> {
    let fitted = fit_groups(ds, BankMode::Genie, ArOrder::Two)?;
    let base = init_base(&fitted, ds.snr_db)?;
    Ok(HkfModel::init(variant, base, input_scale(ds)?, seed))
}

/// Minimizes `Σ_t MSE(ĥ_t, h_t)` over the training split.
pub fn train_hkf(
    ds: &ChannelDataset,
    model: &mut HkfModel,
    cfg: &TrainConfig,
) -> Result<LossTrace> {
    let train: Vec<_> = ds.split(Split::Train).collect();
    if train.is_empty() {
        return Err(Error::Empty("dataset has no training split".into()));
    }
    if model.dim() != 2 * ds.num_taps {
        return Err(Error::Dimension(format!(
            "model tracks {} components, dataset has {}",
            model.dim(),
            2 * ds.num_taps
        )));
    }
    let variant = model.variant;
    let base = model.base.clone();
    train_loop(model, train.len(), cfg, |tape, bound, ctx| {
        let r = train[ctx.item];
        let mut rng = SeededRng::new(ctx.seed);
        let draw = training_draw(ds, r, variant, &mut rng)?;
        let out = hkf_forward(
            tape,
            bound,
            &base,
            &draw.observations,
            &draw.mask,
            &draw.rdiag,
            &draw.eps,
        )?;
        hkf_loss(tape, &out, r.truth())
    })
}
