//! Hypernetwork Kalman filter: a base AR Kalman filter whose parameters are
//! corrected at every symbol by an LSTM reading the observation stream.

mod model;
mod train;

pub use model::{
    apply_residual, filter_sequence, hkf_forward, hkf_loss, hkf_step, init_base, rdiag_for,
    residual_len, residual_params, sampler_draws, synth_obs, BoundHkf, HkfBase, HkfModel,
    HkfOutput, HkfState, HkfVariant,
};
pub use train::{
    new_hkf, train_hkf, training_draw, TrainingDraw, GENERAL_PILOT_PERIODS, GENERAL_SNR_RANGE_DB,
};
