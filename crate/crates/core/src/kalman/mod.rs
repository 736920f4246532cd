//! Classical Kalman channel tracking: filtering, fitting and evaluation metrics.

mod filter;
mod fit;
mod metrics;

pub use filter::{
    event_at, predict, predict_diff, run_filter, step_diff, update, update_diff, DiffParams,
    DiffState, KalmanParams, KalmanState, ObservationEvent, ObservationKind, Schedule,
};
pub use fit::{
    decode_params, doppler_tag, encode_params, fit_ar, fit_ar_shaped, fit_bank, fit_groups,
    fit_groups_shaped, read_params, write_params, ArOrder, BankMode, ParamBank, TransitionShape,
    CHOLESKY_JITTER, PARAMS_MAGIC, PARAMS_VERSION, RIDGE,
};
pub use metrics::{
    linear_interpolation, mnse, to_db, zero_order_hold, NseAccumulator, MNSE_FLOOR_DB,
};
