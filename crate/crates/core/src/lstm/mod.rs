//! LSTM building blocks and the standalone recurrent tracker baseline.

mod cell;
mod tracker;

pub use cell::{lstm_step, stack_step, Affine, BoundAffine, BoundLstmLayer, LstmLayer, LstmState};
pub use tracker::{
    input_scale, track_sequence, tracker_forward, tracker_loss, train_lstm, BoundTracker,
    TrackerOutput, TrackerWeights,
};
pub(crate) use tracker::{stack_rows, sum_scalars};
