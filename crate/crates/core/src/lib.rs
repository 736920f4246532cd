//! Channel tracking under unknown Doppler with Kalman filters whose
//! parameters are corrected step by step by a recurrent hypernetwork.
//!
//! The crate bundles everything needed to reproduce the comparison: a
//! reverse-mode autodiff tape ([`tensor`]), a Jakes fading simulator
//! ([`channel`]), classical AR Kalman filters and filter banks ([`kalman`]),
//! an LSTM tracker baseline ([`lstm`]), the hypernetwork Kalman filter
//! ([`hkf`]) and the experiment harness behind the `hkf` CLI ([`harness`]).

pub mod channel;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod hkf;
pub mod io;
pub mod kalman;
pub mod lstm;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
