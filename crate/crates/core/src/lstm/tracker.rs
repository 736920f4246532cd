//! Standalone recurrent channel tracker.
//!
//! At every symbol the network reads the previous estimate and an observation,
//! and emits the current estimate together with a guess of the next
//! observation. When the next symbol has no pilot, that guess is fed back in
//! place of the missing observation.

use super::cell::{stack_step, Affine, BoundAffine, BoundLstmLayer, LstmLayer, LstmState};
use crate::channel::{ChannelDataset, Split};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{DiffTensor, Matrix, Tape};
use crate::train::{train_loop, LossTrace, TrainConfig, Trainable};

/// `1/√(mean squared real component)` over the training split's ground truth.
pub fn input_scale(ds: &ChannelDataset) -> Result<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for r in ds.split(Split::Train) {
        sum += r.truth().frobenius_sq();
        count += r.truth().len();
    }
    if count == 0 || sum <= 0.0 {
        return Err(Error::Empty("training split has no channel power".into()));
    }
    Ok(1.0 / (sum / count as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerWeights {
    pub layers: Vec<LstmLayer>,
    /// Hidden → `(ĥ_t, ô_{t+1})`, `4N` outputs.
    pub head: Affine,
    pub input_scale: f64,
}

impl TrackerWeights {
    /// Hidden size `2N`, input `[ĥ_{t−1}, õ_t]` of size `4N`.
    pub fn init(num_taps: usize, num_layers: usize, input_scale: f64, seed: u64) -> Self {
        let d = 2 * num_taps;
        let hidden = d;
        let mut rng = SeededRng::new(seed);
        let layers = (0..num_layers)
            .map(|i| LstmLayer::init(if i == 0 { 2 * d } else { hidden }, hidden, &mut rng))
            .collect();
        let head = Affine::init(hidden, 2 * d, &mut rng);
        Self {
            layers,
            head,
            input_scale,
        }
    }

    /// Channel dimension `2N`.
    pub fn dim(&self) -> usize {
        self.head.output() / 2
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden()
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.layers.iter().flat_map(LstmLayer::params).collect();
        out.extend(self.head.params());
        out
    }
}

#[derive(Clone, Debug)]
pub struct BoundTracker {
    pub layers: Vec<BoundLstmLayer>,
    pub head: BoundAffine,
    pub input_scale: f64,
}

impl Trainable for TrackerWeights {
    type Bound = BoundTracker;

    fn bind(&self, tape: Option<&Tape>) -> BoundTracker {
        BoundTracker {
            layers: self.layers.iter().map(|l| l.bind(tape)).collect(),
            head: self.head.bind(tape),
            input_scale: self.input_scale,
        }
    }

    fn leaves(bound: &BoundTracker) -> Vec<&DiffTensor> {
        let mut out: Vec<&DiffTensor> = bound.layers.iter().flat_map(|l| l.leaves()).collect();
        out.extend(bound.head.leaves());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self
            .layers
            .iter_mut()
            .flat_map(LstmLayer::params_mut)
            .collect();
        out.extend(self.head.params_mut());
        out
    }
}

/// Per-symbol outputs of one forward pass.
#[derive(Clone, Debug)]
pub struct TrackerOutput {
    /// `ĥ_t` for `t = 0..T`.
    pub estimates: Vec<DiffTensor>,
    /// `ô_{t+1}` emitted at step `t`, for `t = 0..T`.
    pub predicted_obs: Vec<DiffTensor>,
    /// The observation actually fed at each step.
    pub fed_obs: Vec<DiffTensor>,
}

impl TrackerOutput {
    pub fn estimate_matrix(&self) -> Matrix {
        stack_rows(&self.estimates)
    }
}

pub(crate) fn stack_rows(cols: &[DiffTensor]) -> Matrix {
    let d = cols[0].rows();
    let mut out = Matrix::zeros(cols.len(), d);
    for (t, c) in cols.iter().enumerate() {
        out.row_mut(t).copy_from_slice(c.value().as_slice());
    }
    out
}

fn row_tensor(m: &Matrix, t: usize) -> DiffTensor {
    DiffTensor::constant(Matrix::column(m.row(t)))
}

/// Unrolls the tracker over a sequence.
///
/// `ĥ_0` is the first observation (zeros without a pilot at symbol 0). When
/// `synthetic_feedback` is false, missing observations are fed as zeros
/// instead of the model's own predictions.
pub fn tracker_forward(
    tape: &Tape,
    model: &BoundTracker,
    obs: &Matrix,
    mask: &[bool],
    synthetic_feedback: bool,
) -> Result<TrackerOutput> {
    let len = obs.rows();
    let d = obs.cols();
    if len == 0 || mask.len() != len {
        return Err(Error::Dimension(
            "observation and mask lengths differ".into(),
        ));
    }
    if model.head.weight.rows() != 2 * d {
        return Err(Error::Dimension(format!(
            "tracker emits {} values, data needs {}",
            model.head.weight.rows(),
            2 * d
        )));
    }
    let s = model.input_scale;
    let hidden = model.layers[0].hidden();
    let zeros = DiffTensor::constant(Matrix::zeros(d, 1));
    let first = if mask[0] {
        row_tensor(obs, 0)
    } else {
        zeros.clone()
    };
    let mut states: Vec<LstmState> = model
        .layers
        .iter()
        .map(|_| LstmState::zeros(hidden))
        .collect();
    let mut h_prev = first.clone();
    let mut o_next: Option<DiffTensor> = None;
    let mut out = TrackerOutput {
        estimates: Vec::with_capacity(len),
        predicted_obs: Vec::with_capacity(len),
        fed_obs: Vec::with_capacity(len),
    };
    for t in 0..len {
        let o_tilde = if mask[t] {
            row_tensor(obs, t)
        } else if synthetic_feedback {
            o_next.clone().unwrap_or_else(|| zeros.clone())
        } else {
            zeros.clone()
        };
        let x = tape.concat_rows(&[&h_prev, &o_tilde])?;
        let x = tape.scale(&x, s)?;
        states = stack_step(tape, &model.layers, &states, &x)?;
        let y = model
            .head
            .apply(tape, &states.last().expect("≥1 layer").z)?;
        let y = tape.scale(&y, 1.0 / s)?;
        let h_t = if t == 0 {
            first.clone()
        } else {
            tape.slice_rows(&y, 0..d)?
        };
        let o_t1 = tape.slice_rows(&y, d..2 * d)?;
        out.estimates.push(h_t.clone());
        out.predicted_obs.push(o_t1.clone());
        out.fed_obs.push(o_tilde);
        h_prev = h_t;
        o_next = Some(o_t1);
    }
    Ok(out)
}

/// `Σ_{t≥1} MSE(ĥ_t, h_t) + Σ_{t≥1, pilot} MSE(ô_t, o_t)`.
pub fn tracker_loss(
    tape: &Tape,
    output: &TrackerOutput,
    truth: &Matrix,
    obs: &Matrix,
    mask: &[bool],
) -> Result<DiffTensor> {
    let mut terms = Vec::with_capacity(2 * truth.rows());
    for t in 1..truth.rows() {
        terms.push(tape.mse(&output.estimates[t], &row_tensor(truth, t))?);
        if mask[t] {
            terms.push(tape.mse(&output.predicted_obs[t - 1], &row_tensor(obs, t))?);
        }
    }
    sum_scalars(tape, &terms)
}

pub(crate) fn sum_scalars(tape: &Tape, terms: &[DiffTensor]) -> Result<DiffTensor> {
    if terms.is_empty() {
        return Ok(DiffTensor::constant(Matrix::scalar(0.0)));
    }
    let refs: Vec<&DiffTensor> = terms.iter().collect();
    let stacked = tape.concat_rows(&refs)?;
    tape.sum(&stacked)
}

/// Estimates for one sequence without recording gradients.
pub fn track_sequence(weights: &TrackerWeights, obs: &Matrix, mask: &[bool]) -> Result<Matrix> {
    let tape = Tape::new();
    let bound = weights.bind(None);
    Ok(tracker_forward(&tape, &bound, obs, mask, true)?.estimate_matrix())
}

/// Trains a tracker on the dataset's training split.
pub fn train_lstm(
    ds: &ChannelDataset,
    num_layers: usize,
    cfg: &TrainConfig,
) -> Result<(TrackerWeights, LossTrace)> {
    let train: Vec<_> = ds.split(Split::Train).collect();
    if train.is_empty() {
        return Err(Error::Empty("dataset has no training split".into()));
    }
    let mut weights = TrackerWeights::init(ds.num_taps, num_layers, input_scale(ds)?, cfg.seed);
    let trace = train_loop(&mut weights, train.len(), cfg, |tape, bound, ctx| {
        let r = train[ctx.item];
        let out = tracker_forward(tape, bound, &r.observations, &r.mask, true)?;
        tracker_loss(tape, &out, r.truth(), &r.observations, &r.mask)
    })?;
    Ok((weights, trace))
}
