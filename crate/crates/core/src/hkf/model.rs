//! Kalman filter whose transition and process noise are corrected at every
//! symbol by residuals emitted from an LSTM hypernetwork.

use crate::channel::noise_variance_per_component;
use crate::error::{Error, Result};
use crate::kalman::{
    event_at, step_diff, DiffParams, DiffState, KalmanParams, KalmanState, ParamBank,
};
use crate::lstm::{stack_step, Affine, BoundAffine, BoundLstmLayer, LstmLayer, LstmState};
use crate::rng::{SeededRng, STREAM_SAMPLER};
use crate::tensor::{DiffTensor, Matrix, Tape};
use crate::train::Trainable;

/// Jitter ladder tried when the averaged process covariance is not numerically PD.
const BASE_JITTERS: [f64; 5] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6];

/// Fixed base filter: `F1 = I`, `F2 = 0`, `Q = LQ·LQᵀ`, `R = diag(rdiag)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HkfBase {
    pub lq: Matrix,
    pub rdiag: Vec<f64>,
}

impl HkfBase {
    pub fn dim(&self) -> usize {
        self.lq.rows()
    }

    pub fn params(&self) -> KalmanParams {
        let d = self.dim();
        KalmanParams {
            f1: Matrix::identity(d),
            f2: Matrix::zeros(d, d),
            lq: self.lq.clone(),
            rdiag: self.rdiag.clone(),
        }
    }

    /// The same base with observation noise matching `snr_db`.
    pub fn at_snr(&self, snr_db: f64) -> Self {
        Self {
            lq: self.lq.clone(),
            rdiag: rdiag_for(snr_db, self.dim() / 2),
        }
    }
}

/// Per-component noise variances at `snr_db`, floored so the filter stays proper.
pub fn rdiag_for(snr_db: f64, num_taps: usize) -> Vec<f64> {
    vec![noise_variance_per_component(snr_db, num_taps).max(1e-12); 2 * num_taps]
}

/// Base filter from fitted per-group parameters: `LQ` is the Cholesky factor
/// of the mean fitted `Q`.
pub fn init_base(fitted: &ParamBank, snr_db: f64) -> Result<HkfBase> {
    let q = fitted.mean_q()?;
    let mut last = None;
    for &jitter in &BASE_JITTERS {
        match q.cholesky(jitter) {
            Ok(lq) => {
                if jitter > 0.0 {
                    log::warn!("mean process covariance needed jitter {jitter:e}");
                }
                return Ok(HkfBase {
                    lq,
                    rdiag: rdiag_for(snr_db, fitted.num_taps),
                });
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Length of the residual vector for state dimension `d`.
pub fn residual_len(d: usize) -> usize {
    2 * d * d + d * (d + 1) / 2
}

/// `θ = base + Δ`: `F1 = I + ΔF1`, `F2 = ΔF2`, `Q = (LQ + ΔL)(LQ + ΔL)ᵀ`.
///
/// `delta` is a column laid out as `ΔF1` row-major, `ΔF2` row-major, then the
/// packed lower triangle of `ΔL` row by row.
pub fn apply_residual(
    tape: &Tape,
    base: &HkfBase,
    delta: &DiffTensor,
    rdiag: &[f64],
) -> Result<DiffParams> {
    let d = base.dim();
    if delta.shape() != (residual_len(d), 1) {
        return Err(Error::Dimension(format!(
            "residual has shape {:?}, expected ({}, 1)",
            delta.shape(),
            residual_len(d)
        )));
    }
    let df1 = tape.reshape(&tape.slice_rows(delta, 0..d * d)?, d, d)?;
    let df2 = tape.reshape(&tape.slice_rows(delta, d * d..2 * d * d)?, d, d)?;
    let dl = tape.unpack_lower(&tape.slice_rows(delta, 2 * d * d..residual_len(d))?, d)?;
    let dtop = tape.concat_cols(&[&df1, &df2])?;
    let base_top = Matrix::hstack(&Matrix::identity(d), &Matrix::zeros(d, d));
    let top = tape.add(&DiffTensor::constant(base_top), &dtop)?;
    let l = tape.add(&DiffTensor::constant(base.lq.clone()), &dl)?;
    let q = tape.matmul(&l, &tape.transpose(&l)?)?;
    Ok(DiffParams {
        top,
        q,
        rdiag: rdiag.to_vec(),
    })
}

/// Plain-matrix form of [`apply_residual`].
pub fn residual_params(base: &HkfBase, delta: &Matrix) -> Result<KalmanParams> {
    let tape = Tape::new();
    let p = apply_residual(
        &tape,
        base,
        &DiffTensor::constant(delta.clone()),
        &base.rdiag,
    )?;
    let d = base.dim();
    let top = p.top.value();
    let dl = tape.unpack_lower(
        &DiffTensor::constant(delta.slice_rows(2 * d * d, residual_len(d))),
        d,
    )?;
    Ok(KalmanParams {
        f1: top.slice_cols(0, d),
        f2: top.slice_cols(d, 2 * d),
        lq: base.lq.add(dl.value()),
        rdiag: base.rdiag.clone(),
    })
}

/// Reparameterized draw `õ = ĥ + √R ⊙ ε`; gradients reach `ĥ` only.
pub fn synth_obs(
    tape: &Tape,
    estimate: &DiffTensor,
    rdiag: &[f64],
    eps: &[f64],
) -> Result<DiffTensor> {
    if eps.len() != estimate.rows() || rdiag.len() != eps.len() {
        return Err(Error::Dimension("sampler noise size".into()));
    }
    let noise: Vec<f64> = rdiag.iter().zip(eps).map(|(r, e)| r.sqrt() * e).collect();
    tape.add(estimate, &DiffTensor::constant(Matrix::column(&noise)))
}

/// Standard-normal sampler draws used when evaluating an instance, `T × d`.
pub fn sampler_draws(seed: u64, len: usize, d: usize) -> Matrix {
    let mut rng = SeededRng::with_stream(seed, STREAM_SAMPLER);
    Matrix::from_vec(len, d, rng.normals(len * d)).expect("shape matches")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HkfVariant {
    /// One hypernetwork layer, fixed training condition.
    One,
    /// Two stacked hypernetwork layers, fixed training condition.
    Two,
    /// Two stacked layers trained over randomized SNR and pilot spacing.
    General,
}

impl HkfVariant {
    pub fn code(self) -> u8 {
        match self {
            HkfVariant::One => 1,
            HkfVariant::Two => 2,
            HkfVariant::General => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(HkfVariant::One),
            2 => Ok(HkfVariant::Two),
            3 => Ok(HkfVariant::General),
            other => Err(Error::Format(format!("unknown filter variant {other}"))),
        }
    }

    pub fn num_layers(self) -> usize {
        match self {
            HkfVariant::One => 1,
            HkfVariant::Two | HkfVariant::General => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HkfVariant::One => "hkf1",
            HkfVariant::Two => "hkf2",
            HkfVariant::General => "hkfg",
        }
    }
}

impl std::str::FromStr for HkfVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hkf1" => Ok(HkfVariant::One),
            "hkf2" => Ok(HkfVariant::Two),
            "hkfg" => Ok(HkfVariant::General),
            other => Err(Error::Config(format!("unknown filter variant {other:?}"))),
        }
    }
}

/// Hypernetwork weights plus the base filter they correct.
#[derive(Clone, Debug, PartialEq)]
pub struct HkfModel {
    pub variant: HkfVariant,
    pub base: HkfBase,
    pub layers: Vec<LstmLayer>,
    /// Hidden → residual vector; zero at initialization.
    pub head: Affine,
    pub input_scale: f64,
}

impl HkfModel {
    /// Hidden size `2N`, input `õ_t` of size `2N`.
    pub fn init(variant: HkfVariant, base: HkfBase, input_scale: f64, seed: u64) -> Self {
        let d = base.dim();
        let mut rng = SeededRng::new(seed);
        let layers = (0..variant.num_layers())
            .map(|_| LstmLayer::init(d, d, &mut rng))
            .collect();
        Self {
            variant,
            head: Affine::zeros(d, residual_len(d)),
            base,
            layers,
            input_scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
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
pub struct BoundHkf {
    pub layers: Vec<BoundLstmLayer>,
    pub head: BoundAffine,
    pub input_scale: f64,
}

impl Trainable for HkfModel {
    type Bound = BoundHkf;

    fn bind(&self, tape: Option<&Tape>) -> BoundHkf {
        BoundHkf {
            layers: self.layers.iter().map(|l| l.bind(tape)).collect(),
            head: self.head.bind(tape),
            input_scale: self.input_scale,
        }
    }

    fn leaves(bound: &BoundHkf) -> Vec<&DiffTensor> {
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

/// Recurrent state carried between symbols.
#[derive(Clone, Debug)]
pub struct HkfState {
    pub filter: DiffState,
    pub lstm: Vec<LstmState>,
}

/// Per-symbol trajectory of one forward pass.
#[derive(Clone, Debug)]
pub struct HkfOutput {
    /// `ĥ_t` for `t = 0..T`.
    pub estimates: Vec<DiffTensor>,
    /// Observation (real or sampled) fed to the hypernetwork at each step.
    pub fed_obs: Vec<DiffTensor>,
}

impl HkfOutput {
    pub fn estimate_matrix(&self) -> Matrix {
        crate::lstm::stack_rows(&self.estimates)
    }
}

/// One symbol `t ≥ 1`: filter under `θ_t = base + head(z_{t−1})`, form `õ_t`
/// and advance the hypernetwork on it.
///
/// Returns the new state and `õ_t`. With `advance = false` the hypernetwork
/// is not stepped (used on the final symbol, whose output would be unused).
#[allow(clippy::too_many_arguments)]
pub fn hkf_step(
    tape: &Tape,
    model: &BoundHkf,
    base: &HkfBase,
    state: &HkfState,
    obs: &Matrix,
    mask: &[bool],
    t: usize,
    rdiag: &[f64],
    eps: &[f64],
    advance: bool,
) -> Result<(HkfState, DiffTensor)> {
    let d = base.dim();
    let z = &state.lstm.last().expect("at least one layer").z;
    let delta = model.head.apply(tape, z)?;
    let params = apply_residual(tape, base, &delta, rdiag)?;
    let event = event_at(obs, mask, t, rdiag);
    let filter = step_diff(tape, &state.filter, &params, &event)?;
    let estimate = tape.slice_rows(&filter.mean, 0..d)?;
    let fed = if mask[t] {
        DiffTensor::constant(Matrix::column(obs.row(t)))
    } else {
        synth_obs(tape, &estimate, rdiag, eps)?
    };
    let lstm = if advance {
        let x = tape.scale(&fed, model.input_scale)?;
        stack_step(tape, &model.layers, &state.lstm, &x)?
    } else {
        state.lstm.clone()
    };
    Ok((HkfState { filter, lstm }, fed))
}

/// Unrolls the filter over a sequence. `eps` holds one standard-normal row per
/// symbol for the sampler; `rdiag` is the observation noise of this sequence.
pub fn hkf_forward(
    tape: &Tape,
    model: &BoundHkf,
    base: &HkfBase,
    obs: &Matrix,
    mask: &[bool],
    rdiag: &[f64],
    eps: &Matrix,
) -> Result<HkfOutput> {
    let len = obs.rows();
    let d = base.dim();
    if len == 0 || mask.len() != len || obs.cols() != d {
        return Err(Error::Dimension(format!(
            "sequence {:?} with {} mask entries for a {d}-dimensional filter",
            obs.shape(),
            mask.len()
        )));
    }
    if eps.shape() != (len, d) || rdiag.len() != d {
        return Err(Error::Dimension("sampler draws or noise variances".into()));
    }
    let start = if mask[0] {
        obs.row(0).to_vec()
    } else {
        vec![0.0; d]
    };
    let base_params = KalmanParams {
        rdiag: rdiag.to_vec(),
        ..base.params()
    };
    let filter = KalmanState::initial(&start, &base_params).to_diff();
    let first = tape.slice_rows(&filter.mean, 0..d)?;
    let fed0 = if mask[0] {
        DiffTensor::constant(Matrix::column(obs.row(0)))
    } else {
        synth_obs(tape, &first, rdiag, eps.row(0))?
    };
    let hidden = model.layers[0].hidden();
    let zeros: Vec<LstmState> = model
        .layers
        .iter()
        .map(|_| LstmState::zeros(hidden))
        .collect();
    let x = tape.scale(&fed0, model.input_scale)?;
    let lstm = stack_step(tape, &model.layers, &zeros, &x)?;
    let mut state = HkfState { filter, lstm };
    let mut out = HkfOutput {
        estimates: Vec::with_capacity(len),
        fed_obs: Vec::with_capacity(len),
    };
    out.estimates.push(first);
    out.fed_obs.push(fed0);
    for t in 1..len {
        let (next, fed) = hkf_step(
            tape,
            model,
            base,
            &state,
            obs,
            mask,
            t,
            rdiag,
            eps.row(t),
            t + 1 < len,
        )?;
        out.estimates
            .push(tape.slice_rows(&next.filter.mean, 0..d)?);
        out.fed_obs.push(fed);
        state = next;
    }
    Ok(out)
}

/// `Σ_{t≥1} MSE(ĥ_t, h_t)`.
pub fn hkf_loss(tape: &Tape, output: &HkfOutput, truth: &Matrix) -> Result<DiffTensor> {
    let terms = (1..truth.rows())
        .map(|t| {
            tape.mse(
                &output.estimates[t],
                &DiffTensor::constant(Matrix::column(truth.row(t))),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    crate::lstm::sum_scalars(tape, &terms)
}

/// Estimates for one sequence without recording gradients.
pub fn filter_sequence(
    model: &HkfModel,
    obs: &Matrix,
    mask: &[bool],
    rdiag: &[f64],
    eps: &Matrix,
) -> Result<Matrix> {
    let tape = Tape::new();
    let bound = model.bind(None);
    Ok(hkf_forward(&tape, &bound, &model.base, obs, mask, rdiag, eps)?.estimate_matrix())
}
