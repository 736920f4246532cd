//! AR(1)/AR(2) Kalman recursion over a stacked state `(h_t, h_{t−1})`.
//!
//! The transition is `F = [[F1, F2], [I, 0]]` and only the top block carries
//! process noise. Observations cover either the current block or both blocks,
//! depending on which symbols carried pilots.
//!
//! Everything is written against the autodiff tape so the same code serves
//! classical filtering (constant leaves, nothing recorded) and end-to-end
//! training of the hypernetwork filter.

use crate::error::{Error, Result};
use crate::tensor::{DiffTensor, Matrix, Tape};

/// Parameters of one filter: `Q = LQ·LQᵀ`, `R = diag(rdiag)`. Dimensions are
/// `d × d` with `d = 2N` for `N` complex taps.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanParams {
    pub f1: Matrix,
    pub f2: Matrix,
    pub lq: Matrix,
    pub rdiag: Vec<f64>,
}

impl KalmanParams {
    pub fn new(f1: Matrix, f2: Matrix, lq: Matrix, rdiag: Vec<f64>) -> Result<Self> {
        let d = f1.rows();
        let square = |m: &Matrix| m.shape() == (d, d);
        if !square(&f1) || !square(&f2) || !square(&lq) || rdiag.len() != d {
            return Err(Error::Dimension(format!(
                "Kalman parameters must all be {d}x{d} with {d} noise variances"
            )));
        }
        if rdiag.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Config(
                "observation noise variances must be positive".into(),
            ));
        }
        Ok(Self { f1, f2, lq, rdiag })
    }

    pub fn dim(&self) -> usize {
        self.f1.rows()
    }

    pub fn q(&self) -> Matrix {
        self.lq.matmul_nt(&self.lq)
    }

    pub fn is_ar1(&self) -> bool {
        self.f2.as_slice().iter().all(|&v| v == 0.0)
    }

    /// The same parameters with every observation noise variance replaced.
    pub fn with_rdiag(&self, rdiag: Vec<f64>) -> Self {
        Self {
            rdiag,
            ..self.clone()
        }
    }

    /// `[F1 F2]`, the top block row of the transition.
    pub fn transition_top(&self) -> Matrix {
        Matrix::hstack(&self.f1, &self.f2)
    }

    pub fn to_diff(&self) -> DiffParams {
        DiffParams {
            top: DiffTensor::constant(self.transition_top()),
            q: DiffTensor::constant(self.q()),
            rdiag: self.rdiag.clone(),
        }
    }
}

/// Stacked mean `(ĥ_t, ĥ_{t−1|t})` and its `2d × 2d` covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanState {
    pub mean: Matrix,
    pub cov: Matrix,
}

impl KalmanState {
    pub fn dim(&self) -> usize {
        self.mean.rows() / 2
    }

    /// Current-block estimate `ĥ_t`.
    pub fn estimate(&self) -> Vec<f64> {
        self.mean.as_slice()[..self.dim()].to_vec()
    }

    pub fn to_diff(&self) -> DiffState {
        DiffState {
            mean: DiffTensor::constant(self.mean.clone()),
            cov: DiffTensor::constant(self.cov.clone()),
        }
    }

    /// Prior used when filtering starts: the earlier-lag block repeats the
    /// current one and `Σ₀ = I · (mean(R) + tr(Q)/d)`.
    pub fn initial(first: &[f64], params: &KalmanParams) -> Self {
        let d = params.dim();
        let mut mean = Vec::with_capacity(2 * d);
        mean.extend_from_slice(first);
        mean.extend_from_slice(first);
        let r_mean = params.rdiag.iter().sum::<f64>() / d as f64;
        let level = r_mean + params.q().trace() / d as f64;
        Self {
            mean: Matrix::column(&mean),
            cov: Matrix::identity(2 * d).scale(level),
        }
    }
}

/// Differentiable filter parameters: `top = [F1 F2]` (`d × 2d`) and `Q` (`d × d`).
#[derive(Clone, Debug)]
pub struct DiffParams {
    pub top: DiffTensor,
    pub q: DiffTensor,
    pub rdiag: Vec<f64>,
}

impl DiffParams {
    pub fn dim(&self) -> usize {
        self.top.rows()
    }
}

#[derive(Clone, Debug)]
pub struct DiffState {
    pub mean: DiffTensor,
    pub cov: DiffTensor,
}

impl DiffState {
    pub fn to_plain(&self) -> KalmanState {
        KalmanState {
            mean: self.mean.value().clone(),
            cov: self.cov.value().clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservationKind {
    None,
    CurrentOnly,
    CurrentAndPrevious,
}

/// Stacked observation `(o_t, o_{t−1})` with unavailable blocks zeroed.
#[derive(Clone, Debug)]
pub struct ObservationEvent {
    pub kind: ObservationKind,
    pub values: Matrix,
    /// Noise variances of the previous block; used only for `CurrentAndPrevious`.
    pub prev_rdiag: Vec<f64>,
}

impl ObservationEvent {
    pub fn current(o: &[f64]) -> Self {
        let mut values = o.to_vec();
        values.extend(std::iter::repeat(0.0).take(o.len()));
        Self {
            kind: ObservationKind::CurrentOnly,
            values: Matrix::column(&values),
            prev_rdiag: Vec::new(),
        }
    }

    pub fn current_and_previous(o: &[f64], o_prev: &[f64], prev_rdiag: &[f64]) -> Self {
        let mut values = o.to_vec();
        values.extend_from_slice(o_prev);
        Self {
            kind: ObservationKind::CurrentAndPrevious,
            values: Matrix::column(&values),
            prev_rdiag: prev_rdiag.to_vec(),
        }
    }
}

fn symmetrize(tape: &Tape, m: &DiffTensor) -> Result<DiffTensor> {
    let mt = tape.transpose(m)?;
    let s = tape.add(m, &mt)?;
    tape.scale(&s, 0.5)
}

/// Time update: `mean ← F·mean`, `Σ ← F·Σ·Fᵀ + Q̃`.
pub fn predict_diff(tape: &Tape, state: &DiffState, params: &DiffParams) -> Result<DiffState> {
    let d = params.dim();
    if state.mean.rows() != 2 * d || state.cov.shape() != (2 * d, 2 * d) {
        return Err(Error::Dimension(format!(
            "state of size {} does not match parameters of dimension {d}",
            state.mean.rows()
        )));
    }
    let top = &params.top;
    let mean_top = tape.matmul(top, &state.mean)?;
    let mean_prev = tape.slice_rows(&state.mean, 0..d)?;
    let mean = tape.concat_rows(&[&mean_top, &mean_prev])?;

    let m = tape.matmul(top, &state.cov)?; // d × 2d
    let top_t = tape.transpose(top)?;
    let tl = tape.matmul(&m, &top_t)?;
    let tl = tape.add(&tl, &params.q)?;
    let tl = symmetrize(tape, &tl)?;
    let tr = tape.slice_cols(&m, 0..d)?;
    let bl = tape.transpose(&tr)?;
    let br = tape.slice_rows(&state.cov, 0..d)?;
    let br = tape.slice_cols(&br, 0..d)?;
    let upper = tape.concat_cols(&[&tl, &tr])?;
    let lower = tape.concat_cols(&[&bl, &br])?;
    let cov = tape.concat_rows(&[&upper, &lower])?;
    Ok(DiffState { mean, cov })
}

/// Measurement update of a predicted state.
///
/// With active rows `a`, `S = Σ_aa + R_a`, `K = Σ_{·a} S⁻¹`,
/// `mean ← mean + K (o_a − mean_a)`, `Σ ← Σ − K Σ_{a·}`, then symmetrized.
pub fn update_diff(
    tape: &Tape,
    predicted: &DiffState,
    params: &DiffParams,
    event: &ObservationEvent,
) -> Result<DiffState> {
    let d = params.dim();
    let k = match event.kind {
        ObservationKind::None => {
            return Err(Error::Usage("update called without an observation".into()))
        }
        ObservationKind::CurrentOnly => d,
        ObservationKind::CurrentAndPrevious => 2 * d,
    };
    if event.values.rows() != 2 * d {
        return Err(Error::Dimension("observation vector size".into()));
    }
    let mut noise = params.rdiag.clone();
    if k == 2 * d {
        if event.prev_rdiag.len() != d {
            return Err(Error::Dimension("previous-block noise variances".into()));
        }
        noise.extend_from_slice(&event.prev_rdiag);
    }

    let p = &predicted.cov;
    let (p_rows, innovation) = if k == 2 * d {
        let obs = DiffTensor::constant(event.values.clone());
        (p.clone(), tape.sub(&obs, &predicted.mean)?)
    } else {
        let obs = DiffTensor::constant(event.values.slice_rows(0, d));
        let mean_a = tape.slice_rows(&predicted.mean, 0..d)?;
        (tape.slice_rows(p, 0..d)?, tape.sub(&obs, &mean_a)?)
    };
    let p_aa = if k == 2 * d {
        p.clone()
    } else {
        tape.slice_cols(&p_rows, 0..d)?
    };
    let s = tape.add(&p_aa, &DiffTensor::constant(Matrix::from_diag(&noise)))?;
    let rhs = tape.concat_cols(&[&innovation, &p_rows])?;
    let x = tape.solve(&s, &rhs)?;
    let w = tape.slice_cols(&x, 0..1)?;
    let z = tape.slice_cols(&x, 1..1 + 2 * d)?;
    let p_rows_t = tape.transpose(&p_rows)?;
    let correction = tape.matmul(&p_rows_t, &w)?;
    let mean = tape.add(&predicted.mean, &correction)?;
    let reduction = tape.matmul(&p_rows_t, &z)?;
    let cov = tape.sub(p, &reduction)?;
    let cov = symmetrize(tape, &cov)?;
    Ok(DiffState { mean, cov })
}

/// Predict, then update when an observation is present.
pub fn step_diff(
    tape: &Tape,
    state: &DiffState,
    params: &DiffParams,
    event: &ObservationEvent,
) -> Result<DiffState> {
    let predicted = predict_diff(tape, state, params)?;
    match event.kind {
        ObservationKind::None => Ok(predicted),
        _ => update_diff(tape, &predicted, params, event),
    }
}

pub fn predict(state: &KalmanState, params: &KalmanParams) -> Result<KalmanState> {
    let tape = Tape::new();
    Ok(predict_diff(&tape, &state.to_diff(), &params.to_diff())?.to_plain())
}

pub fn update(
    predicted: &KalmanState,
    params: &KalmanParams,
    event: &ObservationEvent,
) -> Result<KalmanState> {
    let tape = Tape::new();
    Ok(update_diff(&tape, &predicted.to_diff(), &params.to_diff(), event)?.to_plain())
}

/// Observation event at step `t ≥ 1` given the pilot mask.
pub fn event_at(obs: &Matrix, mask: &[bool], t: usize, prev_rdiag: &[f64]) -> ObservationEvent {
    let d = obs.cols();
    if !mask[t] {
        return ObservationEvent {
            kind: ObservationKind::None,
            values: Matrix::zeros(2 * d, 1),
            prev_rdiag: Vec::new(),
        };
    }
    if t >= 1 && mask[t - 1] {
        ObservationEvent::current_and_previous(obs.row(t), obs.row(t - 1), prev_rdiag)
    } else {
        ObservationEvent::current(obs.row(t))
    }
}

/// Static parameters or one parameter set per symbol.
#[derive(Clone, Copy, Debug)]
pub enum Schedule<'a> {
    Static(&'a KalmanParams),
    PerStep(&'a [KalmanParams]),
}

impl<'a> Schedule<'a> {
    fn at(&self, t: usize) -> &'a KalmanParams {
        match self {
            Schedule::Static(p) => p,
            Schedule::PerStep(ps) => &ps[t],
        }
    }
}

/// Causal filtering of one sequence; returns `T × d` estimates.
///
/// Step 0 emits the initial mean (first pilot observation, or zeros when symbol
/// 0 carries no pilot). Each later step predicts and, at pilots, updates.
pub fn run_filter(
    obs: &Matrix,
    mask: &[bool],
    schedule: Schedule<'_>,
    init: Option<KalmanState>,
) -> Result<Matrix> {
    let len = obs.rows();
    let d = obs.cols();
    if mask.len() != len {
        return Err(Error::Dimension(
            "mask length differs from sequence length".into(),
        ));
    }
    if let Schedule::PerStep(ps) = schedule {
        if ps.len() != len {
            return Err(Error::Dimension(format!(
                "schedule has {} entries for {len} steps",
                ps.len()
            )));
        }
    }
    let first = schedule.at(0);
    if first.dim() != d {
        return Err(Error::Dimension(
            "parameter dimension differs from data".into(),
        ));
    }
    let state = init.unwrap_or_else(|| {
        let start = if mask[0] {
            obs.row(0).to_vec()
        } else {
            vec![0.0; d]
        };
        KalmanState::initial(&start, first)
    });
    let tape = Tape::new();
    let mut out = Matrix::zeros(len, d);
    out.row_mut(0).copy_from_slice(&state.mean.as_slice()[..d]);
    let mut diff = state.to_diff();
    for t in 1..len {
        let params = schedule.at(t);
        let event = event_at(obs, mask, t, &schedule.at(t - 1).rdiag);
        diff = step_diff(&tape, &diff, &params.to_diff(), &event)?;
        out.row_mut(t)
            .copy_from_slice(&diff.mean.value().as_slice()[..d]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(a: f64, b: f64, q: f64, r: f64) -> KalmanParams {
        KalmanParams::new(
            Matrix::scalar(a),
            Matrix::scalar(b),
            Matrix::scalar(q.sqrt()),
            vec![r],
        )
        .unwrap()
    }

    fn scalar_state(x: f64, x_prev: f64, p: [[f64; 2]; 2]) -> KalmanState {
        KalmanState {
            mean: Matrix::column(&[x, x_prev]),
            cov: Matrix::from_rows(&[&p[0], &p[1]]).unwrap(),
        }
    }

    #[test]
    fn identity_dynamics_hold_the_estimate() {
        let d = 3;
        let params = KalmanParams::new(
            Matrix::identity(d),
            Matrix::zeros(d, d),
            Matrix::zeros(d, d),
            vec![0.1; d],
        )
        .unwrap();
        let state = KalmanState {
            mean: Matrix::column(&[1.0, 2.0, 3.0, 0.0, 0.0, 0.0]),
            cov: Matrix::identity(2 * d),
        };
        let next = predict(&state, &params).unwrap();
        assert_eq!(&next.mean.as_slice()[..d], &[1.0, 2.0, 3.0]);
        assert_eq!(&next.mean.as_slice()[d..], &[1.0, 2.0, 3.0]);
        // Q = 0 with F1 = I leaves the top-left block unchanged.
        for i in 0..d {
            for j in 0..d {
                assert_eq!(next.cov.get(i, j), state.cov.get(i, j));
            }
        }
    }

    #[test]
    fn scalar_ar1_predict_matches_closed_form() {
        let (a, q) = (0.9, 0.1);
        let p = scalar_params(a, 0.0, q, 0.2);
        let s = scalar_state(0.5, 0.0, [[2.0, 0.0], [0.0, 7.0]]);
        let n = predict(&s, &p).unwrap();
        assert!((n.cov.get(0, 0) - (a * a * 2.0 + q)).abs() < 1e-15);
        assert!((n.mean.get(0, 0) - a * 0.5).abs() < 1e-15);
    }

    #[test]
    fn scalar_update_matches_hand_computation() {
        // x̂ = 0, σ² = 1, a = 0.9, q = 0.1, r = 0.2, o = 1.0
        let p = scalar_params(0.9, 0.0, 0.1, 0.2);
        let s = scalar_state(0.0, 0.0, [[1.0, 0.0], [0.0, 1.0]]);
        let pred = predict(&s, &p).unwrap();
        let up = update(&pred, &p, &ObservationEvent::current(&[1.0])).unwrap();
        let prior = 0.81 + 0.1;
        let gain = prior / (prior + 0.2);
        assert!((up.mean.get(0, 0) - gain).abs() < 1e-12);
        assert!((up.cov.get(0, 0) - (1.0 - gain) * prior).abs() < 1e-12);
    }

    #[test]
    fn noise_limits() {
        let d = 2;
        let base = KalmanParams::new(
            Matrix::identity(d).scale(0.95),
            Matrix::zeros(d, d),
            Matrix::identity(d).scale(0.1),
            vec![1e12; d],
        )
        .unwrap();
        let s = KalmanState {
            mean: Matrix::column(&[0.3, -0.2, 0.1, 0.0]),
            cov: Matrix::identity(2 * d),
        };
        let pred = predict(&s, &base).unwrap();
        let ev = ObservationEvent::current(&[1.0, 2.0]);
        let up = update(&pred, &base, &ev).unwrap();
        for (u, p) in up.mean.as_slice().iter().zip(pred.mean.as_slice()) {
            assert!((u - p).abs() < 1e-9);
        }

        let sharp = base.with_rdiag(vec![1e-12; d]);
        let up = update(&pred, &sharp, &ev).unwrap();
        assert!((up.mean.get(0, 0) - 1.0).abs() < 1e-6);
        assert!((up.mean.get(1, 0) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn update_without_observation_is_an_error() {
        let p = scalar_params(1.0, 0.0, 0.1, 0.1);
        let s = scalar_state(0.0, 0.0, [[1.0, 0.0], [0.0, 1.0]]);
        let ev = ObservationEvent {
            kind: ObservationKind::None,
            values: Matrix::zeros(2, 1),
            prev_rdiag: vec![],
        };
        assert!(update(&s, &p, &ev).is_err());
    }

    #[test]
    fn no_observations_repeat_the_transition() {
        let p = scalar_params(0.8, 0.15, 0.01, 0.1);
        let obs = Matrix::from_vec(6, 1, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let mask = [true, false, false, false, false, false];
        let est = run_filter(&obs, &mask, Schedule::Static(&p), None).unwrap();
        let (mut x, mut x_prev) = (1.0, 1.0);
        for t in 1..6 {
            let nx = 0.8 * x + 0.15 * x_prev;
            x_prev = x;
            x = nx;
            assert!((est.get(t, 0) - x).abs() < 1e-14);
        }
    }
}
