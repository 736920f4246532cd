//! Central finite-difference checks of reverse-mode gradients.
//!
//! A coordinate passes when `|analytic − numeric| ≤ rel_tol · max(|analytic|, |numeric|)`
//! or the absolute difference is below [`ABS_FLOOR`], which absorbs
//! round-off on coordinates whose true gradient is essentially zero.

use crate::error::{Error, Result};
use crate::tensor::{DiffTensor, Matrix, Tape};
use crate::train::Trainable;

/// Absolute difference always accepted.
pub const ABS_FLOOR: f64 = 1e-8;
/// Gradient magnitude above which a coordinate counts as significant.
pub const SIGNIFICANT: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub passed: usize,
    /// Coordinates whose gradient magnitude exceeds [`SIGNIFICANT`].
    pub significant: usize,
    /// Largest relative error seen, `|a − n| / max(|a|, |n|, ABS_FLOOR)`.
    pub worst: f64,
}

impl GradCheck {
    pub fn pass_rate(&self) -> f64 {
        if self.checked == 0 {
            return 1.0;
        }
        self.passed as f64 / self.checked as f64
    }

    pub fn merge(&mut self, other: &GradCheck) {
        self.checked += other.checked;
        self.passed += other.passed;
        self.significant += other.significant;
        self.worst = self.worst.max(other.worst);
    }

    fn record(&mut self, analytic: f64, numeric: f64, rel_tol: f64) {
        let diff = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs());
        self.checked += 1;
        if scale > SIGNIFICANT {
            self.significant += 1;
        }
        if diff <= rel_tol * scale || diff <= ABS_FLOOR {
            self.passed += 1;
        }
        self.worst = self.worst.max(diff / scale.max(ABS_FLOOR));
    }
}

/// Coordinate `(input, flat index)`.
pub type Coord = (usize, usize);

/// Every coordinate of every input.
pub fn all_coords(shapes: &[(usize, usize)]) -> Vec<Coord> {
    shapes
        .iter()
        .enumerate()
        .flat_map(|(i, &(r, c))| (0..r * c).map(move |k| (i, k)))
        .collect()
}

fn scalar_of(t: &DiffTensor) -> Result<f64> {
    if t.shape() != (1, 1) {
        return Err(Error::Dimension(format!(
            "gradient check needs a scalar loss, got {:?}",
            t.shape()
        )));
    }
    Ok(t.value().item())
}

/// Checks `f(inputs)` with the inputs as tape leaves.
pub fn check_function<F>(
    inputs: &[Matrix],
    coords: &[Coord],
    step: f64,
    rel_tol: f64,
    f: F,
) -> Result<GradCheck>
where
    F: Fn(&Tape, &[DiffTensor]) -> Result<DiffTensor>,
{
    let tape = Tape::new();
    let leaves: Vec<DiffTensor> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let loss = f(&tape, &leaves)?;
    scalar_of(&loss)?;
    let grads = tape.backward(&loss)?;
    let analytic: Vec<Matrix> = leaves.iter().map(|l| grads.get(l).expect("leaf")).collect();
    let eval = |perturbed: &[Matrix]| -> Result<f64> {
        let t = Tape::new();
        let consts: Vec<DiffTensor> = perturbed
            .iter()
            .cloned()
            .map(DiffTensor::constant)
            .collect();
        scalar_of(&f(&t, &consts)?)
    };
    let mut report = GradCheck::default();
    let mut work = inputs.to_vec();
    for &(i, k) in coords {
        let orig = work[i].as_slice()[k];
        work[i].as_mut_slice()[k] = orig + step;
        let up = eval(&work)?;
        work[i].as_mut_slice()[k] = orig - step;
        let down = eval(&work)?;
        work[i].as_mut_slice()[k] = orig;
        report.record(
            analytic[i].as_slice()[k],
            (up - down) / (2.0 * step),
            rel_tol,
        );
    }
    Ok(report)
}

/// Checks a loss with respect to a model's parameters, in
/// [`Trainable::params_mut`] order.
pub fn check_model<M, F>(
    model: &M,
    coords: &[Coord],
    step: f64,
    rel_tol: f64,
    loss: F,
) -> Result<GradCheck>
where
    M: Trainable + Clone,
    F: Fn(&Tape, &M::Bound) -> Result<DiffTensor>,
{
    let tape = Tape::new();
    let bound = model.bind(Some(&tape));
    let value = loss(&tape, &bound)?;
    scalar_of(&value)?;
    let grads = tape.backward(&value)?;
    let analytic: Vec<Matrix> = M::leaves(&bound)
        .into_iter()
        .map(|l| grads.get(l).expect("leaf"))
        .collect();
    let eval = |m: &M| -> Result<f64> {
        let t = Tape::new();
        scalar_of(&loss(&t, &m.bind(None))?)
    };
    let mut report = GradCheck::default();
    let mut work = model.clone();
    for &(i, k) in coords {
        let orig = work.params_mut()[i].as_slice()[k];
        work.params_mut()[i].as_mut_slice()[k] = orig + step;
        let up = eval(&work)?;
        work.params_mut()[i].as_mut_slice()[k] = orig - step;
        let down = eval(&work)?;
        work.params_mut()[i].as_mut_slice()[k] = orig;
        report.record(
            analytic[i].as_slice()[k],
            (up - down) / (2.0 * step),
            rel_tol,
        );
    }
    Ok(report)
}
