//! LSTM layers and affine heads on the autodiff tape.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{DiffTensor, Matrix, Tape};

/// One LSTM layer. Gate rows are stacked `[input, forget, cell, output]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    /// `4h × in`
    pub w_ih: Matrix,
    /// `4h × h`
    pub w_hh: Matrix,
    /// `4h × 1`
    pub bias: Matrix,
}

impl LstmLayer {
    /// Uniform(−1/√h, 1/√h) weights and biases, forget-gate bias 1.
    pub fn init(input: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut uniform = |r: usize, c: usize| {
            let data = (0..r * c)
                .map(|_| rng.uniform_range(-bound, bound))
                .collect();
            Matrix::from_vec(r, c, data).expect("positive shape")
        };
        let w_ih = uniform(4 * hidden, input);
        let w_hh = uniform(4 * hidden, hidden);
        let mut bias = uniform(4 * hidden, 1);
        for i in hidden..2 * hidden {
            bias.set(i, 0, 1.0);
        }
        Self { w_ih, w_hh, bias }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Matrix::zeros(4 * hidden, input),
            w_hh: Matrix::zeros(4 * hidden, hidden),
            bias: Matrix::zeros(4 * hidden, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.cols()
    }

    pub fn input(&self) -> usize {
        self.w_ih.cols()
    }

    pub fn bind(&self, tape: Option<&Tape>) -> BoundLstmLayer {
        BoundLstmLayer {
            w_ih: bind(tape, &self.w_ih),
            w_hh: bind(tape, &self.w_hh),
            bias: bind(tape, &self.bias),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w_ih, &mut self.w_hh, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Matrix> {
        vec![&self.w_ih, &self.w_hh, &self.bias]
    }
}

pub(crate) fn bind(tape: Option<&Tape>, m: &Matrix) -> DiffTensor {
    match tape {
        Some(t) => t.param(m.clone()),
        None => DiffTensor::constant(m.clone()),
    }
}

#[derive(Clone, Debug)]
pub struct BoundLstmLayer {
    pub w_ih: DiffTensor,
    pub w_hh: DiffTensor,
    pub bias: DiffTensor,
}

impl BoundLstmLayer {
    pub fn leaves(&self) -> [&DiffTensor; 3] {
        [&self.w_ih, &self.w_hh, &self.bias]
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.cols()
    }
}

/// Recurrent state `(z, c)` of one layer.
#[derive(Clone, Debug)]
pub struct LstmState {
    pub z: DiffTensor,
    pub c: DiffTensor,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            z: DiffTensor::constant(Matrix::zeros(hidden, 1)),
            c: DiffTensor::constant(Matrix::zeros(hidden, 1)),
        }
    }
}

/// `c = f⊙c_prev + i⊙g`, `z = o⊙tanh(c)` with `i, f, o` sigmoid gates and `g` a tanh gate.
pub fn lstm_step(
    tape: &Tape,
    layer: &BoundLstmLayer,
    prev: &LstmState,
    x: &DiffTensor,
) -> Result<LstmState> {
    let h = layer.hidden();
    if x.shape() != (layer.w_ih.cols(), 1) || prev.z.shape() != (h, 1) || prev.c.shape() != (h, 1) {
        return Err(Error::Dimension(format!(
            "lstm_step: input {:?}, state {:?} for layer {}→{h}",
            x.shape(),
            prev.z.shape(),
            layer.w_ih.cols()
        )));
    }
    let a = tape.matmul(&layer.w_ih, x)?;
    let b = tape.matmul(&layer.w_hh, &prev.z)?;
    let pre = tape.add(&a, &b)?;
    let pre = tape.add(&pre, &layer.bias)?;
    let i = tape.sigmoid(&tape.slice_rows(&pre, 0..h)?)?;
    let f = tape.sigmoid(&tape.slice_rows(&pre, h..2 * h)?)?;
    let g = tape.tanh(&tape.slice_rows(&pre, 2 * h..3 * h)?)?;
    let o = tape.sigmoid(&tape.slice_rows(&pre, 3 * h..4 * h)?)?;
    let keep = tape.hadamard(&f, &prev.c)?;
    let write = tape.hadamard(&i, &g)?;
    let c = tape.add(&keep, &write)?;
    let z = tape.hadamard(&o, &tape.tanh(&c)?)?;
    Ok(LstmState { z, c })
}

/// Runs a stack of layers for one time step; returns the new states.
pub fn stack_step(
    tape: &Tape,
    layers: &[BoundLstmLayer],
    prev: &[LstmState],
    x: &DiffTensor,
) -> Result<Vec<LstmState>> {
    let mut out = Vec::with_capacity(layers.len());
    let mut input = x.clone();
    for (layer, state) in layers.iter().zip(prev) {
        let next = lstm_step(tape, layer, state, &input)?;
        input = next.z.clone();
        out.push(next);
    }
    Ok(out)
}

/// Zero-hidden-layer head `y = W z + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Affine {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: Matrix::zeros(output, 1),
        }
    }

    pub fn init(input: usize, output: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let w = (0..input * output)
            .map(|_| rng.uniform_range(-bound, bound))
            .collect();
        let b = (0..output)
            .map(|_| rng.uniform_range(-bound, bound))
            .collect();
        Self {
            weight: Matrix::from_vec(output, input, w).expect("positive shape"),
            bias: Matrix::from_vec(output, 1, b).expect("positive shape"),
        }
    }

    pub fn output(&self) -> usize {
        self.weight.rows()
    }

    pub fn bind(&self, tape: Option<&Tape>) -> BoundAffine {
        BoundAffine {
            weight: bind(tape, &self.weight),
            bias: bind(tape, &self.bias),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Matrix> {
        vec![&self.weight, &self.bias]
    }
}

#[derive(Clone, Debug)]
pub struct BoundAffine {
    pub weight: DiffTensor,
    pub bias: DiffTensor,
}

impl BoundAffine {
    pub fn apply(&self, tape: &Tape, z: &DiffTensor) -> Result<DiffTensor> {
        let y = tape.matmul(&self.weight, z)?;
        tape.add(&y, &self.bias)
    }

    pub fn leaves(&self) -> [&DiffTensor; 2] {
        [&self.weight, &self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_zero_state() {
        let tape = Tape::new();
        let layer = LstmLayer::zeros(3, 4).bind(None);
        let x = DiffTensor::constant(Matrix::column(&[1.0, -5.0, 2.0]));
        let s = lstm_step(&tape, &layer, &LstmState::zeros(4), &x).unwrap();
        assert!(s.z.value().as_slice().iter().all(|&v| v == 0.0));
        assert!(s.c.value().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_remembers() {
        let tape = Tape::new();
        let mut layer = LstmLayer::zeros(2, 3);
        for i in 3..6 {
            layer.bias.set(i, 0, 40.0);
        }
        let prev = LstmState {
            z: DiffTensor::constant(Matrix::zeros(3, 1)),
            c: DiffTensor::constant(Matrix::column(&[0.7, -1.2, 3.0])),
        };
        let x = DiffTensor::constant(Matrix::column(&[0.4, 0.9]));
        let s = lstm_step(&tape, &layer.bind(None), &prev, &x).unwrap();
        for (a, b) in s.c.value().as_slice().iter().zip(&[0.7, -1.2, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let mut rng = SeededRng::new(1);
        let layer = LstmLayer::init(5, 4, &mut rng);
        for i in 0..16 {
            let b = layer.bias.get(i, 0);
            if (4..8).contains(&i) {
                assert_eq!(b, 1.0);
            } else {
                assert!(b.abs() <= 0.5);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let tape = Tape::new();
        let layer = LstmLayer::zeros(3, 4).bind(None);
        let x = DiffTensor::constant(Matrix::column(&[1.0, 2.0]));
        assert!(lstm_step(&tape, &layer, &LstmState::zeros(4), &x).is_err());
    }
}
