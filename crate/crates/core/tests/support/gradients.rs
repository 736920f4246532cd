//! Finite-difference gradient suites over the tape operations, an unrolled
//! LSTM, the tracker loss and the hypernetwork filter loss.

use hkf_core::gradcheck::{all_coords, check_function, check_model, Coord, GradCheck};
use hkf_core::hkf::{hkf_forward, hkf_loss, HkfBase, HkfModel, HkfVariant};
use hkf_core::lstm::{
    lstm_step, tracker_forward, tracker_loss, LstmLayer, LstmState, TrackerWeights,
};
use hkf_core::rng::SeededRng;
use hkf_core::tensor::{DiffTensor, Matrix, Tape};
use hkf_core::Result;

pub const OP_STEP: f64 = 1e-5;
pub const OP_TOL: f64 = 1e-4;
pub const MODEL_STEP: f64 = 1e-6;
pub const MODEL_TOL: f64 = 1e-3;

pub fn uniform(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let v = (0..rows * cols)
        .map(|_| rng.uniform_range(-1.0, 1.0))
        .collect();
    Matrix::from_vec(rows, cols, v).unwrap()
}

/// `Σ w ⊙ y`, so every output entry gets a distinct adjoint.
fn weighted_sum(tape: &Tape, y: &DiffTensor, w: &Matrix) -> Result<DiffTensor> {
    let prod = tape.hadamard(y, &DiffTensor::constant(w.clone()))?;
    tape.sum(&prod)
}

type OpFn = fn(&Tape, &[DiffTensor]) -> Result<DiffTensor>;

/// `(name, input shapes, op)` for every tape operation.
pub fn op_cases() -> Vec<(&'static str, Vec<(usize, usize)>, OpFn)> {
    vec![
        ("matmul", vec![(3, 3), (3, 2)], |t, v| {
            t.matmul(&v[0], &v[1])
        }),
        ("add", vec![(3, 2), (3, 2)], |t, v| t.add(&v[0], &v[1])),
        ("sub", vec![(3, 2), (3, 2)], |t, v| t.sub(&v[0], &v[1])),
        ("hadamard", vec![(3, 2), (3, 2)], |t, v| {
            t.hadamard(&v[0], &v[1])
        }),
        ("scale", vec![(3, 2)], |t, v| t.scale(&v[0], -1.7)),
        ("scale_by", vec![(3, 2), (1, 1)], |t, v| {
            t.scale_by(&v[0], &v[1])
        }),
        ("transpose", vec![(3, 2)], |t, v| t.transpose(&v[0])),
        ("solve", vec![(4, 4), (4, 2)], |t, v| {
            let shift = DiffTensor::constant(Matrix::identity(4).scale(4.0));
            let a = t.add(&v[0], &shift)?;
            t.solve(&a, &v[1])
        }),
        ("sigmoid", vec![(3, 2)], |t, v| t.sigmoid(&v[0])),
        ("tanh", vec![(3, 2)], |t, v| t.tanh(&v[0])),
        ("concat_rows", vec![(2, 2), (3, 2)], |t, v| {
            t.concat_rows(&[&v[0], &v[1]])
        }),
        ("concat_cols", vec![(2, 2), (2, 3)], |t, v| {
            t.concat_cols(&[&v[0], &v[1]])
        }),
        ("slice_rows", vec![(4, 2)], |t, v| t.slice_rows(&v[0], 1..3)),
        ("slice_cols", vec![(2, 4)], |t, v| t.slice_cols(&v[0], 1..4)),
        ("reshape", vec![(3, 2)], |t, v| t.reshape(&v[0], 2, 3)),
        ("unpack_lower", vec![(6, 1)], |t, v| {
            t.unpack_lower(&v[0], 3)
        }),
        ("sum", vec![(3, 2)], |t, v| t.sum(&v[0])),
        ("mse", vec![(3, 2), (3, 2)], |t, v| t.mse(&v[0], &v[1])),
    ]
}

/// Checks one operation on random inputs in `[−1, 1]`.
pub fn check_op(shapes: &[(usize, usize)], op: OpFn, seed: u64) -> GradCheck {
    let mut rng = SeededRng::new(seed);
    let inputs: Vec<Matrix> = shapes
        .iter()
        .map(|&(r, c)| uniform(r, c, &mut rng))
        .collect();
    let probe = {
        let t = Tape::new();
        let consts: Vec<DiffTensor> = inputs.iter().cloned().map(DiffTensor::constant).collect();
        op(&t, &consts).unwrap().shape()
    };
    let w = uniform(probe.0, probe.1, &mut rng);
    check_function(&inputs, &all_coords(shapes), OP_STEP, OP_TOL, |t, v| {
        weighted_sum(t, &op(t, v)?, &w)
    })
    .unwrap()
}

/// Every operation on `seeds` random draws each.
pub fn op_suite(seeds: u64) -> Vec<(&'static str, GradCheck)> {
    op_cases()
        .into_iter()
        .map(|(name, shapes, op)| {
            let mut total = GradCheck::default();
            for s in 0..seeds {
                total.merge(&check_op(&shapes, op, 1000 + s));
            }
            (name, total)
        })
        .collect()
}

/// A layer unrolled over 5 steps; inputs are the layer's weights.
pub fn lstm_unroll_check() -> GradCheck {
    let (input, hidden) = (3, 4);
    let mut rng = SeededRng::new(41);
    let layer = LstmLayer::init(input, hidden, &mut rng);
    let xs: Vec<Matrix> = (0..5).map(|_| uniform(input, 1, &mut rng)).collect();
    let wz = uniform(hidden, 1, &mut rng);
    let wc = uniform(hidden, 1, &mut rng);
    let inputs = vec![layer.w_ih.clone(), layer.w_hh.clone(), layer.bias.clone()];
    let shapes: Vec<(usize, usize)> = inputs.iter().map(Matrix::shape).collect();
    check_function(&inputs, &all_coords(&shapes), OP_STEP, OP_TOL, |t, v| {
        let bound = hkf_core::lstm::BoundLstmLayer {
            w_ih: v[0].clone(),
            w_hh: v[1].clone(),
            bias: v[2].clone(),
        };
        let mut state = LstmState::zeros(hidden);
        for x in &xs {
            state = lstm_step(t, &bound, &state, &DiffTensor::constant(x.clone()))?;
        }
        let a = weighted_sum(t, &state.z, &wz)?;
        let b = weighted_sum(t, &state.c, &wc)?;
        t.add(&a, &b)
    })
    .unwrap()
}

/// Random `(parameter, entry)` pairs, chosen uniformly over all entries.
pub fn random_coords(shapes: &[(usize, usize)], count: usize, rng: &mut SeededRng) -> Vec<Coord> {
    let all = all_coords(shapes);
    (0..count).map(|_| all[rng.below(all.len())]).collect()
}

/// Toy sequence with pilots at `mask`, `d` real components.
pub fn toy_sequence(mask: &[bool], d: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = SeededRng::new(seed);
    let len = mask.len();
    let mut truth = Matrix::zeros(len, d);
    let mut obs = Matrix::zeros(len, d);
    for t in 0..len {
        for j in 0..d {
            let h = (0.4 * t as f64 + 1.3 * j as f64).sin();
            truth.set(t, j, h);
            if mask[t] {
                obs.set(t, j, h + 0.1 * rng.normal());
            }
        }
    }
    (truth, obs)
}

/// Pilots at 0, 3, 4 and 7: missing symbols, isolated and consecutive pilots.
pub const T8_MASK: [bool; 8] = [true, false, false, true, true, false, false, true];

/// Tracker loss on a `T = 8`, `N = 2` sequence w.r.t. 20 random weights.
pub fn tracker_loss_check() -> GradCheck {
    let w = TrackerWeights::init(2, 1, 0.8, 5);
    let (truth, obs) = toy_sequence(&T8_MASK, 4, 6);
    let shapes: Vec<(usize, usize)> = w.params().iter().map(|m| m.shape()).collect();
    let coords = random_coords(&shapes, 20, &mut SeededRng::new(7));
    check_model(&w, &coords, MODEL_STEP, MODEL_TOL, |t, b| {
        let out = tracker_forward(t, b, &obs, &T8_MASK, true)?;
        tracker_loss(t, &out, &truth, &obs, &T8_MASK)
    })
    .unwrap()
}

/// Hypernetwork filter with a random (nonzero) head, `N = 2`.
pub fn toy_hkf(seed: u64) -> HkfModel {
    let d = 4;
    let mut rng = SeededRng::new(seed);
    let mut lq = Matrix::identity(d).scale(0.2);
    for i in 1..d {
        lq.set(i, i - 1, 0.05 * rng.normal());
    }
    let base = HkfBase {
        lq,
        rdiag: vec![0.05; d],
    };
    let mut model = HkfModel::init(HkfVariant::Two, base, 0.9, seed);
    let (r, c) = model.head.weight.shape();
    model.head.weight = uniform(r, c, &mut rng).scale(0.05);
    model.head.bias = uniform(r, 1, &mut rng).scale(0.05);
    model
}

/// Full filter loss on `T = 8`, `N = 2` through predict, update (solve) and
/// the sampler, w.r.t. every hypernetwork weight.
pub fn hkf_loss_check() -> GradCheck {
    let model = toy_hkf(12);
    let (truth, obs) = toy_sequence(&T8_MASK, 4, 13);
    let eps = Matrix::from_vec(8, 4, SeededRng::new(14).normals(32)).unwrap();
    let rdiag = model.base.rdiag.clone();
    let shapes: Vec<(usize, usize)> = model.params().iter().map(|m| m.shape()).collect();
    check_model(
        &model,
        &all_coords(&shapes),
        MODEL_STEP,
        MODEL_TOL,
        |t, b| {
            let out = hkf_forward(t, b, &model.base, &obs, &T8_MASK, &rdiag, &eps)?;
            hkf_loss(t, &out, &truth)
        },
    )
    .unwrap()
}

/// Same loss w.r.t. 20 random weights.
pub fn hkf_loss_random_check() -> GradCheck {
    let model = toy_hkf(21);
    let (truth, obs) = toy_sequence(&T8_MASK, 4, 22);
    let eps = Matrix::from_vec(8, 4, SeededRng::new(23).normals(32)).unwrap();
    let rdiag = model.base.rdiag.clone();
    let shapes: Vec<(usize, usize)> = model.params().iter().map(|m| m.shape()).collect();
    let coords = random_coords(&shapes, 20, &mut SeededRng::new(24));
    check_model(&model, &coords, MODEL_STEP, MODEL_TOL, |t, b| {
        let out = hkf_forward(t, b, &model.base, &obs, &T8_MASK, &rdiag, &eps)?;
        hkf_loss(t, &out, &truth)
    })
    .unwrap()
}

/// Every suite merged.
pub fn full_suite() -> (GradCheck, Vec<(&'static str, GradCheck)>) {
    let mut parts = op_suite(3);
    parts.push(("lstm 5-step", lstm_unroll_check()));
    parts.push(("tracker loss", tracker_loss_check()));
    parts.push(("hkf loss", hkf_loss_check()));
    parts.push(("hkf loss, random weights", hkf_loss_random_check()));
    let mut total = GradCheck::default();
    for (_, g) in &parts {
        total.merge(g);
    }
    (total, parts)
}
