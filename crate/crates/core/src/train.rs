//! Adam, global-norm clipping and a minibatch BPTT loop shared by the
//! recurrent tracker and the hypernetwork filter.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SeededRng};
use crate::tensor::{DiffTensor, Matrix, Tape};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 8,
            clip_norm: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.epochs >= 1
            && self.batch_size >= 1
            && self.clip_norm > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(Error::Config(format!(
                "invalid training configuration {self:?}"
            )));
        }
        Ok(())
    }

    /// `key=value` lines, one per field.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lr={}", self.learning_rate);
        let _ = writeln!(s, "epochs={}", self.epochs);
        let _ = writeln!(s, "batch_size={}", self.batch_size);
        let _ = writeln!(s, "clip_norm={}", self.clip_norm);
        let _ = writeln!(s, "beta1={}", self.beta1);
        let _ = writeln!(s, "beta2={}", self.beta2);
        let _ = writeln!(s, "eps={}", self.eps);
        let _ = writeln!(s, "train_seed={}", self.seed);
        s
    }
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Matrix], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Matrix::frobenius_sq).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale_assign(s);
        }
    }
    norm
}

#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig, shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let (p, g, m, v) = (
                p.as_mut_slice(),
                g.as_slice(),
                m.as_mut_slice(),
                v.as_mut_slice(),
            );
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// A model whose parameters can be bound to a tape as leaves.
pub trait Trainable {
    type Bound;

    /// Leaves on `tape` (gradient-carrying) or constants when `tape` is `None`.
    fn bind(&self, tape: Option<&Tape>) -> Self::Bound;

    /// Bound leaves in the same order as [`Trainable::params_mut`].
    fn leaves(bound: &Self::Bound) -> Vec<&DiffTensor>;

    fn params_mut(&mut self) -> Vec<&mut Matrix>;

    fn param_shapes(&mut self) -> Vec<(usize, usize)> {
        self.params_mut().iter().map(|m| m.shape()).collect()
    }
}

/// Mean per-sequence loss of each epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    pub epoch_losses: Vec<f64>,
}

impl LossTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for (i, l) in self.epoch_losses.iter().enumerate() {
            let _ = writeln!(s, "{},{}", i + 1, l);
        }
        s
    }
}

/// Per-sequence context handed to the loss closure.
#[derive(Clone, Copy, Debug)]
pub struct StepContext {
    pub epoch: usize,
    pub item: usize,
    /// Seed for any randomness this forward pass needs.
    pub seed: u64,
}

/// Minibatch training with full-sequence BPTT. Batch members are processed in
/// order and their gradients summed in that order, so results do not depend
/// on scheduling.
pub fn train_loop<M, F>(
    model: &mut M,
    num_items: usize,
    cfg: &TrainConfig,
    mut loss_fn: F,
) -> Result<LossTrace>
where
    M: Trainable,
    F: FnMut(&Tape, &M::Bound, StepContext) -> Result<DiffTensor>,
{
    cfg.validate()?;
    if num_items == 0 {
        return Err(Error::Empty("no training sequences".into()));
    }
    let shapes = model.param_shapes();
    let mut adam = Adam::new(cfg, &shapes);
    let mut trace = LossTrace::default();
    let mut order: Vec<usize> = (0..num_items).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = SeededRng::new(derive_seed(cfg.seed, epoch as u64));
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads: Vec<Matrix> = shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
            for &item in batch {
                let tape = Tape::new();
                let bound = model.bind(Some(&tape));
                let ctx = StepContext {
                    epoch,
                    item,
                    seed: derive_seed(cfg.seed ^ 0xA5A5_5A5A, (epoch * num_items + item) as u64),
                };
                let loss = loss_fn(&tape, &bound, ctx)?;
                let value = loss.value().item();
                if !value.is_finite() {
                    return Err(Error::Diverged {
                        epoch: epoch + 1,
                        batch: batch_idx,
                        loss: value,
                    });
                }
                epoch_loss += value;
                let g = tape.backward(&loss)?;
                for (acc, leaf) in grads.iter_mut().zip(M::leaves(&bound)) {
                    if let Some(gl) = g.get(leaf) {
                        acc.add_assign(&gl);
                    }
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.scale_assign(inv);
            }
            let norm = clip_global_norm(&mut grads, cfg.clip_norm);
            if !norm.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    batch: batch_idx,
                    loss: norm,
                });
            }
            let mut params = model.params_mut();
            adam.step(&mut params, &grads);
        }
        let mean = epoch_loss / num_items as f64;
        log::info!("epoch {}: loss {mean:.6e}", epoch + 1);
        trace.epoch_losses.push(mean);
    }
    Ok(trace)
}
