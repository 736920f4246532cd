//! "HKW1" weight checkpoints for the recurrent tracker and the hypernetwork filter.
//!
//! Layout (little endian): magic `HKW1`, `u32` version, `u32` model kind
//! (0 tracker, 1 filter), `u32` layers, `u32` taps `N`, `u32` hidden size.
//! Filter checkpoints continue with a `u8` variant code, the base `LQ`
//! (`2N × 2N`) and `R` diagonal (`2N`). Both kinds then store the input scale
//! and, for each layer, `W_ih`, `W_hh` and the bias, followed by the head
//! weight and bias. Matrices are row-major `f64`.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hkf::{residual_len, HkfBase, HkfModel, HkfVariant};
use crate::io::{ByteReader, ByteWriter};
use crate::lstm::{Affine, LstmLayer, TrackerWeights};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"HKW1";
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND_TRACKER: u32 = 0;
const KIND_FILTER: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Checkpoint {
    Tracker(TrackerWeights),
    Filter(HkfModel),
}

impl Checkpoint {
    pub fn num_taps(&self) -> usize {
        match self {
            Checkpoint::Tracker(w) => w.dim() / 2,
            Checkpoint::Filter(m) => m.dim() / 2,
        }
    }

    /// Method name the checkpoint evaluates as.
    pub fn method_name(&self) -> &'static str {
        match self {
            Checkpoint::Tracker(_) => "lstm",
            Checkpoint::Filter(m) => m.variant.name(),
        }
    }
}

fn write_layers(w: &mut ByteWriter, layers: &[LstmLayer], head: &Affine) {
    for l in layers {
        w.matrix(&l.w_ih);
        w.matrix(&l.w_hh);
        w.matrix(&l.bias);
    }
    w.matrix(&head.weight);
    w.matrix(&head.bias);
}

fn read_layers(
    r: &mut ByteReader<'_>,
    num_layers: usize,
    input: usize,
    hidden: usize,
    output: usize,
) -> Result<(Vec<LstmLayer>, Affine)> {
    let mut layers = Vec::with_capacity(num_layers);
    for i in 0..num_layers {
        let inp = if i == 0 { input } else { hidden };
        layers.push(LstmLayer {
            w_ih: r.matrix(4 * hidden, inp)?,
            w_hh: r.matrix(4 * hidden, hidden)?,
            bias: r.matrix(4 * hidden, 1)?,
        });
    }
    let head = Affine {
        weight: r.matrix(output, hidden)?,
        bias: r.matrix(output, 1)?,
    };
    Ok((layers, head))
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut w = ByteWriter::default();
    w.bytes(&CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    match ckpt {
        Checkpoint::Tracker(t) => {
            w.u32(KIND_TRACKER);
            w.u32(t.layers.len() as u32);
            w.u32((t.dim() / 2) as u32);
            w.u32(t.hidden() as u32);
            w.f64(t.input_scale);
            write_layers(&mut w, &t.layers, &t.head);
        }
        Checkpoint::Filter(m) => {
            w.u32(KIND_FILTER);
            w.u32(m.layers.len() as u32);
            w.u32((m.dim() / 2) as u32);
            w.u32(m.hidden() as u32);
            w.u8(m.variant.code());
            w.matrix(&m.base.lq);
            w.f64s(&m.base.rdiag);
            w.f64(m.input_scale);
            write_layers(&mut w, &m.layers, &m.head);
        }
    }
    w.into_inner()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    r.version(CHECKPOINT_VERSION)?;
    let kind = r.u32()?;
    let num_layers = r.u32()? as usize;
    let n = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    if num_layers == 0 || n == 0 || hidden == 0 {
        return Err(Error::Format(
            "checkpoint header has a zero dimension".into(),
        ));
    }
    let d = 2 * n;
    let ckpt = match kind {
        KIND_TRACKER => {
            let input_scale = r.f64()?;
            let (layers, head) = read_layers(&mut r, num_layers, 2 * d, hidden, 2 * d)?;
            Checkpoint::Tracker(TrackerWeights {
                layers,
                head,
                input_scale,
            })
        }
        KIND_FILTER => {
            let variant = HkfVariant::from_code(r.u8()?)?;
            if variant.num_layers() != num_layers {
                return Err(Error::Format(format!(
                    "variant {} stores {} layers, header says {num_layers}",
                    variant.name(),
                    variant.num_layers()
                )));
            }
            let lq = r.matrix(d, d)?;
            let rdiag = r.f64s(d)?;
            let input_scale = r.f64()?;
            let (layers, head) = read_layers(&mut r, num_layers, d, hidden, residual_len(d))?;
            Checkpoint::Filter(HkfModel {
                variant,
                base: HkfBase { lq, rdiag },
                layers,
                head,
                input_scale,
            })
        }
        other => return Err(Error::Format(format!("unknown model kind {other}"))),
    };
    r.finish()?;
    Ok(ckpt)
}

/// First 16 hex digits of the SHA-256 of the encoded checkpoint.
pub fn checkpoint_id(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<String> {
    let bytes = encode_checkpoint(ckpt);
    fs::write(path, &bytes)?;
    Ok(checkpoint_id(&bytes))
}

/// Reads a checkpoint and returns it with its id.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(Checkpoint, String)> {
    let bytes = fs::read(path)?;
    Ok((decode_checkpoint(&bytes)?, checkpoint_id(&bytes)))
}
