//! Model checkpoint format.
//!
//! Binary layout: magic `TSNN`, version `u32 = 1`, then the spec — layer
//! count `u32`, layer sizes `u32` each, hidden activation `u8`
//! (0 relu, 1 tanh, 2 identity), head `u8` (0 linear, 1 tanh-scaled,
//! 2 gaussian), head bound `f64` — then `param_len u64`, and `params`,
//! `adam_m`, `adam_v` as `f64` little-endian, then `step_count u64`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Activation, MlpSpec, MlpState, OutputHead};

const MAGIC: &[u8; 4] = b"TSNN";
const VERSION: u32 = 1;

pub fn write_checkpoint<S: Scalar>(spec: &MlpSpec, state: &MlpState<S>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(spec.layer_sizes.len() as u32).to_le_bytes());
    for &s in &spec.layer_sizes {
        buf.extend_from_slice(&(s as u32).to_le_bytes());
    }
    buf.push(match spec.hidden {
        Activation::Relu => 0,
        Activation::Tanh => 1,
        Activation::Identity => 2,
    });
    let (head, bound) = match spec.head {
        OutputHead::Linear => (0u8, 0.0),
        OutputHead::TanhScaled { bound } => (1, bound),
        OutputHead::Gaussian => (2, 0.0),
    };
    buf.push(head);
    buf.extend_from_slice(&bound.to_le_bytes());
    buf.extend_from_slice(&(state.params.len() as u64).to_le_bytes());
    for vecs in [&state.params, &state.adam_m, &state.adam_v] {
        for v in vecs.iter() {
            buf.extend_from_slice(&v.into_f64().to_le_bytes());
        }
    }
    buf.extend_from_slice(&state.step_count.to_le_bytes());
    buf
}

pub fn read_checkpoint<S: Scalar>(buf: &[u8]) -> Result<(MlpSpec, MlpState<S>)> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > buf.len() {
            return Err(Error::Schema("truncated checkpoint".into()));
        }
        let s = &buf[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != MAGIC {
        return Err(Error::Schema("bad checkpoint magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Schema(format!("unsupported checkpoint version {version}")));
    }
    let n_sizes = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let mut layer_sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        layer_sizes.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize);
    }
    let hidden = match take(&mut pos, 1)?[0] {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        2 => Activation::Identity,
        other => return Err(Error::Schema(format!("bad activation byte {other}"))),
    };
    let head_byte = take(&mut pos, 1)?[0];
    let bound = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let head = match head_byte {
        0 => OutputHead::Linear,
        1 => OutputHead::TanhScaled { bound },
        2 => OutputHead::Gaussian,
        other => return Err(Error::Schema(format!("bad head byte {other}"))),
    };
    let spec = MlpSpec::new(layer_sizes, hidden, head)?;
    let n = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
    if n != spec.param_count() {
        return Err(Error::Schema(format!(
            "checkpoint has {n} params, spec wants {}",
            spec.param_count()
        )));
    }
    let read_vec = |pos: &mut usize| -> Result<Vec<S>> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(S::of_f64(f64::from_le_bytes(
                take(pos, 8)?.try_into().unwrap(),
            )));
        }
        Ok(v)
    };
    let params = read_vec(&mut pos)?;
    let adam_m = read_vec(&mut pos)?;
    let adam_v = read_vec(&mut pos)?;
    let step_count = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    if pos != buf.len() {
        return Err(Error::Schema("trailing bytes in checkpoint".into()));
    }
    Ok((
        spec,
        MlpState {
            params,
            adam_m,
            adam_v,
            step_count,
        },
    ))
}

pub fn save_checkpoint<S: Scalar>(spec: &MlpSpec, state: &MlpState<S>, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(&write_checkpoint(spec, state))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<(MlpSpec, MlpState<S>)> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    read_checkpoint(&buf)
}
