//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic            4 bytes   "WRPN"
//! version          u32       CHECKPOINT_VERSION
//! descriptor hash  32 bytes  SHA-256 of the compact descriptor JSON
//! descriptor       u32 length + UTF-8 JSON (the hashed bytes)
//! epoch            u64
//! seed             u64
//! master weights   u32 count, then per layer: u32 layer index, u64 length, length x f64
//! optimizer state  same encoding as the master weights
//! ```
//!
//! Nothing follows the optimizer state; trailing bytes are rejected.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{NetworkDescriptor, ParamTensor, Parameters};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"WRPN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub descriptor: NetworkDescriptor,
    /// Unquantized trainable weights; quantization is applied when read.
    pub master: Parameters,
    /// SGD momentum buffers, same layout as `master`.
    pub momentum: Parameters,
    pub epoch: u64,
    pub seed: u64,
}

impl Checkpoint {
    pub fn descriptor_hash(&self) -> [u8; 32] {
        self.descriptor.hash()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let json = serde_json::to_vec(&self.descriptor).expect("descriptor serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&Sha256::digest(&json));
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        write_params(&mut out, &self.master);
        write_params(&mut out, &self.momentum);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::parse(0, "missing WRPN magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::parse(4, format!("unsupported checkpoint version {version}")));
        }
        let stored_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let json_len = r.u32()? as usize;
        let json_at = r.pos as u64;
        let json = r.take(json_len)?;
        if <[u8; 32]>::from(Sha256::digest(json)) != stored_hash {
            return Err(Error::parse(json_at, "descriptor does not match stored hash"));
        }
        let descriptor: NetworkDescriptor = serde_json::from_slice(json)
            .map_err(|e| Error::parse(json_at, format!("descriptor json: {e}")))?;
        let epoch = r.u64()?;
        let seed = r.u64()?;
        let master = read_params(&mut r)?;
        let momentum = read_params(&mut r)?;
        if r.pos != bytes.len() {
            return Err(Error::parse(r.pos as u64, "trailing bytes after checkpoint"));
        }
        let master = reshape_to(master, &descriptor)?;
        let momentum = reshape_to(momentum, &descriptor)?;
        Ok(Checkpoint {
            descriptor,
            master,
            momentum,
            epoch,
            seed,
        })
    }
}

fn write_params(out: &mut Vec<u8>, params: &Parameters) {
    out.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    for p in &params.tensors {
        out.extend_from_slice(&(p.layer as u32).to_le_bytes());
        out.extend_from_slice(&(p.value.len() as u64).to_le_bytes());
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::parse(
                self.pos as u64,
                format!("truncated: needed {n} bytes, {} left", self.bytes.len() - self.pos),
            )
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Reads a parameter block. Shapes are not stored; each array is kept flat
/// here and reshaped against the descriptor by the caller.
fn read_params(r: &mut Reader<'_>) -> Result<Parameters> {
    let count = r.u32()? as usize;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let layer = r.u32()? as usize;
        let at = r.pos as u64;
        let len = r.u64()? as usize;
        let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::parse(at, "array length overflows"))?)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let value = Tensor::new(vec![len.max(1)], data).map_err(|e| Error::parse(at, e.to_string()))?;
        tensors.push(ParamTensor { layer, value });
    }
    Ok(Parameters { tensors })
}

fn reshape_to(params: Parameters, net: &NetworkDescriptor) -> Result<Parameters> {
    let shapes: Vec<(usize, Vec<usize>)> = net
        .resolve_shapes()
        .map_err(|e| Error::parse(0, format!("embedded descriptor: {e}")))?
        .into_iter()
        .filter_map(|r| Some((r.index, r.param_shape?)))
        .collect();
    if shapes.len() != params.tensors.len() {
        return Err(Error::parse(0, "parameter count does not match descriptor"));
    }
    let tensors = params
        .tensors
        .into_iter()
        .zip(shapes)
        .map(|(p, (layer, shape))| {
            if p.layer != layer {
                return Err(Error::parse(0, format!("parameter for layer {} where {layer} expected", p.layer)));
            }
            let value = p.value.reshape(shape).map_err(|e| Error::parse(0, e.to_string()))?;
            Ok(ParamTensor { layer, value })
        })
        .collect::<Result<_>>()?;
    Ok(Parameters { tensors })
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    std::fs::write(path, checkpoint.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint using the descriptor embedded in it.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

/// Loads a checkpoint and requires it to have been written for `net`.
pub fn load_checkpoint_for(path: &Path, net: &NetworkDescriptor) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.descriptor_hash() != net.hash() {
        return Err(Error::Incompatible(format!(
            "{} was written for descriptor '{}', which differs from '{}'",
            path.display(),
            ckpt.descriptor.name,
            net.name
        )));
    }
    Ok(ckpt)
}
