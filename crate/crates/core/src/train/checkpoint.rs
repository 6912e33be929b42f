//! Versioned binary checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "HLNS" | version u32 | spec_len u32 | spec JSON
//! epoch u64 | seed u64
//! layers u32 | { name_len u32 | name | offset u64 | len u64 }*
//! dim u64 | params f64*dim | momentum f64*dim
//! bn_layers u32 | { features u32 | mean f64*features | var f64*features }*
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{BnState, Model, ModelSpec};
use crate::params::{LayerSegment, ParamVector};

pub const MAGIC: &[u8; 4] = b"HLNS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub params: ParamVector,
    pub momentum: Vec<f64>,
    pub epoch: u64,
    pub seed: u64,
    pub bn_state: BnState,
}

impl Checkpoint {
    /// Errors unless the checkpoint's parameters fit `model`.
    pub fn check_model(&self, model: &Model) -> Result<()> {
        if self.params.dim() != model.dim() {
            return Err(Error::shape(format!(
                "checkpoint has D = {}, model {} has D = {}",
                self.params.dim(),
                model.spec(),
                model.dim()
            )));
        }
        model.check_params(&self.params)
    }

    /// Rebuilds the model from the stored spec and checks the parameters fit.
    pub fn model(&self) -> Result<Model> {
        let m = Model::new(self.spec.clone())?;
        self.check_model(&m)?;
        Ok(m)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let spec = serde_json::to_vec(&self.spec)?;
        put_u32(&mut out, spec.len())?;
        out.extend_from_slice(&spec);
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        put_u32(&mut out, self.params.num_layers())?;
        for seg in self.params.layers() {
            put_u32(&mut out, seg.name.len())?;
            out.extend_from_slice(seg.name.as_bytes());
            out.extend_from_slice(&(seg.offset as u64).to_le_bytes());
            out.extend_from_slice(&(seg.len as u64).to_le_bytes());
        }
        if self.momentum.len() != self.params.dim() {
            return Err(Error::shape(
                "momentum buffer length differs from parameters",
            ));
        }
        out.extend_from_slice(&(self.params.dim() as u64).to_le_bytes());
        put_f64s(&mut out, self.params.values());
        put_f64s(&mut out, &self.momentum);
        put_u32(&mut out, self.bn_state.mean.len())?;
        for (m, v) in self.bn_state.mean.iter().zip(&self.bn_state.var) {
            put_u32(&mut out, m.len())?;
            put_f64s(&mut out, m);
            put_f64s(&mut out, v);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format("not a hesslens checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let spec_len = r.u32()? as usize;
        let spec: ModelSpec = serde_json::from_slice(r.take(spec_len)?)
            .map_err(|e| Error::format(format!("bad model spec in checkpoint: {e}")))?;
        let epoch = r.u64()?;
        let seed = r.u64()?;
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers.min(1 << 16));
        for _ in 0..n_layers {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::format("layer name is not UTF-8"))?;
            let offset = r.u64()? as usize;
            let len = r.u64()? as usize;
            layers.push(LayerSegment { name, offset, len });
        }
        let dim = r.u64()? as usize;
        let values = r.f64s(dim)?;
        let momentum = r.f64s(dim)?;
        let n_bn = r.u32()? as usize;
        let mut bn_state = BnState::default();
        for _ in 0..n_bn {
            let f = r.u32()? as usize;
            bn_state.mean.push(r.f64s(f)?);
            bn_state.var.push(r.f64s(f)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::format(format!(
                "{} trailing bytes after checkpoint",
                bytes.len() - r.pos
            )));
        }
        let params = ParamVector::new(values, layers)
            .map_err(|e| Error::format(format!("inconsistent parameter layout: {e}")))?;
        Ok(Checkpoint {
            spec,
            params,
            momentum,
            epoch,
            seed,
            bn_state,
        })
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ck.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

/// Loads a checkpoint and checks it against the model `expected` builds.
pub fn load_checkpoint_for(path: impl AsRef<Path>, expected: &ModelSpec) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    ck.check_model(&Model::new(expected.clone())?)?;
    Ok(ck)
}

fn put_u32(out: &mut Vec<u8>, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::format("length exceeds u32"))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::format("length overflow"))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::build;

    fn sample(spec: &str) -> Checkpoint {
        let spec: ModelSpec = spec.parse().unwrap();
        let (params, model) = build(&spec, 3).unwrap();
        let mut bn = model.initial_bn_state();
        for m in &mut bn.mean {
            m.iter_mut().for_each(|x| *x = 0.25);
        }
        Checkpoint {
            spec,
            momentum: params.values().iter().map(|x| x * 0.5).collect(),
            params,
            epoch: 7,
            seed: 11,
            bn_state: bn,
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        for s in ["mlp:4-8-3", "mlp-skip+bn:4-8-8-3"] {
            let ck = sample(s);
            let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
            assert_eq!(back, ck);
            back.model().unwrap();
        }
    }

    #[test]
    fn corruption_is_a_format_error() {
        let bytes = sample("mlp:4-8-3").to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(Error::Format(_))
        ));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Format(_))
        ));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(
            Checkpoint::from_bytes(&long),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn other_spec_is_a_dimension_mismatch() {
        let ck = sample("mlp:4-8-3");
        let other = Model::new("mlp:4-9-3".parse().unwrap()).unwrap();
        let err = ck.check_model(&other).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }
}
