//! Binary model checkpoints. Layout: magic `GCNM`, u16 version, the model
//! description as a JSON blob, the coarsening seed, a 64-bit fingerprint of
//! the adjacency the model was trained on, then each named tensor as
//! (name, rank, dims, f64 LE values). Loading refuses a fingerprint
//! mismatch so a model is never silently evaluated on a different graph.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::ModelSpec;
use crate::params::{ParameterSet, Tensor};

const MAGIC: &[u8; 4] = b"GCNM";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub arch: String,
    pub filters: Vec<usize>,
    pub order: usize,
    pub fc_sizes: Vec<usize>,
    pub n_classes: usize,
    pub dropout_rate: f64,
}

impl ModelDescriptor {
    pub fn from_spec(spec: &ModelSpec) -> Self {
        ModelDescriptor {
            arch: spec.arch_text.clone(),
            filters: spec.filters.clone(),
            order: spec.order,
            fc_sizes: spec.fc_sizes.clone(),
            n_classes: spec.n_classes,
            dropout_rate: spec.dropout_rate,
        }
    }

    pub fn to_spec(&self) -> Result<ModelSpec> {
        ModelSpec::new(
            &self.arch,
            self.filters.clone(),
            self.order,
            self.fc_sizes.clone(),
            self.n_classes,
            self.dropout_rate,
        )
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub descriptor: ModelDescriptor,
    pub coarsening_seed: u64,
    pub graph_fingerprint: u64,
    pub step: u64,
    pub tensors: Vec<Tensor>,
}

pub fn encode(
    spec: &ModelSpec,
    params: &ParameterSet,
    coarsening_seed: u64,
    graph_fingerprint: u64,
) -> Vec<u8> {
    let descriptor = ModelDescriptor::from_spec(spec);
    let desc_json = serde_json::to_vec(&descriptor).expect("descriptor serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(desc_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&desc_json);
    out.extend_from_slice(&coarsening_seed.to_le_bytes());
    out.extend_from_slice(&graph_fingerprint.to_le_bytes());
    out.extend_from_slice(&params.step.to_le_bytes());
    out.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    for t in &params.tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Write-temp-then-rename so a failed run never leaves a partial checkpoint.
pub fn save(
    path: &Path,
    spec: &ModelSpec,
    params: &ParameterSet,
    coarsening_seed: u64,
    graph_fingerprint: u64,
) -> Result<()> {
    let bytes = encode(spec, params, coarsening_seed, graph_fingerprint);
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load(path: &Path, expected_fingerprint: Option<u64>) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let ck = decode(&bytes)?;
    if let Some(expected) = expected_fingerprint {
        if ck.graph_fingerprint != expected {
            return Err(Error::FingerprintMismatch {
                expected,
                actual: ck.graph_fingerprint,
            });
        }
    }
    Ok(ck)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut cursor = Cursor { bytes, pos: 0 };
    let magic = cursor.take(4)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint("bad magic, expected GCNM".into()));
    }
    let version = cursor.u16()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let desc_len = cursor.u32()? as usize;
    let desc_json = cursor.take(desc_len)?;
    let descriptor: ModelDescriptor = serde_json::from_slice(desc_json)
        .map_err(|e| Error::Checkpoint(format!("bad descriptor: {e}")))?;
    let coarsening_seed = cursor.u64()?;
    let graph_fingerprint = cursor.u64()?;
    let step = cursor.u64()?;
    let n_tensors = cursor.u32()? as usize;
    let mut tensors = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name_len = cursor.u32()? as usize;
        let name = String::from_utf8(cursor.take(name_len)?.to_vec())
            .map_err(|e| Error::Checkpoint(format!("bad tensor name: {e}")))?;
        let rank = cursor.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cursor.u64()? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            let raw = cursor.take(8)?;
            data.push(f64::from_le_bytes(raw.try_into().unwrap()));
        }
        let is_running = name.contains("running_");
        let is_bn = name.starts_with("bn");
        tensors.push(Tensor {
            name,
            shape,
            data,
            trainable: !is_running,
            regularized: !is_bn,
        });
    }
    if cursor.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(Checkpoint {
        descriptor,
        coarsening_seed,
        graph_fingerprint,
        step,
        tensors,
    })
}

impl Checkpoint {
    pub fn into_params(self) -> ParameterSet {
        let mut ps = ParameterSet::new(self.tensors);
        ps.step = self.step;
        ps
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarsen::coarsen_adjacency;
    use crate::network::init_params;
    use ndarray::Array2;

    fn fixture() -> (ModelSpec, ParameterSet) {
        let mut adj = Array2::<f64>::zeros((8, 8));
        for i in 0..8 {
            let j = (i + 1) % 8;
            adj[[i, j]] = 1.0;
            adj[[j, i]] = 1.0;
        }
        let plan = coarsen_adjacency(&adj, 2, 7).unwrap();
        let spec = ModelSpec::new("C-P-F-S", vec![4], 2, vec![6], 3, 0.25).unwrap();
        let params = init_params(&spec, &plan, 13).unwrap();
        (spec, params)
    }

    #[test]
    fn encode_decode_round_trip() {
        let (spec, mut params) = fixture();
        params.step = 42;
        let bytes = encode(&spec, &params, 7, 0xdead_beef);
        let ck = decode(&bytes).unwrap();
        assert_eq!(ck.coarsening_seed, 7);
        assert_eq!(ck.graph_fingerprint, 0xdead_beef);
        assert_eq!(ck.step, 42);
        assert_eq!(ck.descriptor.to_spec().unwrap(), spec);
        assert_eq!(ck.tensors, params.tensors);
        let restored = ck.into_params();
        assert_eq!(restored.tensors, params.tensors);
        assert_eq!(restored.step, 42);
    }

    #[test]
    fn encode_is_byte_deterministic() {
        let (spec, params) = fixture();
        assert_eq!(encode(&spec, &params, 1, 2), encode(&spec, &params, 1, 2));
    }

    #[test]
    fn save_load_and_fingerprint_check() {
        let (spec, params) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, &spec, &params, 7, 100).unwrap();
        assert!(!path.with_extension("tmp").exists());
        assert!(load(&path, Some(100)).is_ok());
        assert!(load(&path, None).is_ok());
        match load(&path, Some(999)) {
            Err(Error::FingerprintMismatch { expected, actual }) => {
                assert_eq!(expected, 999);
                assert_eq!(actual, 100);
            }
            other => panic!("expected fingerprint mismatch, got {other:?}"),
        }
    }

    #[test]
    fn decode_rejects_corruption() {
        let (spec, params) = fixture();
        let bytes = encode(&spec, &params, 1, 2);
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(decode(&bad_magic).is_err());
        let mut bad_version = bytes.clone();
        bad_version[4] = 0xff;
        assert!(decode(&bad_version).is_err());
        assert!(decode(&[]).is_err());
    }

    #[test]
    fn trainability_reconstructed_from_names() {
        let (spec, params) = fixture();
        let ck = decode(&encode(&spec, &params, 1, 2)).unwrap();
        for t in &ck.tensors {
            assert_eq!(t.trainable, !t.name.contains("running_"), "{}", t.name);
            assert_eq!(t.regularized, !t.name.starts_with("bn"), "{}", t.name);
        }
    }
}
