//! Versioned checkpoint container: a JSON header (config, class catalog,
//! tensor index, training metadata) followed by a row-major `f32` payload.
//!
//! Layout: `b"SSCK"`, `u32` version, `u64` header length, header bytes,
//! payload. All integers and floats little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::model::{PipelineModel, SubHead};
use crate::digest::Digest;
use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::scalar::Scalar;
use crate::types::ClassCatalog;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Baseline,
    Split,
    Cascade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub owner: SubHead,
    pub shape: Vec<usize>,
    /// Offset into the payload, in `f32` elements.
    pub offset: usize,
}

/// Training metadata of one registry head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadMeta {
    pub seed: u64,
    pub epochs: usize,
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Where a split model came from and what has been done to it since.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_digest: String,
    pub init_mode: String,
    #[serde(default)]
    pub heads: BTreeMap<u32, HeadMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: CheckpointKind,
    pub config: PipelineConfig,
    pub catalog: ClassCatalog,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub epoch: usize,
    /// Validation metric after each evaluation.
    #[serde(default)]
    pub metric_history: Vec<f64>,
    #[serde(default)]
    pub train_config: Option<serde_json::Value>,
    /// Class id to parameter prefix of its mask head.
    #[serde(default)]
    pub registry: Option<BTreeMap<u32, String>>,
    #[serde(default)]
    pub provenance: Option<Provenance>,
    /// Variant-specific settings (e.g. cascade stage thresholds).
    #[serde(default)]
    pub extra: Option<serde_json::Value>,
    /// SHA-256 of the payload bytes.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord {
    pub header: CheckpointHeader,
    pub payload: Vec<f32>,
}

fn payload_bytes(payload: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() * 4);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn payload_digest(payload: &[f32]) -> String {
    let mut d = Digest::new();
    d.update(&payload_bytes(payload));
    d.finish()
}

impl CheckpointRecord {
    /// Snapshot of any parameter set, stored as `f32`.
    pub fn from_params<T: Scalar, P: ParamSet<T>>(
        kind: CheckpointKind,
        config: &PipelineConfig,
        catalog: &ClassCatalog,
        params: &P,
    ) -> Result<Self> {
        let mut tensors = Vec::new();
        let mut payload = Vec::new();
        for (name, t) in params.named_params("") {
            let owner = SubHead::of(&name)
                .ok_or_else(|| Error::IncompatibleModel(format!("parameter {name} has no owning sub-head")))?;
            tensors.push(TensorEntry {
                name,
                owner,
                shape: t.shape.clone(),
                offset: payload.len(),
            });
            payload.extend(t.data.iter().map(|v| v.as_f32()));
        }
        let digest = payload_digest(&payload);
        Ok(CheckpointRecord {
            header: CheckpointHeader {
                kind,
                config: config.clone(),
                catalog: catalog.clone(),
                tensors,
                epoch: 0,
                metric_history: Vec::new(),
                train_config: None,
                registry: None,
                provenance: None,
                extra: None,
                digest,
            },
            payload,
        })
    }

    pub fn digest(&self) -> &str {
        &self.header.digest
    }

    pub fn tensor(&self, name: &str) -> Option<(&TensorEntry, &[f32])> {
        self.header.tensors.iter().find(|e| e.name == name).map(|e| {
            let n: usize = e.shape.iter().product();
            (e, &self.payload[e.offset..e.offset + n])
        })
    }

    /// Digest over every tensor whose name starts with `prefix`.
    pub fn subtree_digest(&self, prefix: &str) -> String {
        let mut d = Digest::new();
        for e in self.header.tensors.iter().filter(|e| e.name.starts_with(prefix)) {
            let n: usize = e.shape.iter().product();
            d.update(e.name.as_bytes());
            d.update(&payload_bytes(&self.payload[e.offset..e.offset + n]));
        }
        d.finish()
    }

    /// Copies every parameter of `params` from this record, requiring the
    /// names to match exactly.
    pub fn load_into<T: Scalar, P: ParamSet<T>>(&self, params: &mut P) -> Result<()> {
        let mut wanted = 0usize;
        for (name, t) in params.named_params_mut("") {
            let (entry, data) = self
                .tensor(&name)
                .ok_or_else(|| Error::IncompatibleModel(format!("checkpoint lacks {name}")))?;
            if entry.shape != t.shape {
                return Err(Error::IncompatibleModel(format!(
                    "{name}: checkpoint shape {:?}, model {:?}",
                    entry.shape, t.shape
                )));
            }
            for (dst, &src) in t.data.iter_mut().zip(data) {
                *dst = T::from_single(src);
            }
            wanted += 1;
        }
        if wanted != self.header.tensors.len() {
            return Err(Error::IncompatibleModel(format!(
                "checkpoint holds {} tensors, model uses {wanted}",
                self.header.tensors.len()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(16 + header.len() + self.payload.len() * 4);
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload_bytes(&self.payload));
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], name: &str) -> Result<Self> {
        let perr = |m: &str| Error::Parse {
            record: name.to_string(),
            message: m.to_string(),
        };
        if bytes.len() < 16 || bytes[..4] != CHECKPOINT_MAGIC {
            return Err(perr("bad checkpoint magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(perr(&format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bytes.len() < 16 + hlen {
            return Err(perr("truncated header"));
        }
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[16..16 + hlen]).map_err(|e| perr(&e.to_string()))?;
        let body = &bytes[16 + hlen..];
        if !body.len().is_multiple_of(4) {
            return Err(perr("payload is not a whole number of f32 values"));
        }
        let payload: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let expected: usize = header.tensors.iter().map(|e| e.shape.iter().product::<usize>()).sum();
        if expected != payload.len() {
            return Err(perr("payload length does not match the tensor index"));
        }
        if payload_digest(&payload) != header.digest {
            return Err(perr("payload digest mismatch"));
        }
        Ok(CheckpointRecord { header, payload })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

impl<T: Scalar> PipelineModel<T> {
    pub fn to_checkpoint(&self) -> Result<CheckpointRecord> {
        CheckpointRecord::from_params(CheckpointKind::Baseline, &self.config, &self.catalog, self)
    }

    pub fn from_checkpoint(record: &CheckpointRecord) -> Result<Self> {
        if record.header.kind != CheckpointKind::Baseline {
            return Err(Error::IncompatibleModel(format!(
                "expected a baseline checkpoint, found {:?}",
                record.header.kind
            )));
        }
        let mut model = Self::zeros(record.header.config.clone(), record.header.catalog.clone())?;
        if !record.header.tensors.iter().any(|e| e.owner == SubHead::Mask) {
            model.mask = None;
        }
        record.load_into(&mut model)?;
        Ok(model)
    }
}
