//! Checkpoint container: model configuration, every parameter, and
//! (optionally) optimizer state, in one file.
//!
//! Layout: 8-byte magic `HDSTCKPT`, little-endian u32 manifest length, a
//! JSON manifest, then a flat blob of little-endian f64 values addressed
//! by element offsets from the manifest. Values round-trip bit-exactly,
//! so training can resume as if it had never stopped, and saving the same
//! state twice produces identical bytes.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::tensor::{AdamState, ParamContainer, Tensor, TensorError};

use super::model::HdstModel;
use super::ModelConfig;

const MAGIC: &[u8; 8] = b"HDSTCKPT";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint manifest: {0}")]
    Manifest(String),
    #[error("checkpoint payload: {0}")]
    Payload(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct OptimEntry {
    name: String,
    len: usize,
    m_offset: usize,
    v_offset: usize,
}

#[derive(Serialize, Deserialize)]
struct OptimManifest {
    lr: f64,
    step: u64,
    entries: Vec<OptimEntry>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    epoch: u64,
    step: u64,
    params: Vec<ParamEntry>,
    optim: Option<OptimManifest>,
}

/// A loaded checkpoint, ready to rebuild the model and optimizer.
pub struct Checkpoint {
    pub config: ModelConfig,
    pub epoch: u64,
    pub step: u64,
    params: Vec<(String, Vec<usize>, Vec<f64>)>,
    optim: Option<(f64, u64, Vec<(String, Vec<f64>, Vec<f64>)>)>,
}

pub fn save_checkpoint(
    path: &Path,
    model: &HdstModel,
    optim: Option<&AdamState>,
    epoch: u64,
    step: u64,
) -> Result<()> {
    let mut params = Vec::new();
    let mut blob: Vec<f64> = Vec::new();
    model.for_each_param(&mut |p| {
        params.push(ParamEntry {
            name: p.name().to_string(),
            shape: p.value().shape().to_vec(),
            offset: blob.len(),
        });
        blob.extend_from_slice(p.value().data());
    });
    let optim = optim.map(|o| {
        let entries = o
            .entries()
            .into_iter()
            .map(|(name, m, v)| {
                let m_offset = blob.len();
                blob.extend_from_slice(m);
                let v_offset = blob.len();
                blob.extend_from_slice(v);
                OptimEntry { name: name.to_string(), len: m.len(), m_offset, v_offset }
            })
            .collect();
        OptimManifest { lr: o.lr(), step: o.step_count(), entries }
    });

    let manifest = Manifest { config: model.config().clone(), epoch, step, params, optim };
    let manifest_json =
        serde_json::to_vec(&manifest).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
    let manifest_len = u32::try_from(manifest_json.len())
        .map_err(|_| CheckpointError::Manifest("manifest too large".into()))?;

    let mut bytes = Vec::with_capacity(12 + manifest_json.len() + 8 * blob.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&manifest_len.to_le_bytes());
    bytes.extend_from_slice(&manifest_json);
    for v in &blob {
        bytes.extend_from_slice(&v.to_le_bytes());
    }

    // Write-then-rename so a crash mid-save never clobbers the previous
    // checkpoint with a torn file.
    let tmp = path.with_extension("ckpt.partial");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let manifest_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let blob_start = 12 + manifest_len;
    if bytes.len() < blob_start {
        return Err(CheckpointError::Manifest("manifest extends past end of file".into()));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[12..blob_start])
        .map_err(|e| CheckpointError::Manifest(e.to_string()))?;

    let payload = &bytes[blob_start..];
    if payload.len() % 8 != 0 {
        return Err(CheckpointError::Payload("blob length not a multiple of 8".into()));
    }
    let blob: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let take = |offset: usize, len: usize, what: &str| -> Result<Vec<f64>> {
        blob.get(offset..offset + len).map(<[f64]>::to_vec).ok_or_else(|| {
            CheckpointError::Payload(format!(
                "{what}: range {offset}..{} outside blob of {}",
                offset + len,
                blob.len()
            ))
        })
    };

    let mut params = Vec::with_capacity(manifest.params.len());
    for e in &manifest.params {
        let n: usize = e.shape.iter().product();
        params.push((e.name.clone(), e.shape.clone(), take(e.offset, n, &e.name)?));
    }
    let optim = match &manifest.optim {
        None => None,
        Some(o) => {
            let mut entries = Vec::with_capacity(o.entries.len());
            for e in &o.entries {
                entries.push((
                    e.name.clone(),
                    take(e.m_offset, e.len, &e.name)?,
                    take(e.v_offset, e.len, &e.name)?,
                ));
            }
            Some((o.lr, o.step, entries))
        }
    };

    Ok(Checkpoint {
        config: manifest.config,
        epoch: manifest.epoch,
        step: manifest.step,
        params,
        optim,
    })
}

impl Checkpoint {
    /// Rebuilds the model with every parameter restored bit-exactly.
    pub fn restore_model(&self) -> Result<HdstModel> {
        let mut model = HdstModel::new(self.config.clone(), 0)?;
        let stored: HashMap<&str, (&Vec<usize>, &Vec<f64>)> = self
            .params
            .iter()
            .map(|(name, shape, data)| (name.as_str(), (shape, data)))
            .collect();
        let mut restored = 0usize;
        let mut problem: Option<CheckpointError> = None;
        model.for_each_param_mut(&mut |p| {
            if problem.is_some() {
                return;
            }
            match stored.get(p.name()) {
                None => {
                    problem = Some(CheckpointError::Payload(format!(
                        "parameter {} missing from checkpoint",
                        p.name()
                    )));
                }
                Some((shape, data)) => {
                    if p.value().shape() != shape.as_slice() {
                        problem = Some(CheckpointError::Payload(format!(
                            "parameter {} has shape {:?}, checkpoint holds {:?}",
                            p.name(),
                            p.value().shape(),
                            shape
                        )));
                        return;
                    }
                    p.set_value(Tensor::from_parts(shape.to_vec(), data.to_vec()));
                    restored += 1;
                }
            }
        });
        if let Some(e) = problem {
            return Err(e);
        }
        if restored != self.params.len() {
            return Err(CheckpointError::Payload(format!(
                "checkpoint holds {} parameters, model uses {restored}",
                self.params.len()
            )));
        }
        Ok(model)
    }

    pub fn restore_optimizer(&self) -> Option<AdamState> {
        self.optim.as_ref().map(|(lr, step, entries)| {
            let mut state = AdamState::new(*lr);
            state.restore(*step, entries.clone());
            state
        })
    }
}
