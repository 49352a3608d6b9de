//! Model checkpoints: `"NIGCKPT1"`, a `u32` LE manifest length, the JSON
//! manifest, then every parameter as `f64` LE in manifest order.

use std::path::Path;

use nigmat_core::toy::{MattingConfig, MattingNet, ParamSet, Refiner, TensorSpec};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

pub const MAGIC: &[u8; 8] = b"NIGCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Matting { config: MattingConfig },
    Refiner { image_channels: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model: ModelKind,
    /// Seed the training run was started from.
    pub seed: u64,
    pub steps: usize,
    pub tensors: Vec<TensorSpec>,
    /// FNV-1a of the parameter bits, as `ParamSet::checksum`.
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn new(model: ModelKind, seed: u64, steps: usize, params: ParamSet) -> Self {
        Checkpoint {
            manifest: Manifest {
                model,
                seed,
                steps,
                tensors: params.specs().to_vec(),
                checksum: format!("{:016x}", params.checksum()),
            },
            params,
        }
    }

    pub fn from_matting(net: &MattingNet, seed: u64) -> Self {
        Checkpoint::new(
            ModelKind::Matting {
                config: *net.config(),
            },
            seed,
            net.steps(),
            net.params().clone(),
        )
    }

    pub fn from_refiner(r: &Refiner, seed: u64) -> Self {
        Checkpoint::new(
            ModelKind::Refiner {
                image_channels: r.image_channels(),
            },
            seed,
            r.steps(),
            r.params().clone(),
        )
    }

    pub fn into_matting(self) -> Result<MattingNet> {
        match self.manifest.model {
            ModelKind::Matting { config } => Ok(MattingNet::from_params(
                config,
                self.params,
                self.manifest.steps,
            )?),
            other => Err(Error::Format(format!(
                "expected a matting checkpoint, found {other:?}"
            ))),
        }
    }

    pub fn into_refiner(self) -> Result<Refiner> {
        match self.manifest.model {
            ModelKind::Refiner { image_channels } => Ok(Refiner::from_params(
                image_channels,
                self.params,
                self.manifest.steps,
            )?),
            other => Err(Error::Format(format!(
                "expected a refiner checkpoint, found {other:?}"
            ))),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec(&self.manifest)?;
        let mut out = Vec::with_capacity(12 + manifest.len() + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        for v in self.params.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a checkpoint".into()));
        }
        let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if body.len() < n {
            return Err(Error::Format("truncated manifest".into()));
        }
        let manifest: Manifest = serde_json::from_slice(&body[..n])?;
        let payload = &body[n..];
        if payload.len() % 8 != 0 {
            return Err(Error::Format("payload is not a whole number of f64".into()));
        }
        let values = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let params = ParamSet::from_parts(manifest.tensors.clone(), values)?;
        let sum = format!("{:016x}", params.checksum());
        if sum != manifest.checksum {
            return Err(Error::Format(format!(
                "checksum mismatch: manifest {}, payload {sum}",
                manifest.checksum
            )));
        }
        Ok(Checkpoint { manifest, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()?).map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Checkpoint::decode(&std::fs::read(path).map_err(io_err(path))?)
    }
}
