//! Versioned binary container for trained models.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic "ALIFORMR" | version u32 | header length u64 | header (JSON text)
//! tensor count u64 | per tensor: name length u32, name, rank u32,
//!                    extents u64 × rank, values f64 × product(extents)
//! SHA-256 of everything above (32 bytes)
//! ```
//!
//! Optimizer moments, when present, are stored as tensors named
//! `adam.m/<param>` and `adam.v/<param>`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{FeatureSchema, NormStats};
use crate::error::{Error, Result};
use crate::model::{Aliformer, ModelConfig};
use crate::optim::{AdamConfig, AdamState};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::{EpochStats, RngState, TrainOutcome};

pub const MAGIC: &[u8; 8] = b"ALIFORMR";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    schema: FeatureSchema,
    schema_hash: String,
    precision: String,
    norm: Option<NormStats>,
    adam: Option<AdamHeader>,
    rng: Option<RngState>,
    history: Vec<EpochStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct AdamHeader {
    config: AdamConfig,
    step: u64,
}

/// Everything needed to rebuild a model and, optionally, resume training.
#[derive(Debug, Clone)]
pub struct Checkpoint<F> {
    pub model: Aliformer<F>,
    pub norm: Option<NormStats>,
    pub optimizer: Option<AdamState<F>>,
    pub rng: Option<RngState>,
    pub history: Vec<EpochStats>,
}

impl<F: Scalar> Checkpoint<F> {
    pub fn new(model: Aliformer<F>, norm: Option<NormStats>) -> Self {
        Checkpoint {
            model,
            norm,
            optimizer: None,
            rng: None,
            history: Vec::new(),
        }
    }

    pub fn from_outcome(outcome: TrainOutcome<F>, norm: Option<NormStats>) -> Self {
        Checkpoint {
            model: outcome.model,
            norm,
            optimizer: Some(outcome.optimizer),
            rng: Some(outcome.rng),
            history: outcome.history,
        }
    }

    pub fn schema(&self) -> &FeatureSchema {
        crate::model::Forecaster::schema(&self.model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let schema = self.schema().clone();
        let header = Header {
            model: self.model.config().clone(),
            schema_hash: schema.fingerprint(),
            schema,
            precision: F::NAME.to_string(),
            norm: self.norm.clone(),
            adam: self.optimizer.as_ref().map(|a| AdamHeader {
                config: a.config,
                step: a.step,
            }),
            rng: self.rng,
            history: self.history.clone(),
        };
        let text = serde_json::to_string_pretty(&header)?;

        let params = self.model.params();
        let mut tensors: Vec<(String, &Tensor<F>)> =
            params.iter().map(|(n, t)| (n.to_string(), t)).collect();
        if let Some(adam) = &self.optimizer {
            for (kind, moments) in [("m", &adam.m), ("v", &adam.v)] {
                for (name, t) in params.names().iter().zip(moments) {
                    tensors.push((format!("adam.{kind}/{name}"), t));
                }
            }
        }

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u64).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &e in t.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint(
                "not a checkpoint file (bad magic)".into(),
            ));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checkpoint(
                "integrity check failed: file is truncated or corrupted".into(),
            ));
        }
        let mut r = Reader {
            buf: body,
            pos: MAGIC.len(),
        };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let len = r.u64()? as usize;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
        let header: Header = serde_json::from_str(text)?;
        if header.schema.fingerprint() != header.schema_hash {
            return Err(Error::Checkpoint(
                "schema hash does not match the stored schema".into(),
            ));
        }

        let mut model = Aliformer::<F>::new(header.model.clone(), header.schema.clone(), 0)?;
        let names = model.params().names().to_vec();
        let mut m = vec![None; names.len()];
        let mut v = vec![None; names.len()];
        let mut seen = vec![false; names.len()];
        let count = r.u64()?;
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|e| e as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?,
            )?;
            let data: Vec<F> = raw
                .chunks_exact(8)
                .map(|c| F::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
                .collect();
            let tensor =
                Tensor::new(&shape, data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
            let slot = |target: &str| {
                names
                    .iter()
                    .position(|p| p == target)
                    .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {target}")))
            };
            if let Some(p) = name.strip_prefix("adam.m/") {
                m[slot(p)?] = Some(tensor);
            } else if let Some(p) = name.strip_prefix("adam.v/") {
                v[slot(p)?] = Some(tensor);
            } else {
                seen[slot(&name)?] = true;
                model.params_mut().set(&name, tensor)?;
            }
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes after tensors".into()));
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Checkpoint(format!("missing tensor {}", names[i])));
        }
        let optimizer = match header.adam {
            Some(a) => {
                let collect = |xs: Vec<Option<Tensor<F>>>, kind: &str| {
                    xs.into_iter()
                        .zip(&names)
                        .map(|(x, n)| {
                            x.ok_or_else(|| Error::Checkpoint(format!("missing adam.{kind}/{n}")))
                        })
                        .collect::<Result<Vec<_>>>()
                };
                Some(AdamState {
                    config: a.config,
                    step: a.step,
                    m: collect(m, "m")?,
                    v: collect(v, "v")?,
                })
            }
            None => None,
        };
        Ok(Checkpoint {
            model,
            norm: header.norm,
            optimizer,
            rng: header.rng,
            history: header.history,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Loads and refuses checkpoints trained on a different schema.
    pub fn load_for_schema(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Self> {
        let ck = Self::load(path)?;
        let (have, want) = (ck.schema().fingerprint(), schema.fingerprint());
        if have != want {
            return Err(Error::Checkpoint(format!(
                "checkpoint schema hash {} does not match the dataset schema {}",
                &have[..12],
                &want[..12]
            )));
        }
        Ok(ck)
    }

    pub fn params(&self) -> &ParamStore<F> {
        self.model.params()
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
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
}
