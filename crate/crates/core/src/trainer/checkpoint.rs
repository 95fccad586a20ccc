//! `SNT1` checkpoint container.
//!
//! ```text
//! "SNT1" | version u16 LE | meta_len u32 LE | meta (JSON) | f32 LE payload
//! ```
//!
//! The metadata holds the training config, the vocabulary in id order and a
//! tensor index. Offsets are in bytes from the start of the payload.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{build_model, TrainConfig, TrainError};
use crate::autodiff::Tensor;
use crate::layers::{Model, Parameters};
use crate::textproc::Vocabulary;

pub const MAGIC: [u8; 4] = *b"SNT1";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0} already exists (pass force to overwrite)")]
    Exists(PathBuf),
    #[error("bad magic {found:?} at offset 0, expected \"SNT1\"")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported checkpoint version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },
    #[error("size mismatch in {what} at offset {offset}: expected {expected} bytes, found {found}")]
    SizeMismatch {
        what: &'static str,
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("tensor `{name}` has shape {found:?}, config implies {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor index: {0}")]
    Index(String),
    #[error("metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error("stored config: {0}")]
    Config(#[source] Box<TrainError>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rank: usize,
    pub dims: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    config: TrainConfig,
    vocabulary: Vec<String>,
    tensors: Vec<TensorEntry>,
}

/// Everything a checkpoint restores.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub vocab: Vocabulary,
    pub model: Model<f32>,
}

impl Checkpoint {
    pub fn tensor_index(&self) -> Vec<TensorEntry> {
        index_for(&self.model)
    }
}

fn index_for(model: &Model<f32>) -> Vec<TensorEntry> {
    let mut offset = 0;
    model
        .named_params()
        .into_iter()
        .map(|(name, t)| {
            let e = TensorEntry {
                name,
                rank: t.rank(),
                dims: t.shape().to_vec(),
                offset,
            };
            offset += t.len() * 4;
            e
        })
        .collect()
}

/// Serializes to the container format.
pub fn write_checkpoint(model: &Model<f32>, vocab: &Vocabulary, cfg: &TrainConfig) -> Vec<u8> {
    let meta = Metadata {
        config: cfg.clone(),
        vocabulary: vocab.tokens().to_vec(),
        tensors: index_for(model),
    };
    let meta = serde_json::to_vec(&meta).expect("metadata serializes");
    let params = model.named_params();
    let payload: usize = params.iter().map(|(_, t)| t.len() * 4).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + meta.len() + payload);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    for (_, t) in params {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Writes a checkpoint file. An existing file is only replaced when `force`.
pub fn save_checkpoint(
    model: &Model<f32>,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    path: impl AsRef<Path>,
    force: bool,
) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let io_err = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let bytes = write_checkpoint(model, vocab, cfg);
    let mut opts = OpenOptions::new();
    opts.write(true);
    if force {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    let mut file = opts.open(path).map_err(|e| {
        if e.kind() == io::ErrorKind::AlreadyExists {
            CheckpointError::Exists(path.to_path_buf())
        } else {
            io_err(e)
        }
    })?;
    file.write_all(&bytes).map_err(io_err)?;
    file.sync_all().map_err(io_err)
}

fn take<'a>(bytes: &'a [u8], offset: usize, len: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
    bytes
        .get(offset..offset + len)
        .ok_or(CheckpointError::SizeMismatch {
            what,
            offset,
            expected: len,
            found: bytes.len().saturating_sub(offset),
        })
}

/// Parses a container, checking every tensor against the shapes the stored
/// config implies.
pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let magic = take(bytes, 0, 4, "magic")?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic {
            found: magic.to_vec(),
        });
    }
    let version = u16::from_le_bytes(take(bytes, 4, 2, "version")?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let meta_len = u32::from_le_bytes(take(bytes, 6, 4, "metadata length")?.try_into().unwrap()) as usize;
    let meta: Metadata = serde_json::from_slice(take(bytes, HEADER_LEN, meta_len, "metadata")?)?;
    let payload_start = HEADER_LEN + meta_len;

    meta.config
        .validate()
        .map_err(|e| CheckpointError::Config(Box::new(e)))?;
    let vocab = Vocabulary::from_tokens(meta.vocabulary, meta.config.vocab_size);
    // The skeleton only supplies names and shapes; its values are replaced.
    let mut model: Model<f32> = build_model(
        &meta.config,
        vocab.rows(),
        None,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .map_err(|e| CheckpointError::Config(Box::new(e)))?;

    let expected = index_for(&model);
    if expected.len() != meta.tensors.len() {
        return Err(CheckpointError::Index(format!(
            "{} tensors listed, config implies {}",
            meta.tensors.len(),
            expected.len()
        )));
    }
    for (want, got) in expected.iter().zip(&meta.tensors) {
        if want.name != got.name {
            return Err(CheckpointError::Index(format!(
                "expected tensor `{}`, found `{}`",
                want.name, got.name
            )));
        }
        if got.rank != got.dims.len() {
            return Err(CheckpointError::Index(format!(
                "tensor `{}` declares rank {} with {} dims",
                got.name,
                got.rank,
                got.dims.len()
            )));
        }
        if want.dims != got.dims {
            return Err(CheckpointError::ShapeMismatch {
                name: got.name.clone(),
                expected: want.dims.clone(),
                found: got.dims.clone(),
            });
        }
        if want.offset != got.offset {
            return Err(CheckpointError::Index(format!(
                "tensor `{}` at offset {}, expected {}",
                got.name, got.offset, want.offset
            )));
        }
    }

    let payload_len: usize = expected.iter().map(|e| e.dims.iter().product::<usize>() * 4).sum();
    let found = bytes.len() - payload_start;
    if found != payload_len {
        return Err(CheckpointError::SizeMismatch {
            what: "tensor payload",
            offset: payload_start,
            expected: payload_len,
            found,
        });
    }
    for (entry, tensor) in expected.iter().zip(model.params_mut()) {
        let raw = &bytes[payload_start + entry.offset..][..tensor.len() * 4];
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        *tensor = Tensor::new(entry.dims.clone(), data).expect("length checked above");
    }
    Ok(Checkpoint {
        config: meta.config,
        vocab,
        model,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_checkpoint(&bytes)
}
