//! Vocabulary, fixed-length encoding, batching and pretrained vectors.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CleanedDoc;

pub const PAD_ID: u32 = 0;
pub const DEFAULT_VOCAB_SIZE: usize = 1000;
pub const DEFAULT_SEQ_LEN: usize = 1000;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("cannot build a vocabulary from an empty training corpus")]
    EmptyCorpus,
    #[error("vocabulary size must be at least 1")]
    ZeroVocab,
    #[error("cannot batch an empty sequence list")]
    NoSequences,
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: expected {expected} values, found {found}")]
    VectorLength {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}: line {line}: `{value}` is not a finite number")]
    BadNumber {
        path: PathBuf,
        line: usize,
        value: String,
    },
}

/// Frequency-ranked token map. Ids run densely from 1; 0 is padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    max_size: usize,
}

impl Vocabulary {
    /// Ranks training tokens by descending count, ties broken by ascending
    /// byte order, and keeps the top `max_size`.
    pub fn build(train_docs: &[CleanedDoc], max_size: usize) -> Result<Self, TextError> {
        if max_size == 0 {
            return Err(TextError::ZeroVocab);
        }
        if train_docs.is_empty() {
            return Err(TextError::EmptyCorpus);
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for doc in train_docs {
            for tok in &doc.tokens {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size);
        Ok(Self::from_tokens(
            ranked.into_iter().map(|(t, _)| t.to_string()).collect(),
            max_size,
        ))
    }

    /// Rebuilds a vocabulary from tokens listed in id order (id 1 first).
    pub fn from_tokens(tokens: Vec<String>, max_size: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 1))
            .collect();
        Vocabulary {
            tokens,
            index,
            max_size,
        }
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        if id == PAD_ID {
            return None;
        }
        self.tokens.get(id as usize - 1).map(String::as_str)
    }

    /// Tokens in id order, id 1 first.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Number of real tokens (excluding padding).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    /// Embedding table rows: one per token plus the pad row.
    pub fn rows(&self) -> usize {
        self.tokens.len() + 1
    }
}

pub fn build_vocabulary(train_docs: &[CleanedDoc], max_size: usize) -> Result<Vocabulary, TextError> {
    Vocabulary::build(train_docs, max_size)
}

/// Maps in-vocabulary tokens to ids; out-of-vocabulary tokens are dropped.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Vec<u32> {
    tokens.iter().filter_map(|t| vocab.id(t.as_ref())).collect()
}

/// Right-pads with zeros or keeps the first `len` ids.
pub fn pad_truncate(ids: &[u32], len: usize) -> Vec<u32> {
    let mut out: Vec<u32> = ids.iter().take(len).copied().collect();
    out.resize(len, PAD_ID);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedSeq {
    pub ids: Vec<u32>,
    pub label: u8,
}

pub fn encode_doc(doc: &CleanedDoc, vocab: &Vocabulary, len: usize) -> EncodedSeq {
    EncodedSeq {
        ids: pad_truncate(&encode(&doc.tokens, vocab), len),
        label: doc.label,
    }
}

pub fn encode_docs(docs: &[CleanedDoc], vocab: &Vocabulary, len: usize) -> Vec<EncodedSeq> {
    docs.iter().map(|d| encode_doc(d, vocab, len)).collect()
}

/// Row-major `batch_size × seq_len` id matrix with one label per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub ids: Vec<u32>,
    pub labels: Vec<u8>,
    pub seq_len: usize,
}

impl Batch {
    pub fn from_seqs<'a>(seqs: impl IntoIterator<Item = &'a EncodedSeq>) -> Self {
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut seq_len = 0;
        for s in seqs {
            seq_len = s.ids.len();
            ids.extend_from_slice(&s.ids);
            labels.push(s.label);
        }
        Batch {
            ids,
            labels,
            seq_len,
        }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, b: usize) -> &[u32] {
        &self.ids[b * self.seq_len..(b + 1) * self.seq_len]
    }
}

/// Chunks sequences into batches, optionally after a seeded shuffle.
pub fn make_batches(
    seqs: &[EncodedSeq],
    batch_size: usize,
    seed: u64,
    shuffle: bool,
) -> Result<Vec<Batch>, TextError> {
    if batch_size == 0 {
        return Err(TextError::ZeroBatch);
    }
    if seqs.is_empty() {
        return Err(TextError::NoSequences);
    }
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    if shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(order
        .chunks(batch_size)
        .map(|chunk| Batch::from_seqs(chunk.iter().map(|&i| &seqs[i])))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    Random,
    Pretrained,
}

/// Initial embedding table, `rows × dim`, row 0 all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingInit {
    pub matrix: Vec<f32>,
    pub rows: usize,
    pub dim: usize,
    pub source: EmbeddingSource,
    /// Fraction of vocabulary tokens found in the vector file.
    pub coverage: f64,
}

/// Reads a `word v1 ... vd` vector file. Vocabulary words missing from it
/// receive seeded uniform samples in [-0.05, 0.05].
pub fn load_pretrained_embeddings(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingInit, TextError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TextError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let rows = vocab.rows();
    let mut matrix = vec![0f32; rows * dim];
    let mut found = vec![false; rows];

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let word = parts.next().unwrap_or_default();
        let values: Vec<&str> = parts.collect();
        if values.len() != dim {
            return Err(TextError::VectorLength {
                path: path.to_path_buf(),
                line: lineno + 1,
                expected: dim,
                found: values.len(),
            });
        }
        let Some(id) = vocab.id(word) else { continue };
        let row = &mut matrix[id as usize * dim..(id as usize + 1) * dim];
        for (slot, raw) in row.iter_mut().zip(&values) {
            let v: f32 = raw
                .parse()
                .ok()
                .filter(|v: &f32| v.is_finite())
                .ok_or_else(|| TextError::BadNumber {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    value: raw.to_string(),
                })?;
            *slot = v;
        }
        found[id as usize] = true;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for id in 1..rows {
        if !found[id] {
            for slot in &mut matrix[id * dim..(id + 1) * dim] {
                *slot = rng.random_range(-0.05f32..=0.05);
            }
        }
    }
    let hits = found.iter().skip(1).filter(|&&f| f).count();
    Ok(EmbeddingInit {
        matrix,
        rows,
        dim,
        source: EmbeddingSource::Pretrained,
        coverage: if vocab.is_empty() {
            0.0
        } else {
            hits as f64 / vocab.len() as f64
        },
    })
}
