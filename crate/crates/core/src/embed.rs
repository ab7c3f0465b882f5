//! Text-encoder abstraction and cosine-similarity reranking of baseline
//! candidates.
//!
//! Real encoder bindings live outside this crate; what ships here is the
//! trait, the similarity math, and a deterministic hash-projection stub
//! encoder used by tests and synthetic runs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::bm25::{RankedCandidates, ScoredChunk};
use crate::hash::{fnv1a64, splitmix64, unit_float};

/// A fixed-dimension real vector produced by a text encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderVector {
    pub values: Vec<f64>,
}

impl EncoderVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|v| v * v).sum())
    }

    pub fn dot(&self, other: &Self) -> Result<f64, EmbedError> {
        if self.dim() != other.dim() {
            return Err(EmbedError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }
}

/// A deterministic text encoder: the same text always yields the same
/// vector, and all outputs share one dimension.
pub trait TextEncoder {
    /// Identity tag recorded in scorer names and run metadata.
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> EncoderVector;
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbedError {
    #[error("vector dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("no text available for candidate {0}")]
    MissingText(String),
}

/// Cosine similarity in [-1, 1]. Defined as 0 when either vector has zero
/// norm, so reranking stays total.
pub fn cosine_similarity(u: &EncoderVector, v: &EncoderVector) -> Result<f64, EmbedError> {
    let dot = u.dot(v)?;
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (nu * nv))
}

/// Reorders `candidates` by descending cosine similarity between the target
/// embedding and each candidate embedding; ties break by ascending chunk id.
/// The output is a permutation of the input ids. `texts` maps candidate
/// chunk ids to the text to embed.
pub fn rerank_by_embedding(
    target_text: &str,
    candidates: &RankedCandidates,
    encoder: &dyn TextEncoder,
    texts: &BTreeMap<String, String>,
) -> Result<RankedCandidates, EmbedError> {
    let target = encoder.encode(target_text);
    let mut entries = Vec::with_capacity(candidates.len());
    for id in candidates.ids() {
        let text = texts
            .get(id)
            .ok_or_else(|| EmbedError::MissingText(id.to_string()))?;
        let score = cosine_similarity(&target, &encoder.encode(text))?;
        entries.push(ScoredChunk {
            chunk_id: id.to_string(),
            score,
        });
    }
    Ok(RankedCandidates::from_unsorted(
        candidates.query_id.clone(),
        entries,
        format!("embed:{}", encoder.id()),
    ))
}

/// Deterministic stub encoder: each whitespace token hashes to a
/// pseudo-random direction, token directions are mean-pooled, and the result
/// is L2-normalized. Dimension and seed are configurable; no model weights
/// are involved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashProjectionEncoder {
    dim: usize,
    seed: u64,
}

impl HashProjectionEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1, "encoder dimension must be at least 1");
        Self { dim, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl TextEncoder for HashProjectionEncoder {
    fn id(&self) -> String {
        format!("hash-projection(d={},seed={})", self.dim, self.seed)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> EncoderVector {
        let mut acc = vec![0.0f64; self.dim];
        let mut n_tokens = 0usize;
        for tok in text.split_whitespace() {
            n_tokens += 1;
            let mut state = fnv1a64(tok.as_bytes(), self.seed);
            for slot in acc.iter_mut() {
                *slot += unit_float(splitmix64(&mut state));
            }
        }
        if n_tokens == 0 {
            return EncoderVector::new(acc);
        }
        for v in acc.iter_mut() {
            *v /= n_tokens as f64;
        }
        let mut out = EncoderVector::new(acc);
        let norm = out.norm();
        if norm > 0.0 {
            for v in out.values.iter_mut() {
                *v /= norm;
            }
        }
        out
    }
}
