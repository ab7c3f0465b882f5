//! Retrieval metrics (Recall@k, MRR) and the relevance mapping they share.
//!
//! Relevance is either chunk-level (an explicit set of relevant chunk ids)
//! or page-level (any chunk of the gold work counts). Queries whose gold
//! never appears in the candidate list contribute 0 to MRR rather than being
//! excluded, so weak retrieval is penalized honestly.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use serde::{Deserialize, Serialize};

use crate::bm25::RankedCandidates;
use crate::corpus::AttributionExample;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no relevance judgment for query {0}")]
    MissingJudgment(String),
    #[error("chunk {0} has no work mapping")]
    UnmappedChunk(String),
    #[error("no queries to evaluate")]
    NoQueries,
}

/// What counts as relevant for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelevanceJudgment {
    /// Exactly these chunks are relevant.
    Chunks(BTreeSet<String>),
    /// Any chunk belonging to this work is relevant (page-level rule).
    Work(String),
}

impl RelevanceJudgment {
    /// Judgment from an example's gold fields: the chunk set when present,
    /// otherwise the gold work. `None` when the example carries no gold.
    pub fn from_example(example: &AttributionExample) -> Option<Self> {
        if let Some(ids) = &example.gold_chunk_ids {
            if !ids.is_empty() {
                return Some(Self::Chunks(ids.clone()));
            }
        }
        example.gold_work_id.clone().map(Self::Work)
    }
}

/// Whether `chunk_id` is relevant under the judgment. The work mapping is
/// consulted only for page-level judgments; an unmapped chunk there is an
/// error.
pub fn is_relevant(
    judgment: &RelevanceJudgment,
    chunk_id: &str,
    chunk_to_work: &BTreeMap<String, String>,
) -> Result<bool, EvalError> {
    match judgment {
        RelevanceJudgment::Chunks(set) => Ok(set.contains(chunk_id)),
        RelevanceJudgment::Work(work) => chunk_to_work
            .get(chunk_id)
            .map(|w| w == work)
            .ok_or_else(|| EvalError::UnmappedChunk(chunk_id.to_string())),
    }
}

fn first_relevant_rank(
    ranking: &RankedCandidates,
    judgment: &RelevanceJudgment,
    chunk_to_work: &BTreeMap<String, String>,
) -> Result<Option<usize>, EvalError> {
    for (i, id) in ranking.ids().enumerate() {
        if is_relevant(judgment, id, chunk_to_work)? {
            return Ok(Some(i + 1));
        }
    }
    Ok(None)
}

/// Fraction of queries with at least one relevant chunk in the top `k`.
pub fn recall_at_k(
    rankings: &[RankedCandidates],
    judgments: &BTreeMap<String, RelevanceJudgment>,
    chunk_to_work: &BTreeMap<String, String>,
    k: usize,
) -> Result<f64, EvalError> {
    assert!(k >= 1, "k must be at least 1");
    if rankings.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let mut hits = 0usize;
    for ranking in rankings {
        let judgment = judgments
            .get(&ranking.query_id)
            .ok_or_else(|| EvalError::MissingJudgment(ranking.query_id.clone()))?;
        if let Some(rank) = first_relevant_rank(ranking, judgment, chunk_to_work)? {
            if rank <= k {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / rankings.len() as f64)
}

/// Mean over queries of the reciprocal rank of the first relevant chunk;
/// 0 for a query whose list contains no relevant chunk.
pub fn mrr(
    rankings: &[RankedCandidates],
    judgments: &BTreeMap<String, RelevanceJudgment>,
    chunk_to_work: &BTreeMap<String, String>,
) -> Result<f64, EvalError> {
    if rankings.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let mut total = 0.0;
    for ranking in rankings {
        let judgment = judgments
            .get(&ranking.query_id)
            .ok_or_else(|| EvalError::MissingJudgment(ranking.query_id.clone()))?;
        if let Some(rank) = first_relevant_rank(ranking, judgment, chunk_to_work)? {
            total += 1.0 / rank as f64;
        }
    }
    Ok(total / rankings.len() as f64)
}

/// One experiment's metric summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scorer: String,
    pub recall_at_k: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub n_queries: usize,
    /// Hash of the run configuration that produced this report.
    pub config_hash: String,
}
