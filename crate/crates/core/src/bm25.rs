//! BM25 inverted index over source chunks: the baseline retriever whose
//! candidate pool every reranker consumes.
//!
//! The index is immutable after build and deterministic: postings live in
//! ordered maps, postings lists are sorted by chunk id, and ranking ties are
//! broken by ascending chunk id, so rebuilding from the same input always
//! yields the same structure and the same rankings.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::text;

/// IDF variant used by [`IndexedCorpus::score`]; the `1 +` inside the log
/// keeps scores non-negative. Recorded in persisted index metadata.
pub const IDF_VARIANT: &str = "ln(1 + (N - df + 0.5) / (df + 0.5))";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

/// One entry of a term's postings list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub chunk_id: String,
    pub term_frequency: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IndexError {
    #[error("duplicate chunk id {0}")]
    DuplicateChunkId(String),
    #[error("chunk id {0} is not indexed")]
    UnknownChunkId(String),
    #[error("corrupt index: {0}")]
    Corrupt(String),
}

/// BM25 inverted index. Query-side analysis matches index-side analysis:
/// NFC, case fold, whitespace tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedCorpus {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: BTreeMap<String, u32>,
    avg_doc_length: f64,
    n_docs: usize,
    params: Bm25Params,
}

impl IndexedCorpus {
    /// Builds the index from `(chunk_id, index_text)` pairs. The text is
    /// typically biblio-augmented chunk text.
    pub fn build(chunks: &[(String, String)], params: Bm25Params) -> Result<Self, IndexError> {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths: BTreeMap<String, u32> = BTreeMap::new();

        for (chunk_id, index_text) in chunks {
            let toks = text::index_tokens(index_text);
            if doc_lengths
                .insert(chunk_id.clone(), toks.len() as u32)
                .is_some()
            {
                return Err(IndexError::DuplicateChunkId(chunk_id.clone()));
            }
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for tok in &toks {
                *tf.entry(tok.as_str()).or_insert(0) += 1;
            }
            for (term, count) in tf {
                postings.entry(term.to_string()).or_default().push(Posting {
                    chunk_id: chunk_id.clone(),
                    term_frequency: count,
                });
            }
        }
        for list in postings.values_mut() {
            list.sort_by(|a, b| a.chunk_id.cmp(&b.chunk_id));
        }

        let n_docs = doc_lengths.len();
        let total: u64 = doc_lengths.values().map(|&l| u64::from(l)).sum();
        let avg_doc_length = if n_docs == 0 {
            0.0
        } else {
            total as f64 / n_docs as f64
        };

        Ok(Self {
            postings,
            doc_lengths,
            avg_doc_length,
            n_docs,
            params,
        })
    }

    /// Reassembles an index from persisted parts, revalidating the derived
    /// statistics.
    pub fn from_parts(
        postings: BTreeMap<String, Vec<Posting>>,
        doc_lengths: BTreeMap<String, u32>,
        params: Bm25Params,
    ) -> Result<Self, IndexError> {
        for (term, list) in &postings {
            for pair in list.windows(2) {
                if pair[0].chunk_id >= pair[1].chunk_id {
                    return Err(IndexError::Corrupt(format!(
                        "postings for term {term:?} are not sorted by chunk id"
                    )));
                }
            }
            for p in list {
                if !doc_lengths.contains_key(&p.chunk_id) {
                    return Err(IndexError::Corrupt(format!(
                        "posting for term {term:?} names unknown chunk {}",
                        p.chunk_id
                    )));
                }
            }
        }
        let n_docs = doc_lengths.len();
        let total: u64 = doc_lengths.values().map(|&l| u64::from(l)).sum();
        let avg_doc_length = if n_docs == 0 {
            0.0
        } else {
            total as f64 / n_docs as f64
        };
        Ok(Self {
            postings,
            doc_lengths,
            avg_doc_length,
            n_docs,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.n_docs
    }

    pub fn is_empty(&self) -> bool {
        self.n_docs == 0
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_length(&self, chunk_id: &str) -> Option<u32> {
        self.doc_lengths.get(chunk_id).copied()
    }

    pub fn doc_lengths(&self) -> &BTreeMap<String, u32> {
        &self.doc_lengths
    }

    pub fn postings(&self) -> &BTreeMap<String, Vec<Posting>> {
        &self.postings
    }

    pub fn contains(&self, chunk_id: &str) -> bool {
        self.doc_lengths.contains_key(chunk_id)
    }

    /// Inverse document frequency of `term` under [`IDF_VARIANT`].
    pub fn idf(&self, term: &str) -> f64 {
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        let n = self.n_docs as f64;
        libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
    }

    fn term_weight(&self, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        // For a degenerate corpus of all-empty chunks the average length is
        // 0; treat len/avg as 1 so the score stays finite.
        let len_ratio = if self.avg_doc_length > 0.0 {
            f64::from(doc_len) / self.avg_doc_length
        } else {
            1.0
        };
        tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_ratio))
    }

    /// BM25 score of one chunk for a query given as a multiset of analyzed
    /// terms: duplicated query terms contribute once per occurrence.
    pub fn score(&self, query_terms: &[String], chunk_id: &str) -> Result<f64, IndexError> {
        let doc_len = self
            .doc_length(chunk_id)
            .ok_or_else(|| IndexError::UnknownChunkId(chunk_id.to_string()))?;
        let mut total = 0.0;
        for term in query_terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let Ok(pos) = list.binary_search_by(|p| p.chunk_id.as_str().cmp(chunk_id)) else {
                continue;
            };
            total += self.idf(term) * self.term_weight(list[pos].term_frequency, doc_len);
        }
        Ok(total)
    }

    /// Top-`k` chunks for a query text, scored with BM25 and ordered by
    /// descending score, ties broken by ascending chunk id. Only chunks
    /// sharing at least one term with the query appear. `exclude` drops one
    /// chunk id from the result (self-exclusion when target and source
    /// corpora overlap).
    pub fn retrieve(
        &self,
        query_id: &str,
        query_text: &str,
        k: usize,
        exclude: Option<&str>,
    ) -> RankedCandidates {
        assert!(k >= 1, "k must be at least 1");
        let terms = text::index_tokens(query_text);
        let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for p in list {
                let w = idf * self.term_weight(p.term_frequency, self.doc_lengths[&p.chunk_id]);
                *scores.entry(p.chunk_id.as_str()).or_insert(0.0) += w;
            }
        }
        let entries = scores
            .into_iter()
            .filter(|(id, _)| Some(*id) != exclude)
            .map(|(id, score)| ScoredChunk {
                chunk_id: id.to_string(),
                score,
            })
            .collect();
        let mut ranked = RankedCandidates::from_unsorted(query_id, entries, "bm25");
        ranked.entries.truncate(k);
        ranked
    }
}

/// A scored candidate chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk_id: String,
    pub score: f64,
}

/// An ordered candidate list: scores non-increasing, ties broken by
/// ascending chunk id, no duplicate ids. Every reranker consumes and
/// produces this type; rerankers emit a permutation of their input ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidates {
    pub query_id: String,
    pub entries: Vec<ScoredChunk>,
    /// Identity of the scorer that produced this ordering.
    pub scorer: String,
}

impl RankedCandidates {
    /// Sorts entries into the canonical order (descending score, then
    /// ascending chunk id).
    pub fn from_unsorted(
        query_id: impl Into<String>,
        mut entries: Vec<ScoredChunk>,
        scorer: impl Into<String>,
    ) -> Self {
        entries.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.chunk_id.cmp(&b.chunk_id))
        });
        Self {
            query_id: query_id.into(),
            entries,
            scorer: scorer.into(),
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.chunk_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks the ordering and uniqueness invariants; used by tests.
    pub fn is_valid(&self) -> bool {
        let sorted = self.entries.windows(2).all(|w| {
            w[0].score > w[1].score
                || (w[0].score == w[1].score && w[0].chunk_id < w[1].chunk_id)
        });
        let mut ids: Vec<&str> = self.ids().collect();
        ids.sort_unstable();
        ids.dedup();
        sorted && ids.len() == self.entries.len()
    }
}
