//! Text-reuse detection for pseudo-labeling: character-shingle candidate
//! pairing plus token-level local alignment. Pairs of chunks that share many
//! character n-grams are aligned, and high-identity regions become machine
//! supervision: the target-side region is the span of interest and the
//! source chunk is the pairing.
//!
//! This is an analog of a cluster-based reuse detector, not a replica of
//! one: pair scoring and alignment are per-pair and independent, and output
//! order is the deterministic sort documented on each function.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{AttributionExample, Chunk, SpanOfInterest, Supervision};
use crate::text;

/// All length-`n` character windows of the NFC-normalized text.
pub fn shingle(text: &str, n: usize) -> BTreeSet<String> {
    assert!(n >= 1, "shingle length must be at least 1");
    let chars: Vec<char> = text.nfc().collect();
    if chars.len() < n {
        return BTreeSet::new();
    }
    chars.windows(n).map(|w| w.iter().collect()).collect()
}

/// A cross-corpus chunk pair sharing at least `min_shared` distinct
/// character shingles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub target_chunk_id: String,
    pub source_chunk_id: String,
    pub shared_count: usize,
}

/// All cross-corpus pairs whose shingle intersection reaches `min_shared`,
/// sorted by descending shared count, then by (target id, source id).
pub fn candidate_pairs(
    targets: &[Chunk],
    sources: &[Chunk],
    n: usize,
    min_shared: usize,
) -> Vec<CandidatePair> {
    assert!(min_shared >= 1, "min_shared must be at least 1");
    let target_sets: Vec<BTreeSet<String>> =
        targets.iter().map(|c| shingle(&c.text, n)).collect();
    let mut inverted: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, set) in target_sets.iter().enumerate() {
        for sh in set {
            inverted.entry(sh.as_str()).or_default().push(i);
        }
    }

    let mut out = Vec::new();
    for source in sources {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for sh in shingle(&source.text, n) {
            if let Some(t_idxs) = inverted.get(sh.as_str()) {
                for &t in t_idxs {
                    *counts.entry(t).or_insert(0) += 1;
                }
            }
        }
        for (t, count) in counts {
            if count >= min_shared {
                out.push(CandidatePair {
                    target_chunk_id: targets[t].chunk_id.clone(),
                    source_chunk_id: source.chunk_id.clone(),
                    shared_count: count,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        b.shared_count.cmp(&a.shared_count).then_with(|| {
            (&a.target_chunk_id, &a.source_chunk_id).cmp(&(&b.target_chunk_id, &b.source_chunk_id))
        })
    });
    out
}

/// Alignment scoring. `match_score > 0 >= mismatch` and `gap < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignScores {
    pub match_score: f64,
    pub mismatch: f64,
    pub gap: f64,
}

impl Default for AlignScores {
    fn default() -> Self {
        Self {
            match_score: 2.0,
            mismatch: -1.0,
            gap: -1.0,
        }
    }
}

/// A maximal local alignment between two token sequences. Spans are
/// half-open token ranges; identity is matched columns over all aligned
/// columns (gaps included).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub a_start: usize,
    pub a_end: usize,
    pub b_start: usize,
    pub b_end: usize,
    pub score: f64,
    pub identity: f64,
}

/// Best-scoring local alignment of two token sequences by dynamic
/// programming with linear gap penalties. Returns `None` when the best
/// score is not positive. Among equally scoring alignments the one with the
/// smallest `(a_start, b_start)` wins.
pub fn local_align(a: &[&str], b: &[&str], scores: &AlignScores) -> Option<Alignment> {
    assert!(
        scores.match_score > 0.0 && scores.match_score >= scores.mismatch && scores.gap < 0.0,
        "invalid alignment scores"
    );
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let (m, n) = (a.len(), b.len());
    // Full matrix; chunk inputs are at most a few hundred tokens.
    let mut h = alloc::vec![0.0f64; (m + 1) * (n + 1)];
    let idx = |i: usize, j: usize| i * (n + 1) + j;
    let mut best = 0.0f64;
    for i in 1..=m {
        for j in 1..=n {
            let sub = if a[i - 1] == b[j - 1] {
                scores.match_score
            } else {
                scores.mismatch
            };
            let mut v = h[idx(i - 1, j - 1)] + sub;
            v = v.max(h[idx(i - 1, j)] + scores.gap);
            v = v.max(h[idx(i, j - 1)] + scores.gap);
            v = v.max(0.0);
            h[idx(i, j)] = v;
            best = best.max(v);
        }
    }
    if best <= 0.0 {
        return None;
    }

    // Trace back from every maximal cell; keep the smallest-start alignment.
    let mut chosen: Option<Alignment> = None;
    for i in 1..=m {
        for j in 1..=n {
            if h[idx(i, j)] != best {
                continue;
            }
            let al = traceback(&h, a, b, n, i, j, scores);
            let key = (al.a_start, al.b_start, al.a_end, al.b_end);
            if chosen
                .map_or(true, |c| key < (c.a_start, c.b_start, c.a_end, c.b_end))
            {
                chosen = Some(al);
            }
        }
    }
    chosen
}

fn traceback(
    h: &[f64],
    a: &[&str],
    b: &[&str],
    n: usize,
    end_i: usize,
    end_j: usize,
    scores: &AlignScores,
) -> Alignment {
    let idx = |i: usize, j: usize| i * (n + 1) + j;
    let (mut i, mut j) = (end_i, end_j);
    let score = h[idx(i, j)];
    let mut matches = 0usize;
    let mut columns = 0usize;
    while i > 0 && j > 0 && h[idx(i, j)] > 0.0 {
        let cur = h[idx(i, j)];
        let is_match = a[i - 1] == b[j - 1];
        let sub = if is_match {
            scores.match_score
        } else {
            scores.mismatch
        };
        // Prefer diagonal, then the a-side gap, then the b-side gap; the
        // preferences only pick among equal-score paths.
        if cur == h[idx(i - 1, j - 1)] + sub {
            if is_match {
                matches += 1;
            }
            columns += 1;
            i -= 1;
            j -= 1;
        } else if cur == h[idx(i - 1, j)] + scores.gap {
            columns += 1;
            i -= 1;
        } else {
            columns += 1;
            j -= 1;
        }
    }
    Alignment {
        a_start: i,
        a_end: end_i,
        b_start: j,
        b_end: end_j,
        score,
        identity: matches as f64 / columns as f64,
    }
}

/// A reused region between a target chunk and a source chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRegion {
    pub target_chunk_id: String,
    pub source_chunk_id: String,
    /// Half-open token span in the target chunk.
    pub target_span: (usize, usize),
    /// Half-open token span in the source chunk.
    pub source_span: (usize, usize),
    pub score: f64,
    pub identity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelParams {
    pub shingle_n: usize,
    pub min_shared: usize,
    /// Minimum identity for a region to count as reuse.
    pub min_identity: f64,
    /// Minimum target-side region length in tokens.
    pub min_span_tokens: usize,
    pub scores: AlignScores,
}

impl Default for PseudoLabelParams {
    fn default() -> Self {
        Self {
            shingle_n: 10,
            min_shared: 5,
            min_identity: 0.8,
            min_span_tokens: 5,
            scores: AlignScores::default(),
        }
    }
}

/// The best qualifying region of every candidate pair, sorted by
/// (target id, source id).
pub fn align_regions(
    targets: &[Chunk],
    sources: &[Chunk],
    params: &PseudoLabelParams,
) -> Vec<AlignmentRegion> {
    let target_by_id: BTreeMap<&str, &Chunk> =
        targets.iter().map(|c| (c.chunk_id.as_str(), c)).collect();
    let source_by_id: BTreeMap<&str, &Chunk> =
        sources.iter().map(|c| (c.chunk_id.as_str(), c)).collect();

    let mut out = Vec::new();
    for pair in candidate_pairs(targets, sources, params.shingle_n, params.min_shared) {
        let t = target_by_id[pair.target_chunk_id.as_str()];
        let s = source_by_id[pair.source_chunk_id.as_str()];
        let t_toks = text::tokens(&t.text);
        let s_toks = text::tokens(&s.text);
        let Some(al) = local_align(&t_toks, &s_toks, &params.scores) else {
            continue;
        };
        if al.identity >= params.min_identity && al.a_end - al.a_start >= params.min_span_tokens {
            out.push(AlignmentRegion {
                target_chunk_id: t.chunk_id.clone(),
                source_chunk_id: s.chunk_id.clone(),
                target_span: (al.a_start, al.a_end),
                source_span: (al.b_start, al.b_end),
                score: al.score,
                identity: al.identity,
            });
        }
    }
    out.sort_by(|a, b| {
        (&a.target_chunk_id, &a.source_chunk_id).cmp(&(&b.target_chunk_id, &b.source_chunk_id))
    });
    out
}

/// Pseudo-labeled attribution examples: one per qualifying (target, source)
/// pair, with the target-side region as the span of interest and the source
/// chunk as the machine-produced pairing.
pub fn pseudo_label(
    targets: &[Chunk],
    sources: &[Chunk],
    params: &PseudoLabelParams,
) -> Vec<AttributionExample> {
    align_regions(targets, sources, params)
        .into_iter()
        .map(|r| AttributionExample {
            target: SpanOfInterest {
                chunk_id: r.target_chunk_id,
                token_start: r.target_span.0,
                token_end: r.target_span.1,
            },
            supervision: Supervision::Pseudo,
            gold_work_id: None,
            gold_chunk_ids: Some([r.source_chunk_id].into_iter().collect()),
        })
        .collect()
}
