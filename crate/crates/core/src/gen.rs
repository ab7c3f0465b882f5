//! Generative reranking by masked-span likelihood, training-set construction
//! at the three supervision levels, and span prediction for the generation
//! experiments.
//!
//! A [`SpanInfiller`] scores how well a candidate source explains the hidden
//! span of a masked target; candidates are reranked by ascending loss (the
//! most useful source first). Bindings to real sequence-to-sequence models
//! live outside this crate; the stubs here are deterministic and make the
//! scoring contracts testable without model weights.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::bm25::{IndexedCorpus, RankedCandidates, ScoredChunk};
use crate::corpus::{
    mask_span, AttributionExample, Chunk, CorpusError, MaskedTarget, Supervision, MASK_SENTINEL,
};
use crate::text;

/// Reserved token separating source text from observed target text when a
/// binding needs a single conditioning string.
pub const SOURCE_SEPARATOR: &str = "<SRC_SEP>";

/// Conditioning input for span infilling: source first, then the masked
/// target, one separator between them.
pub fn conditioning_input(source_text: &str, observed_text: &str) -> String {
    let mut out = String::with_capacity(source_text.len() + observed_text.len() + 16);
    out.push_str(source_text);
    out.push(' ');
    out.push_str(SOURCE_SEPARATOR);
    out.push(' ');
    out.push_str(observed_text);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("observed text contains no mask sentinel")]
    NoSentinel,
    #[error("example names unknown target chunk {0}")]
    UnknownTargetChunk(String),
    #[error("example for chunk {0} has no gold chunk ids")]
    MissingGold(String),
    #[error("baseline retrieval returned no candidates for chunk {0}")]
    NoCandidates(String),
    #[error("no source text available for chunk {0}")]
    MissingSourceText(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("non-finite score from infiller for {0}")]
    NonFinite(String),
    #[error(transparent)]
    Mask(#[from] CorpusError),
    #[error("model failure for {id}: {message}")]
    Model { id: String, message: String },
}

/// A masked-span scoring and infilling model.
///
/// `span_nll` returns the negative log-likelihood of `span_text`, summed
/// over its subword tokens, conditioned on the source and the observed
/// target. Both scoring and greedy prediction are deterministic in eval
/// mode.
pub trait SpanInfiller {
    /// Identity tag recorded in scorer names and run metadata.
    fn id(&self) -> String;

    fn span_nll(
        &self,
        observed_text: &str,
        source_text: &str,
        span_text: &str,
    ) -> Result<f64, GenError>;

    /// Greedy prediction of the hidden span given the observed target and a
    /// candidate source.
    fn predict_span(&self, observed_text: &str, source_text: &str) -> Result<String, GenError>;

    /// Subword count under this model's tokenizer. Stubs count whitespace
    /// tokens, which keeps the tests model-free.
    fn subword_count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

/// Scoring options; `length_normalize` divides the summed NLL by the span's
/// subword count. Off by default: the loss is the summed log likelihood of
/// the masked span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GenScoring {
    pub length_normalize: bool,
}

/// Loss of one candidate source for a masked target: L >= 0, lower means the
/// source is more useful for generating the hidden span.
pub fn score_source(
    infiller: &dyn SpanInfiller,
    masked: &MaskedTarget,
    source_text: &str,
    scoring: &GenScoring,
) -> Result<f64, GenError> {
    let nll = infiller.span_nll(&masked.observed_text, source_text, &masked.masked_text)?;
    if !nll.is_finite() {
        return Err(GenError::NonFinite(infiller.id()));
    }
    debug_assert!(nll >= 0.0, "span NLL must be non-negative");
    if scoring.length_normalize {
        let n = infiller.subword_count(&masked.masked_text).max(1);
        Ok(nll / n as f64)
    } else {
        Ok(nll)
    }
}

/// Reorders candidates by ascending loss (most useful source first), ties
/// broken by ascending chunk id. Stored scores are the span log-likelihoods
/// (-L), so the ranked list keeps its non-increasing score invariant.
pub fn rerank_by_generation(
    infiller: &dyn SpanInfiller,
    masked: &MaskedTarget,
    candidates: &RankedCandidates,
    texts: &BTreeMap<String, String>,
    scoring: &GenScoring,
) -> Result<RankedCandidates, GenError> {
    let mut entries = Vec::with_capacity(candidates.len());
    for id in candidates.ids() {
        let text = texts
            .get(id)
            .ok_or_else(|| GenError::MissingSourceText(id.to_string()))?;
        let loss = score_source(infiller, masked, text, scoring)?;
        entries.push(ScoredChunk {
            chunk_id: id.to_string(),
            score: -loss,
        });
    }
    Ok(RankedCandidates::from_unsorted(
        candidates.query_id.clone(),
        entries,
        format!("gen:{}", infiller.id()),
    ))
}

/// Greedy span prediction followed by normalized exact match (NFC, case
/// fold, collapsed whitespace) against the gold span.
pub fn predict_and_match(
    infiller: &dyn SpanInfiller,
    masked: &MaskedTarget,
    source_text: &str,
    gold_span: &str,
) -> Result<bool, GenError> {
    let predicted = infiller.predict_span(&masked.observed_text, source_text)?;
    Ok(text::normalize_for_match(&predicted) == text::normalize_for_match(gold_span))
}

// ---------------------------------------------------------------------------
// Training-set construction
// ---------------------------------------------------------------------------

/// Where a training pair's source came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Annotated gold pairing.
    GoldSource,
    /// The baseline retriever's top-ranked candidate substituted for the
    /// gold source (s').
    Top1Retrieved,
    /// Pairing produced by reuse alignment.
    Aligned,
}

/// One span-infilling training pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub masked: MaskedTarget,
    pub source_text: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingSetOptions {
    /// Maximum subword length of the masked region.
    pub subword_budget: usize,
    /// Whether semi-supervised retrieval excludes the target chunk itself
    /// (matters when source and target corpora overlap).
    pub exclude_self: bool,
}

impl Default for TrainingSetOptions {
    fn default() -> Self {
        Self {
            subword_budget: 100,
            exclude_self: true,
        }
    }
}

/// Builds span-infilling training pairs at the requested supervision level.
///
/// - `Full`: the source is a gold chunk (the smallest gold id, for
///   determinism).
/// - `Semi`: the source is the baseline retriever's top-ranked candidate for
///   the target chunk's text, self-excluded; gold fields are never read.
/// - `Pseudo`: like `Full` but over machine-produced pairings from reuse
///   alignment (see `align::pseudo_label`), recorded as such.
pub fn build_training_set(
    examples: &[AttributionExample],
    mode: Supervision,
    index: &IndexedCorpus,
    target_chunks: &BTreeMap<String, Chunk>,
    source_texts: &BTreeMap<String, String>,
    infiller: &dyn SpanInfiller,
    opts: &TrainingSetOptions,
) -> Result<Vec<TrainingExample>, GenError> {
    let mut out = Vec::with_capacity(examples.len());
    for ex in examples {
        let chunk = target_chunks
            .get(&ex.target.chunk_id)
            .ok_or_else(|| GenError::UnknownTargetChunk(ex.target.chunk_id.clone()))?;
        let masked = mask_span(chunk, &ex.target, opts.subword_budget, |t| {
            infiller.subword_count(t)
        })?;

        let (source_id, provenance) = match mode {
            Supervision::Full | Supervision::Pseudo => {
                let gold = ex
                    .gold_chunk_ids
                    .as_ref()
                    .and_then(|ids| ids.iter().next())
                    .ok_or_else(|| GenError::MissingGold(ex.target.chunk_id.clone()))?;
                let prov = if mode == Supervision::Full {
                    Provenance::GoldSource
                } else {
                    Provenance::Aligned
                };
                (gold.clone(), prov)
            }
            Supervision::Semi => {
                let exclude = opts.exclude_self.then_some(chunk.chunk_id.as_str());
                let ranked = index.retrieve(&chunk.chunk_id, &chunk.text, 1, exclude);
                let top = ranked
                    .entries
                    .first()
                    .ok_or_else(|| GenError::NoCandidates(ex.target.chunk_id.clone()))?;
                (top.chunk_id.clone(), Provenance::Top1Retrieved)
            }
        };

        let source_text = source_texts
            .get(&source_id)
            .ok_or_else(|| GenError::MissingSourceText(source_id.clone()))?;
        out.push(TrainingExample {
            masked,
            source_text: source_text.clone(),
            provenance,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Infiller implementations
// ---------------------------------------------------------------------------

/// Uniform stub: every subword token has probability 1/vocab_size regardless
/// of conditioning, and prediction is empty. Models a generator with no
/// task knowledge at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformInfiller {
    pub vocab_size: usize,
}

impl UniformInfiller {
    pub fn new(vocab_size: usize) -> Self {
        assert!(vocab_size >= 2, "vocab size must be at least 2");
        Self { vocab_size }
    }
}

impl SpanInfiller for UniformInfiller {
    fn id(&self) -> String {
        format!("uniform(V={})", self.vocab_size)
    }

    fn span_nll(&self, _observed: &str, _source: &str, span_text: &str) -> Result<f64, GenError> {
        let n = self.subword_count(span_text) as f64;
        Ok(n * libm::log(self.vocab_size as f64))
    }

    fn predict_span(&self, _observed: &str, _source: &str) -> Result<String, GenError> {
        Ok(String::new())
    }
}

/// Copy oracle: each span token has probability `p_match` when it occurs in
/// the source and `p_miss` otherwise, with no cross-token conditioning.
/// Prediction anchors the observed tokens around the sentinel in the source
/// and copies the tokens between the anchors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopyOracleInfiller {
    pub p_match: f64,
    pub p_miss: f64,
    /// Maximum anchor length (tokens each side) used by prediction.
    pub anchor: usize,
}

impl Default for CopyOracleInfiller {
    fn default() -> Self {
        Self {
            p_match: 0.9,
            p_miss: 0.1,
            anchor: 3,
        }
    }
}

impl SpanInfiller for CopyOracleInfiller {
    fn id(&self) -> String {
        format!("copy-oracle(p={},q={})", self.p_match, self.p_miss)
    }

    fn span_nll(&self, _observed: &str, source: &str, span_text: &str) -> Result<f64, GenError> {
        let source_tokens: BTreeSet<&str> = source.split_whitespace().collect();
        let mut nll = 0.0;
        for tok in span_text.split_whitespace() {
            let p = if source_tokens.contains(tok) {
                self.p_match
            } else {
                self.p_miss
            };
            nll -= libm::log(p);
        }
        Ok(nll)
    }

    fn predict_span(&self, observed: &str, source: &str) -> Result<String, GenError> {
        let obs: Vec<&str> = observed.split_whitespace().collect();
        let sentinel = obs
            .iter()
            .position(|t| *t == MASK_SENTINEL)
            .ok_or(GenError::NoSentinel)?;
        let pre = &obs[..sentinel];
        let post = &obs[sentinel + 1..];
        let src: Vec<&str> = source.split_whitespace().collect();

        for a in (1..=self.anchor).rev() {
            if pre.len() < a || post.len() < a || src.len() < a {
                continue;
            }
            let pre_anchor = &pre[pre.len() - a..];
            let post_anchor = &post[..a];
            for i in a..=src.len() {
                if &src[i - a..i] != pre_anchor {
                    continue;
                }
                for j in i..=(src.len() - a) {
                    if &src[j..j + a] == post_anchor {
                        return Ok(src[i..j].join(" "));
                    }
                }
            }
        }
        Ok(String::new())
    }
}

/// Lookup-table stub: the span NLL depends only on which source text is
/// presented. Used to pin exact likelihood values in tests of the marginal
/// objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableInfiller {
    nll_by_source: BTreeMap<String, f64>,
    default_nll: f64,
}

impl TableInfiller {
    pub fn new(nll_by_source: BTreeMap<String, f64>, default_nll: f64) -> Self {
        Self {
            nll_by_source,
            default_nll,
        }
    }
}

impl SpanInfiller for TableInfiller {
    fn id(&self) -> String {
        format!("table(n={})", self.nll_by_source.len())
    }

    fn span_nll(&self, _observed: &str, source: &str, _span: &str) -> Result<f64, GenError> {
        Ok(*self.nll_by_source.get(source).unwrap_or(&self.default_nll))
    }

    fn predict_span(&self, _observed: &str, _source: &str) -> Result<String, GenError> {
        Ok(String::new())
    }
}

// ---------------------------------------------------------------------------
// Trainable copy-gate model
// ---------------------------------------------------------------------------

/// Span-infilling hyperparameters. All randomness derives from `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyperparams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainHyperparams {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

/// Per-epoch mean training loss, recorded in training order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_mean_loss: Vec<f64>,
}

/// A tiny trainable infiller: a mixture of a uniform background distribution
/// and a copy distribution over the source's tokens,
/// `p(tok) = (1-g)/V + g * count(tok in source)/len(source)`,
/// with a single trainable gate `g = sigmoid(theta)`. Fitting the gate by
/// gradient descent is enough to learn that copying from the source explains
/// the hidden span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopyGateInfiller {
    gate_logit: f64,
    vocab_size: usize,
    mean_span_tokens: usize,
}

impl CopyGateInfiller {
    pub fn new(vocab_size: usize) -> Self {
        assert!(vocab_size >= 2, "vocab size must be at least 2");
        Self {
            gate_logit: 0.0,
            vocab_size,
            mean_span_tokens: 8,
        }
    }

    /// Reassembles a trained model from persisted parts.
    pub fn from_parts(gate_logit: f64, vocab_size: usize, mean_span_tokens: usize) -> Self {
        Self {
            gate_logit,
            vocab_size: vocab_size.max(2),
            mean_span_tokens: mean_span_tokens.max(1),
        }
    }

    pub fn gate_logit(&self) -> f64 {
        self.gate_logit
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn mean_span_tokens(&self) -> usize {
        self.mean_span_tokens
    }

    fn gate(&self) -> f64 {
        1.0 / (1.0 + libm::exp(-self.gate_logit))
    }

    fn token_prob(&self, copy_prob: f64) -> f64 {
        let g = self.gate();
        (1.0 - g) / self.vocab_size as f64 + g * copy_prob
    }

    /// One deterministic gradient-descent fit of the copy gate. Returns the
    /// trained model and the per-epoch mean loss curve; the receiver is
    /// untouched.
    pub fn train(
        &self,
        training_set: &[TrainingExample],
        hp: &TrainHyperparams,
    ) -> Result<(Self, TrainReport), GenError> {
        if training_set.is_empty() {
            return Err(GenError::EmptyTrainingSet);
        }

        // Vocabulary: distinct tokens seen anywhere in the training set,
        // plus one out-of-vocabulary slot.
        let mut vocab: BTreeSet<&str> = BTreeSet::new();
        let mut span_token_total = 0usize;
        for ex in training_set {
            vocab.extend(ex.source_text.split_whitespace());
            vocab.extend(
                ex.masked
                    .observed_text
                    .split_whitespace()
                    .filter(|t| *t != MASK_SENTINEL),
            );
            vocab.extend(ex.masked.masked_text.split_whitespace());
            span_token_total += ex.masked.masked_text.split_whitespace().count();
        }
        let vocab_size = (vocab.len() + 1).max(2);
        let mean_span_tokens =
            ((span_token_total as f64 / training_set.len() as f64) + 0.5) as usize;

        let mut rng = ChaCha12Rng::seed_from_u64(hp.seed);
        let mut model = Self {
            gate_logit: rng.gen_range(-0.01..0.01),
            vocab_size,
            mean_span_tokens: mean_span_tokens.max(1),
        };

        let mut report = TrainReport {
            epoch_mean_loss: Vec::with_capacity(hp.epochs),
        };
        for epoch in 0..hp.epochs {
            let mut loss_sum = 0.0;
            let mut grad_sum = 0.0;
            let g = model.gate();
            for ex in training_set {
                let src: Vec<&str> = ex.source_text.split_whitespace().collect();
                let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
                for t in &src {
                    *counts.entry(t).or_insert(0) += 1;
                }
                let src_len = src.len() as f64;
                for tok in ex.masked.masked_text.split_whitespace() {
                    let copy = if src_len > 0.0 {
                        f64::from(*counts.get(tok).unwrap_or(&0)) / src_len
                    } else {
                        0.0
                    };
                    let p = model.token_prob(copy);
                    loss_sum -= libm::log(p);
                    // d(-ln p)/d gate_logit = -(copy - 1/V)/p * g(1-g)
                    grad_sum -= (copy - 1.0 / vocab_size as f64) / p * g * (1.0 - g);
                }
            }
            let n = training_set.len() as f64;
            let mean_loss = loss_sum / n;
            if !mean_loss.is_finite() || !grad_sum.is_finite() {
                return Err(GenError::Diverged { epoch });
            }
            report.epoch_mean_loss.push(mean_loss);
            model.gate_logit -= hp.learning_rate * grad_sum / n;
        }
        Ok((model, report))
    }
}

impl SpanInfiller for CopyGateInfiller {
    fn id(&self) -> String {
        format!(
            "copy-gate(V={},gate={:.4})",
            self.vocab_size,
            self.gate_logit
        )
    }

    fn span_nll(&self, _observed: &str, source: &str, span_text: &str) -> Result<f64, GenError> {
        let src: Vec<&str> = source.split_whitespace().collect();
        let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
        for t in &src {
            *counts.entry(t).or_insert(0) += 1;
        }
        let src_len = src.len() as f64;
        let mut nll = 0.0;
        for tok in span_text.split_whitespace() {
            let copy = if src_len > 0.0 {
                f64::from(*counts.get(tok).unwrap_or(&0)) / src_len
            } else {
                0.0
            };
            nll -= libm::log(self.token_prob(copy));
        }
        Ok(nll)
    }

    /// Greedy decode: the source window of the learned mean span length with
    /// the highest likelihood under the mixture (earliest window on ties).
    fn predict_span(&self, _observed: &str, source: &str) -> Result<String, GenError> {
        let src: Vec<&str> = source.split_whitespace().collect();
        if src.is_empty() {
            return Ok(String::new());
        }
        let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
        for t in &src {
            *counts.entry(t).or_insert(0) += 1;
        }
        let src_len = src.len() as f64;
        let w = self.mean_span_tokens.min(src.len());
        let mut best: Option<(f64, usize)> = None;
        for start in 0..=(src.len() - w) {
            let ll: f64 = src[start..start + w]
                .iter()
                .map(|t| {
                    let copy = f64::from(counts[t]) / src_len;
                    libm::log(self.token_prob(copy))
                })
                .sum();
            if best.map_or(true, |(b, _)| ll > b) {
                best = Some((ll, start));
            }
        }
        let (_, start) = best.unwrap();
        Ok(src[start..start + w].join(" "))
    }
}
