//! Generation-guided retrieval training: a marginal-likelihood objective
//! over the candidate pool (RAG-Sequence form) that tunes only the query
//! encoder against a frozen generator and frozen, precomputed candidate
//! embeddings, plus reranking with the tuned encoder.
//!
//! The marginal for one target is `sum_s p_retriever(s|q) * p_gen(span|q,s)`,
//! computed in the log domain. The per-source forward pass keeps memory flat:
//! each source contributes its gradient term one at a time, and the
//! accumulated result equals the joint computation exactly (see
//! [`GradAccumulation`]).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::bm25::{RankedCandidates, ScoredChunk};
use crate::corpus::MaskedTarget;
use crate::embed::{EncoderVector, HashProjectionEncoder, TextEncoder};
use crate::gen::{GenError, SpanInfiller};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GgrError {
    #[error("no frozen embedding for candidate {0}")]
    MissingEmbedding(String),
    #[error("no text available for candidate {0}")]
    MissingSourceText(String),
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("non-finite generator output for candidate {0}")]
    NonFiniteGenerator(String),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("doc embedding for {chunk_id} has dimension {got}, encoder has {want}")]
    DimensionMismatch {
        chunk_id: String,
        got: usize,
        want: usize,
    },
    #[error(transparent)]
    Gen(#[from] GenError),
}

/// Per-candidate terms of the marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceLikelihood {
    pub chunk_id: String,
    pub retriever_prob: f64,
    /// Log-likelihood of the masked span under the frozen generator (-NLL).
    pub span_log_likelihood: f64,
}

/// Result of one marginal evaluation: `loss == -marginal_log_likelihood` and
/// the retriever probabilities sum to 1 over the candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GgrBatchResult {
    pub per_source: Vec<SourceLikelihood>,
    pub marginal_log_likelihood: f64,
    pub loss: f64,
}

/// One training item: a masked target, its retrieval query, and the
/// baseline candidate pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GgrExample {
    pub masked: MaskedTarget,
    pub query_text: String,
    pub candidate_ids: Vec<String>,
}

/// How the gradient over sources is assembled. Both orders produce the same
/// result; `PerSource` is the memory-flat formulation used by training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradAccumulation {
    /// Accumulate each source's gradient term separately.
    PerSource,
    /// Combine the per-source weights first, then form the gradient once.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GgrStepReport {
    pub loss: f64,
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let sum: f64 = values.iter().map(|v| libm::exp(v - m)).sum();
    m + libm::log(sum)
}

/// Trainable query encoder plus frozen candidate embeddings.
///
/// The document embeddings are computed once (with the initial encoder) and
/// never change during training; only the query encoder's parameters move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieverState<E: TextEncoder> {
    query_encoder: E,
    doc_embeddings: BTreeMap<String, EncoderVector>,
    temperature: f64,
}

impl<E: TextEncoder> RetrieverState<E> {
    /// Embeds every candidate text once with `query_encoder` and freezes the
    /// result.
    pub fn new(query_encoder: E, doc_texts: &BTreeMap<String, String>, temperature: f64) -> Self {
        assert!(temperature > 0.0, "temperature must be positive");
        let doc_embeddings = doc_texts
            .iter()
            .map(|(id, text)| (id.clone(), query_encoder.encode(text)))
            .collect();
        Self {
            query_encoder,
            doc_embeddings,
            temperature,
        }
    }

    /// Uses caller-supplied frozen embeddings (checkpoint restore, synthetic
    /// tasks).
    pub fn with_doc_embeddings(
        query_encoder: E,
        doc_embeddings: BTreeMap<String, EncoderVector>,
        temperature: f64,
    ) -> Result<Self, GgrError> {
        assert!(temperature > 0.0, "temperature must be positive");
        for (id, v) in &doc_embeddings {
            if v.dim() != query_encoder.dim() {
                return Err(GgrError::DimensionMismatch {
                    chunk_id: id.clone(),
                    got: v.dim(),
                    want: query_encoder.dim(),
                });
            }
        }
        Ok(Self {
            query_encoder,
            doc_embeddings,
            temperature,
        })
    }

    pub fn query_encoder(&self) -> &E {
        &self.query_encoder
    }

    /// Mutable access to the trainable encoder. The doc embeddings stay
    /// frozen regardless.
    pub fn query_encoder_mut(&mut self) -> &mut E {
        &mut self.query_encoder
    }

    pub fn doc_embeddings(&self) -> &BTreeMap<String, EncoderVector> {
        &self.doc_embeddings
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    fn embedding(&self, chunk_id: &str) -> Result<&EncoderVector, GgrError> {
        self.doc_embeddings
            .get(chunk_id)
            .ok_or_else(|| GgrError::MissingEmbedding(chunk_id.to_string()))
    }

    /// Retriever scores for the candidates: dot(query, doc) / temperature.
    fn candidate_scores(
        &self,
        query: &EncoderVector,
        candidate_ids: &[String],
    ) -> Result<Vec<f64>, GgrError> {
        if candidate_ids.is_empty() {
            return Err(GgrError::EmptyCandidates);
        }
        candidate_ids
            .iter()
            .map(|id| {
                let e = self.embedding(id)?;
                let dot: f64 = query.values.iter().zip(&e.values).map(|(a, b)| a * b).sum();
                Ok(dot / self.temperature)
            })
            .collect()
    }

    /// Retriever distribution over the candidate set: softmax of the scaled
    /// dot products, restricted to the pool. Output order matches
    /// `candidate_ids`.
    pub fn retriever_prob(
        &self,
        query_text: &str,
        candidate_ids: &[String],
    ) -> Result<Vec<(String, f64)>, GgrError> {
        let query = self.query_encoder.encode(query_text);
        let scores = self.candidate_scores(&query, candidate_ids)?;
        let lse = log_sum_exp(&scores);
        Ok(candidate_ids
            .iter()
            .zip(&scores)
            .map(|(id, z)| (id.clone(), libm::exp(z - lse)))
            .collect())
    }

    /// Marginal log-likelihood of the masked span over the candidate pool,
    /// computed in the log domain via log-sum-exp of
    /// `log p_retriever + span log-likelihood`. Each source's generator pass
    /// runs independently (one source at a time).
    pub fn rag_sequence_marginal(
        &self,
        generator: &dyn SpanInfiller,
        masked: &MaskedTarget,
        query_text: &str,
        candidate_ids: &[String],
        texts: &BTreeMap<String, String>,
    ) -> Result<GgrBatchResult, GgrError> {
        let query = self.query_encoder.encode(query_text);
        let scores = self.candidate_scores(&query, candidate_ids)?;
        let lse = log_sum_exp(&scores);

        let mut per_source = Vec::with_capacity(candidate_ids.len());
        let mut joint_terms = Vec::with_capacity(candidate_ids.len());
        for (id, z) in candidate_ids.iter().zip(&scores) {
            let text = texts
                .get(id)
                .ok_or_else(|| GgrError::MissingSourceText(id.clone()))?;
            let nll = generator.span_nll(&masked.observed_text, text, &masked.masked_text)?;
            if !nll.is_finite() {
                return Err(GgrError::NonFiniteGenerator(id.clone()));
            }
            let log_p = z - lse;
            per_source.push(SourceLikelihood {
                chunk_id: id.clone(),
                retriever_prob: libm::exp(log_p),
                span_log_likelihood: -nll,
            });
            joint_terms.push(log_p - nll);
        }
        let marginal_log_likelihood = log_sum_exp(&joint_terms);
        debug_assert!(
            (per_source.iter().map(|s| s.retriever_prob).sum::<f64>() - 1.0).abs() < 1e-9
        );
        Ok(GgrBatchResult {
            per_source,
            marginal_log_likelihood,
            loss: -marginal_log_likelihood,
        })
    }

    /// Reranking with the tuned encoder: identical contract to embedding
    /// reranking, but scores are the training-time retriever scores
    /// (dot product / temperature) against the frozen doc embeddings.
    pub fn rerank_with_tuned_encoder(
        &self,
        target_text: &str,
        candidates: &RankedCandidates,
    ) -> Result<RankedCandidates, GgrError> {
        let query = self.query_encoder.encode(target_text);
        let mut entries = Vec::with_capacity(candidates.len());
        for id in candidates.ids() {
            let e = self.embedding(id)?;
            let dot: f64 = query.values.iter().zip(&e.values).map(|(a, b)| a * b).sum();
            entries.push(ScoredChunk {
                chunk_id: id.to_string(),
                score: dot / self.temperature,
            });
        }
        Ok(RankedCandidates::from_unsorted(
            candidates.query_id.clone(),
            entries,
            format!("ggr:{}", self.query_encoder.id()),
        ))
    }
}

// ---------------------------------------------------------------------------
// Trainable linear query encoder
// ---------------------------------------------------------------------------

/// Linear query encoder over deterministic hash features:
/// `embedding = W * features(text)`. The feature map is fixed; only `W`
/// trains. Small enough that its gradient has a closed form, which the test
/// suite checks against finite differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEncoder {
    featurizer: HashProjectionEncoder,
    /// Row-major `d_out x d_in`.
    weights: Vec<f64>,
    d_out: usize,
    d_in: usize,
}

impl LinearEncoder {
    /// Seeded initialization: the feature map and the weight draw both
    /// derive from `seed`.
    pub fn new(d_out: usize, d_in: usize, seed: u64) -> Self {
        assert!(d_out >= 1 && d_in >= 1);
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x517c_c1b7_2722_0a95);
        let weights = (0..d_out * d_in)
            .map(|_| rng.gen_range(-0.1..0.1))
            .collect();
        Self {
            featurizer: HashProjectionEncoder::new(d_in, seed),
            weights,
            d_out,
            d_in,
        }
    }

    pub fn from_weights(d_out: usize, d_in: usize, feature_seed: u64, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), d_out * d_in);
        Self {
            featurizer: HashProjectionEncoder::new(d_in, feature_seed),
            weights,
            d_out,
            d_in,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn feature_seed(&self) -> u64 {
        self.featurizer.seed()
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    /// Fixed feature vector of a text (unit norm unless the text is empty).
    pub fn features(&self, text: &str) -> Vec<f64> {
        self.featurizer.encode(text).values
    }
}

impl TextEncoder for LinearEncoder {
    fn id(&self) -> String {
        format!(
            "linear({}x{},seed={})",
            self.d_out,
            self.d_in,
            self.featurizer.seed()
        )
    }

    fn dim(&self) -> usize {
        self.d_out
    }

    fn encode(&self, text: &str) -> EncoderVector {
        let x = self.features(text);
        let mut out = vec![0.0; self.d_out];
        for (r, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.d_in..(r + 1) * self.d_in];
            *slot = row.iter().zip(&x).map(|(w, xv)| w * xv).sum();
        }
        EncoderVector::new(out)
    }
}

impl RetrieverState<LinearEncoder> {
    /// Mean loss over the batch and its gradient with respect to the query
    /// encoder weights only. The generator and the doc embeddings never
    /// change.
    ///
    /// For one example with retriever probabilities `p` and posterior
    /// weights `w` (the per-source share of the marginal), the gradient of
    /// the loss with respect to the weight matrix is
    /// `sum_j (p_j - w_j) * outer(e_j, x) / temperature`.
    pub fn batch_loss_and_gradient(
        &self,
        generator: &dyn SpanInfiller,
        batch: &[GgrExample],
        texts: &BTreeMap<String, String>,
        mode: GradAccumulation,
    ) -> Result<(f64, Vec<f64>), GgrError> {
        let enc = &self.query_encoder;
        let (d_out, d_in) = (enc.d_out(), enc.d_in());
        let mut grad = vec![0.0f64; d_out * d_in];
        let mut total_loss = 0.0;

        for ex in batch {
            let x = enc.features(&ex.query_text);
            let query = enc.encode(&ex.query_text);
            let scores = self.candidate_scores(&query, &ex.candidate_ids)?;
            let lse = log_sum_exp(&scores);

            let mut joint_terms = Vec::with_capacity(ex.candidate_ids.len());
            let mut probs = Vec::with_capacity(ex.candidate_ids.len());
            for (id, z) in ex.candidate_ids.iter().zip(&scores) {
                let text = texts
                    .get(id)
                    .ok_or_else(|| GgrError::MissingSourceText(id.clone()))?;
                let nll =
                    generator.span_nll(&ex.masked.observed_text, text, &ex.masked.masked_text)?;
                if !nll.is_finite() {
                    return Err(GgrError::NonFiniteGenerator(id.clone()));
                }
                probs.push(libm::exp(z - lse));
                joint_terms.push(z - lse - nll);
            }
            let mll = log_sum_exp(&joint_terms);
            total_loss -= mll;

            match mode {
                GradAccumulation::PerSource => {
                    // One source at a time: each forward pass contributes its
                    // own gradient term before the next source is touched.
                    for (j, id) in ex.candidate_ids.iter().enumerate() {
                        let w_j = libm::exp(joint_terms[j] - mll);
                        let coef = (probs[j] - w_j) / self.temperature;
                        let e = &self.doc_embeddings[id];
                        for r in 0..d_out {
                            let er = coef * e.values[r];
                            let row = &mut grad[r * d_in..(r + 1) * d_in];
                            for (slot, xv) in row.iter_mut().zip(&x) {
                                *slot += er * xv;
                            }
                        }
                    }
                }
                GradAccumulation::Joint => {
                    let mut v = vec![0.0f64; d_out];
                    for (j, id) in ex.candidate_ids.iter().enumerate() {
                        let w_j = libm::exp(joint_terms[j] - mll);
                        let e = &self.doc_embeddings[id];
                        for (slot, ev) in v.iter_mut().zip(&e.values) {
                            *slot += (probs[j] - w_j) * ev;
                        }
                    }
                    for r in 0..d_out {
                        let vr = v[r] / self.temperature;
                        let row = &mut grad[r * d_in..(r + 1) * d_in];
                        for (slot, xv) in row.iter_mut().zip(&x) {
                            *slot += vr * xv;
                        }
                    }
                }
            }
        }

        let n = batch.len().max(1) as f64;
        total_loss /= n;
        for g in grad.iter_mut() {
            *g /= n;
        }
        Ok((total_loss, grad))
    }

    /// One parameter update: per-source gradient accumulation over the whole
    /// batch, then a single descent step on the query encoder weights.
    pub fn train_step(
        &mut self,
        generator: &dyn SpanInfiller,
        batch: &[GgrExample],
        texts: &BTreeMap<String, String>,
        learning_rate: f64,
    ) -> Result<GgrStepReport, GgrError> {
        let (loss, grad) =
            self.batch_loss_and_gradient(generator, batch, texts, GradAccumulation::PerSource)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(GgrError::NonFiniteGradient);
        }
        for (w, g) in self.query_encoder.weights_mut().iter_mut().zip(&grad) {
            *w -= learning_rate * g;
        }
        Ok(GgrStepReport { loss })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::TableInfiller;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    /// Test encoder returning one fixed vector for every text.
    #[derive(Debug, Clone)]
    struct ConstEncoder(Vec<f64>);

    impl TextEncoder for ConstEncoder {
        fn id(&self) -> String {
            "const".to_string()
        }
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn encode(&self, _text: &str) -> EncoderVector {
            EncoderVector::new(self.0.clone())
        }
    }

    fn embeddings(pairs: &[(&str, Vec<f64>)]) -> BTreeMap<String, EncoderVector> {
        pairs
            .iter()
            .map(|(id, v)| (id.to_string(), EncoderVector::new(v.clone())))
            .collect()
    }

    fn ids(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identical_embeddings_give_uniform_distribution() {
        let docs = embeddings(&[("a", vec![0.4]), ("b", vec![0.4]), ("c", vec![0.4])]);
        let state =
            RetrieverState::with_doc_embeddings(ConstEncoder(vec![1.0]), docs, 1.0).unwrap();
        let dist = state.retriever_prob("q", &ids(&["a", "b", "c"])).unwrap();
        for (_, p) in dist {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn softmax_of_ln2_and_zero_is_two_thirds_one_third() {
        let docs = embeddings(&[("a", vec![libm::log(2.0)]), ("b", vec![0.0])]);
        let state =
            RetrieverState::with_doc_embeddings(ConstEncoder(vec![1.0]), docs, 1.0).unwrap();
        let dist = state.retriever_prob("q", &ids(&["a", "b"])).unwrap();
        assert_abs_diff_eq!(dist[0].1, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dist[1].1, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one_for_random_pools() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        for n in 1..=50 {
            let docs: BTreeMap<String, EncoderVector> = (0..n)
                .map(|i| {
                    (
                        format!("c{i:02}"),
                        EncoderVector::new(vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]),
                    )
                })
                .collect();
            let pool: Vec<String> = docs.keys().cloned().collect();
            let state = RetrieverState::with_doc_embeddings(
                ConstEncoder(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]),
                docs,
                0.7,
            )
            .unwrap();
            let dist = state.retriever_prob("q", &pool).unwrap();
            let total: f64 = dist.iter().map(|(_, p)| p).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn missing_embedding_is_an_error_naming_the_id() {
        let docs = embeddings(&[("a", vec![1.0])]);
        let state =
            RetrieverState::with_doc_embeddings(ConstEncoder(vec![1.0]), docs, 1.0).unwrap();
        match state.retriever_prob("q", &ids(&["a", "ghost"])) {
            Err(GgrError::MissingEmbedding(id)) => assert_eq!(id, "ghost"),
            other => panic!("expected missing embedding, got {other:?}"),
        }
    }

    fn table(entries: &[(&str, f64)]) -> TableInfiller {
        TableInfiller::new(
            entries
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            f64::INFINITY,
        )
    }

    fn texts_of(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    fn masked() -> MaskedTarget {
        MaskedTarget {
            observed_text: "o <MASK> p".to_string(),
            masked_text: "hidden".to_string(),
        }
    }

    #[test]
    fn single_candidate_marginal_is_its_likelihood() {
        let docs = embeddings(&[("only", vec![2.5])]);
        let state =
            RetrieverState::with_doc_embeddings(ConstEncoder(vec![1.0]), docs, 1.0).unwrap();
        let gen = table(&[("src text", 1.75)]);
        let texts = texts_of(&[("only", "src text")]);
        let r = state
            .rag_sequence_marginal(&gen, &masked(), "q", &ids(&["only"]), &texts)
            .unwrap();
        assert_abs_diff_eq!(r.loss, 1.75, epsilon = 1e-12);
        assert_abs_diff_eq!(r.marginal_log_likelihood, -1.75, epsilon = 1e-12);
        assert_abs_diff_eq!(r.per_source[0].retriever_prob, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_candidate_marginal_matches_hand_enumeration() {
        // p_retriever = (0.6, 0.4); span likelihoods (0.5, 0.25)
        // marginal = 0.6*0.5 + 0.4*0.25 = 0.4
        let docs = embeddings(&[
            ("a", vec![libm::log(0.6)]),
            ("b", vec![libm::log(0.4)]),
        ]);
        let state =
            RetrieverState::with_doc_embeddings(ConstEncoder(vec![1.0]), docs, 1.0).unwrap();
        let gen = table(&[("text a", libm::log(2.0)), ("text b", libm::log(4.0))]);
        let texts = texts_of(&[("a", "text a"), ("b", "text b")]);
        let r = state
            .rag_sequence_marginal(&gen, &masked(), "q", &ids(&["a", "b"]), &texts)
            .unwrap();
        assert_abs_diff_eq!(r.per_source[0].retriever_prob, 0.6, epsilon = 1e-9);
        assert_abs_diff_eq!(r.per_source[1].retriever_prob, 0.4, epsilon = 1e-9);
        assert_abs_diff_eq!(r.marginal_log_likelihood, libm::log(0.4), epsilon = 1e-9);
        assert_abs_diff_eq!(r.loss, -libm::log(0.4), epsilon = 1e-9);
    }

    #[test]
    fn log_domain_matches_direct_probability_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(23);
        for _ in 0..50 {
            let n = rng.gen_range(1..=8);
            let dots: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let nlls: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..5.0)).collect();
            let docs: BTreeMap<String, EncoderVector> = dots
                .iter()
                .enumerate()
                .map(|(i, d)| (format!("c{i}"), EncoderVector::new(vec![*d])))
                .collect();
            let pool: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
            let texts: BTreeMap<String, String> =
                pool.iter().map(|id| (id.clone(), format!("text {id}"))).collect();
            let gen = TableInfiller::new(
                pool.iter()
                    .zip(&nlls)
                    .map(|(id, nll)| (format!("text {id}"), *nll))
                    .collect(),
                f64::INFINITY,
            );
            let state = RetrieverState::with_doc_embeddings(
                ConstEncoder(vec![1.0]),
                docs,
                1.3,
            )
            .unwrap();
            let r = state
                .rag_sequence_marginal(&gen, &masked(), "q", &pool, &texts)
                .unwrap();

            // Direct-space oracle.
            let exp: Vec<f64> = dots.iter().map(|d| libm::exp(d / 1.3)).collect();
            let z: f64 = exp.iter().sum();
            let marginal: f64 = exp
                .iter()
                .zip(&nlls)
                .map(|(e, nll)| (e / z) * libm::exp(-nll))
                .sum();
            assert_abs_diff_eq!(r.marginal_log_likelihood, libm::log(marginal), epsilon = 1e-9);

            // Convex-combination bound: marginal lies between the extreme
            // per-source likelihoods.
            let lo = nlls.iter().map(|n| libm::exp(-n)).fold(f64::INFINITY, f64::min);
            let hi = nlls.iter().map(|n| libm::exp(-n)).fold(0.0, f64::max);
            assert!(marginal >= lo - 1e-12 && marginal <= hi + 1e-12);
        }
    }

    fn synthetic_state(seed: u64) -> (RetrieverState<LinearEncoder>, Vec<GgrExample>, BTreeMap<String, String>, TableInfiller) {
        // 4 candidates with one-hot frozen embeddings; candidate "gold" has
        // a much higher generator likelihood than the rest.
        let names = ["c-a", "c-gold", "c-m", "c-z"];
        let docs: BTreeMap<String, EncoderVector> = names
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let mut v = vec![0.0; 4];
                v[i] = 1.0;
                (id.to_string(), EncoderVector::new(v))
            })
            .collect();
        let texts: BTreeMap<String, String> = names
            .iter()
            .map(|id| (id.to_string(), format!("text {id}")))
            .collect();
        let gen = TableInfiller::new(
            names
                .iter()
                .map(|id| {
                    let nll = if *id == "c-gold" { 0.1 } else { 3.0 };
                    (format!("text {id}"), nll)
                })
                .collect(),
            f64::INFINITY,
        );
        let state = RetrieverState::with_doc_embeddings(
            LinearEncoder::new(4, 6, seed),
            docs,
            1.0,
        )
        .unwrap();
        let batch = vec![GgrExample {
            masked: masked(),
            query_text: "the query text".to_string(),
            candidate_ids: ids(&names),
        }];
        (state, batch, texts, gen)
    }

    #[test]
    fn per_source_accumulation_equals_joint_computation() {
        let (state, batch, texts, gen) = synthetic_state(3);
        let (loss_a, grad_a) = state
            .batch_loss_and_gradient(&gen, &batch, &texts, GradAccumulation::PerSource)
            .unwrap();
        let (loss_b, grad_b) = state
            .batch_loss_and_gradient(&gen, &batch, &texts, GradAccumulation::Joint)
            .unwrap();
        assert_abs_diff_eq!(loss_a, loss_b, epsilon = 1e-12);
        for (a, b) in grad_a.iter().zip(&grad_b) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let (state, batch, texts, gen) = synthetic_state(5);
        let (_, grad) = state
            .batch_loss_and_gradient(&gen, &batch, &texts, GradAccumulation::Joint)
            .unwrap();
        let n = state.query_encoder.weights().len();
        for i in (0..n).step_by(3) {
            let h = 1e-5 * (1.0 + state.query_encoder.weights()[i].abs());
            let mut plus = state.clone();
            plus.query_encoder.weights_mut()[i] += h;
            let mut minus = state.clone();
            minus.query_encoder.weights_mut()[i] -= h;
            let lp = plus
                .batch_loss_and_gradient(&gen, &batch, &texts, GradAccumulation::Joint)
                .unwrap()
                .0;
            let lm = minus
                .batch_loss_and_gradient(&gen, &batch, &texts, GradAccumulation::Joint)
                .unwrap()
                .0;
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs()).max(1e-8);
            assert!(
                (fd - grad[i]).abs() / denom < 1e-4,
                "param {i}: fd {fd} vs analytic {}",
                grad[i]
            );
        }
    }

    #[test]
    fn training_freezes_generator_and_doc_embeddings() {
        let (mut state, batch, texts, gen) = synthetic_state(9);
        let docs_before = state.doc_embeddings.clone();
        let gen_before = gen.clone();
        for _ in 0..5 {
            state.train_step(&gen, &batch, &texts, 0.5).unwrap();
        }
        assert_eq!(state.doc_embeddings, docs_before);
        assert_eq!(gen, gen_before);
    }

    #[test]
    fn training_raises_the_good_candidate_probability() {
        let (mut state, batch, texts, gen) = synthetic_state(13);
        let prob_of_gold = |s: &RetrieverState<LinearEncoder>| {
            s.retriever_prob(&batch[0].query_text, &batch[0].candidate_ids)
                .unwrap()
                .iter()
                .find(|(id, _)| id == "c-gold")
                .unwrap()
                .1
        };
        let mut last = prob_of_gold(&state);
        for _ in 0..5 {
            state.train_step(&gen, &batch, &texts, 1.0).unwrap();
            let now = prob_of_gold(&state);
            assert!(now > last, "gold probability should increase: {last} -> {now}");
            last = now;
        }
    }

    #[test]
    fn untrained_tuned_rerank_equals_embedding_rerank() {
        use crate::embed::{rerank_by_embedding, HashProjectionEncoder};
        let enc = HashProjectionEncoder::new(16, 21);
        let texts = texts_of(&[
            ("a", "first candidate text"),
            ("b", "second candidate words"),
            ("c", "third thing entirely"),
        ]);
        let state = RetrieverState::new(enc.clone(), &texts, 1.0);
        let pool = RankedCandidates::from_unsorted(
            "q",
            ["a", "b", "c"]
                .iter()
                .enumerate()
                .map(|(i, id)| ScoredChunk { chunk_id: id.to_string(), score: i as f64 })
                .collect(),
            "bm25",
        );
        let tuned = state.rerank_with_tuned_encoder("query words", &pool).unwrap();
        let embedded = rerank_by_embedding("query words", &pool, &enc, &texts).unwrap();
        assert_eq!(
            tuned.ids().collect::<Vec<_>>(),
            embedded.ids().collect::<Vec<_>>()
        );
        for (t, e) in tuned.entries.iter().zip(&embedded.entries) {
            // Unit-norm stub embeddings make dot product and cosine agree.
            assert_abs_diff_eq!(t.score, e.score, epsilon = 1e-9);
        }
    }
}
