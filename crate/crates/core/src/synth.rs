//! Seeded synthetic corpora with known gold pairings, used by the test and
//! acceptance suites and handy for smoke-testing the CLI.
//!
//! The copy corpus mirrors the structure of a text-reuse task: every target
//! chunk contains a passage copied verbatim from exactly one source chunk,
//! padded by shared filler vocabulary. The copied passage uses tokens unique
//! to its pair, so the gold source is unambiguous by construction.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::corpus::{chunk_document, AttributionExample, Chunk, Document, SpanOfInterest, Supervision};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub n_targets: usize,
    /// Source chunks with no paired target (noise for retrieval).
    pub n_distractors: usize,
    /// Targets whose full text is also planted as a decoy source document,
    /// so the baseline retriever's top-1 lands on the decoy instead of the
    /// gold source. Useful for studying semi-supervised construction under
    /// imperfect retrieval.
    pub n_decoys: usize,
    /// Length of the span of interest, in tokens.
    pub span_tokens: usize,
    /// Copied tokens kept around the span on each side (context the copy
    /// shares with the source).
    pub reuse_margin: usize,
    pub filler_min: usize,
    pub filler_max: usize,
    pub filler_vocab: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_targets: 20,
            n_distractors: 50,
            n_decoys: 0,
            span_tokens: 8,
            reuse_margin: 3,
            filler_min: 5,
            filler_max: 30,
            filler_vocab: 50,
            seed: 0,
        }
    }
}

/// A generated corpus with one-to-one target/source pairings.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub source_documents: Vec<Document>,
    pub target_documents: Vec<Document>,
    pub source_chunks: Vec<Chunk>,
    pub target_chunks: Vec<Chunk>,
    /// Fully supervised examples, one per target.
    pub examples: Vec<AttributionExample>,
    /// target chunk id -> gold source chunk id.
    pub gold_source_of: BTreeMap<String, String>,
}

impl SynthCorpus {
    pub fn source_texts(&self) -> BTreeMap<String, String> {
        self.source_chunks
            .iter()
            .map(|c| (c.chunk_id.clone(), c.text.clone()))
            .collect()
    }

    pub fn target_chunk_map(&self) -> BTreeMap<String, Chunk> {
        self.target_chunks
            .iter()
            .map(|c| (c.chunk_id.clone(), c.clone()))
            .collect()
    }

    pub fn chunk_to_work(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        let docs: BTreeMap<&str, &str> = self
            .source_documents
            .iter()
            .chain(&self.target_documents)
            .map(|d| (d.doc_id.as_str(), d.work_id.as_str()))
            .collect();
        for c in self.source_chunks.iter().chain(&self.target_chunks) {
            if let Some(work) = docs.get(c.doc_id.as_str()) {
                map.insert(c.chunk_id.clone(), (*work).into());
            }
        }
        map
    }
}

fn filler(rng: &mut ChaCha12Rng, cfg: &SynthConfig) -> Vec<String> {
    let len = rng.gen_range(cfg.filler_min..=cfg.filler_max);
    (0..len)
        .map(|_| format!("f{:02}", rng.gen_range(0..cfg.filler_vocab)))
        .collect()
}

/// Builds the copy corpus. Each target t holds a reused passage
/// `margin + span + margin` tokens long whose vocabulary is unique to pair
/// t; the same passage sits somewhere inside source t. Distractor sources
/// carry filler only; decoy sources duplicate a target's entire text.
pub fn copy_corpus(cfg: &SynthConfig) -> SynthCorpus {
    assert!(cfg.span_tokens >= 1);
    assert!(cfg.n_decoys <= cfg.n_targets);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);

    let mut source_documents = Vec::new();
    let mut target_documents = Vec::new();
    let mut examples = Vec::new();
    let mut gold_source_of = BTreeMap::new();

    for t in 0..cfg.n_targets {
        let passage: Vec<String> = (0..cfg.span_tokens + 2 * cfg.reuse_margin)
            .map(|j| format!("p{t:04}x{j:02}"))
            .collect();

        let s_pre = filler(&mut rng, cfg);
        let s_post = filler(&mut rng, cfg);
        let source_text = [s_pre.as_slice(), passage.as_slice(), s_post.as_slice()]
            .concat()
            .join(" ");
        let source_doc = Document::new(
            format!("src{t:04}"),
            format!("ws{t:04}"),
            "s0",
            "",
            "",
            &source_text,
        );

        let t_pre = filler(&mut rng, cfg);
        let t_post = filler(&mut rng, cfg);
        let target_text = [t_pre.as_slice(), passage.as_slice(), t_post.as_slice()]
            .concat()
            .join(" ");
        let target_doc = Document::new(
            format!("tgt{t:04}"),
            format!("wt{t:04}"),
            "s0",
            "",
            "",
            &target_text,
        );

        let span_start = t_pre.len() + cfg.reuse_margin;
        examples.push(AttributionExample {
            target: SpanOfInterest {
                chunk_id: format!("tgt{t:04}#0"),
                token_start: span_start,
                token_end: span_start + cfg.span_tokens,
            },
            supervision: Supervision::Full,
            gold_work_id: Some(source_doc.work_id.clone()),
            gold_chunk_ids: Some([format!("src{t:04}#0")].into_iter().collect()),
        });
        gold_source_of.insert(format!("tgt{t:04}#0"), format!("src{t:04}#0"));

        if t < cfg.n_decoys {
            source_documents.push(Document::new(
                format!("dec{t:04}"),
                format!("wd{t:04}"),
                "s0",
                "",
                "",
                &target_text,
            ));
        }
        source_documents.push(source_doc);
        target_documents.push(target_doc);
    }

    for i in 0..cfg.n_distractors {
        let text = filler(&mut rng, cfg).join(" ");
        source_documents.push(Document::new(
            format!("dst{i:04}"),
            format!("wx{i:04}"),
            "s0",
            "",
            "",
            &text,
        ));
    }

    let source_chunks = source_documents
        .iter()
        .flat_map(|d| chunk_document(d, 300))
        .collect();
    let target_chunks = target_documents
        .iter()
        .flat_map(|d| chunk_document(d, 300))
        .collect();

    SynthCorpus {
        source_documents,
        target_documents,
        source_chunks,
        target_chunks,
        examples,
        gold_source_of,
    }
}

/// Configuration for [`confusable_copy_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusableConfig {
    pub n_targets: usize,
    pub n_distractors: usize,
    /// Vocabulary the copied spans draw from.
    pub span_pool: usize,
    pub span_tokens: usize,
    /// Term frequency of the span tokens kept by each confuser.
    pub confuser_tf: usize,
    pub filler_min: usize,
    pub filler_max: usize,
    pub filler_vocab: usize,
    pub seed: u64,
}

impl Default for ConfusableConfig {
    fn default() -> Self {
        Self {
            n_targets: 200,
            n_distractors: 100,
            span_pool: 500,
            span_tokens: 6,
            confuser_tf: 3,
            filler_min: 20,
            filler_max: 50,
            filler_vocab: 50,
            seed: 0,
        }
    }
}

/// A copy corpus that the lexical baseline cannot solve perfectly: next to
/// every gold source sits a confuser that copies the target's filler text
/// and repeats five of the six span tokens, which outweighs the gold source
/// under term-frequency scoring. Only the gold source contains the whole
/// span, so a copy-aware scorer still separates them. Span token sets are
/// distinct across targets, keeping the gold pairing unambiguous.
pub fn confusable_copy_corpus(cfg: &ConfusableConfig) -> SynthCorpus {
    assert!(cfg.span_tokens >= 2);
    assert!(cfg.span_pool > cfg.span_tokens * 4);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let fill_cfg = SynthConfig {
        filler_min: cfg.filler_min,
        filler_max: cfg.filler_max,
        filler_vocab: cfg.filler_vocab,
        ..SynthConfig::default()
    };

    let mut seen_spans: alloc::collections::BTreeSet<Vec<usize>> =
        alloc::collections::BTreeSet::new();
    let mut source_documents = Vec::new();
    let mut target_documents = Vec::new();
    let mut examples = Vec::new();
    let mut gold_source_of = BTreeMap::new();

    for t in 0..cfg.n_targets {
        // Distinct span token set per target.
        let span_ids: Vec<usize> = loop {
            let mut ids: Vec<usize> = Vec::new();
            while ids.len() < cfg.span_tokens {
                let c = rng.gen_range(0..cfg.span_pool);
                if !ids.contains(&c) {
                    ids.push(c);
                }
            }
            let mut key = ids.clone();
            key.sort_unstable();
            if seen_spans.insert(key) {
                break ids;
            }
        };
        let span: Vec<String> = span_ids.iter().map(|i| format!("w{i:03}")).collect();

        let t_pre = filler(&mut rng, &fill_cfg);
        let t_post = filler(&mut rng, &fill_cfg);
        let target_text = [t_pre.as_slice(), span.as_slice(), t_post.as_slice()]
            .concat()
            .join(" ");
        target_documents.push(Document::new(
            format!("tgt{t:04}"),
            format!("wt{t:04}"),
            "s0",
            "",
            "",
            &target_text,
        ));

        let s_pre = filler(&mut rng, &fill_cfg);
        let s_post = filler(&mut rng, &fill_cfg);
        let source_text = [s_pre.as_slice(), span.as_slice(), s_post.as_slice()]
            .concat()
            .join(" ");
        source_documents.push(Document::new(
            format!("src{t:04}"),
            format!("ws{t:04}"),
            "s0",
            "",
            "",
            &source_text,
        ));

        // Confuser: the target's own filler plus five of the six span
        // tokens, each repeated.
        let dropped = rng.gen_range(0..span.len());
        let mut confuser_tokens: Vec<String> = t_pre.clone();
        for (i, tok) in span.iter().enumerate() {
            if i != dropped {
                for _ in 0..cfg.confuser_tf {
                    confuser_tokens.push(tok.clone());
                }
            }
        }
        confuser_tokens.extend(t_post.iter().cloned());
        source_documents.push(Document::new(
            format!("cfu{t:04}"),
            format!("wc{t:04}"),
            "s0",
            "",
            "",
            &confuser_tokens.join(" "),
        ));

        examples.push(AttributionExample {
            target: SpanOfInterest {
                chunk_id: format!("tgt{t:04}#0"),
                token_start: t_pre.len(),
                token_end: t_pre.len() + cfg.span_tokens,
            },
            supervision: Supervision::Full,
            gold_work_id: Some(format!("ws{t:04}")),
            gold_chunk_ids: Some([format!("src{t:04}#0")].into_iter().collect()),
        });
        gold_source_of.insert(format!("tgt{t:04}#0"), format!("src{t:04}#0"));
    }

    for i in 0..cfg.n_distractors {
        let text = filler(&mut rng, &fill_cfg).join(" ");
        source_documents.push(Document::new(
            format!("dst{i:04}"),
            format!("wx{i:04}"),
            "s0",
            "",
            "",
            &text,
        ));
    }

    let source_chunks = source_documents
        .iter()
        .flat_map(|d| chunk_document(d, 300))
        .collect();
    let target_chunks = target_documents
        .iter()
        .flat_map(|d| chunk_document(d, 300))
        .collect();
    SynthCorpus {
        source_documents,
        target_documents,
        source_chunks,
        target_chunks,
        examples,
        gold_source_of,
    }
}

/// Two small chunk collections sharing exactly one planted passage.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedReuse {
    pub targets: Vec<Chunk>,
    pub sources: Vec<Chunk>,
    pub target_chunk_id: String,
    pub source_chunk_id: String,
    /// Token span of the planted passage in the target chunk.
    pub target_span: (usize, usize),
}

/// Builds two works of three chunks each; one target chunk and one source
/// chunk share a verbatim passage of `passage_tokens` tokens, every other
/// chunk uses vocabulary unique to itself.
pub fn planted_reuse(seed: u64, passage_tokens: usize) -> PlantedReuse {
    let _ = seed; // fixed layout; the namespace tokens make collisions impossible
    let unique = |ns: &str, n: usize| -> Vec<String> {
        (0..n).map(|j| format!("{ns}tok{j:02}")).collect()
    };
    let passage: Vec<String> = (0..passage_tokens).map(|j| format!("shared{j:02}")).collect();

    let mut target_docs = Vec::new();
    for (i, ns) in ["ta", "tb", "tc"].iter().enumerate() {
        let text = if i == 1 {
            let pre = unique(ns, 10);
            let post = unique(&format!("{ns}z"), 10);
            [pre.as_slice(), passage.as_slice(), post.as_slice()]
                .concat()
                .join(" ")
        } else {
            unique(ns, 30).join(" ")
        };
        target_docs.push(Document::new(format!("t{i}"), "work-t", "s0", "", "", &text));
    }
    let mut source_docs = Vec::new();
    for (i, ns) in ["sa", "sb", "sc"].iter().enumerate() {
        let text = if i == 2 {
            let pre = unique(ns, 12);
            let post = unique(&format!("{ns}z"), 8);
            [pre.as_slice(), passage.as_slice(), post.as_slice()]
                .concat()
                .join(" ")
        } else {
            unique(ns, 30).join(" ")
        };
        source_docs.push(Document::new(format!("s{i}"), "work-s", "s0", "", "", &text));
    }

    let targets: Vec<Chunk> = target_docs.iter().flat_map(|d| chunk_document(d, 300)).collect();
    let sources: Vec<Chunk> = source_docs.iter().flat_map(|d| chunk_document(d, 300)).collect();
    PlantedReuse {
        targets,
        sources,
        target_chunk_id: "t1#0".into(),
        source_chunk_id: "s2#0".into(),
        target_span: (10, 10 + passage_tokens),
    }
}
