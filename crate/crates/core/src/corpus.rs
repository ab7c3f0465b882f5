//! Corpus data model: documents, fixed-size chunking, bibliographic
//! augmentation, context windows, and span masking.
//!
//! All types here are immutable after construction and safe to share across
//! threads. Chunking is defined over whitespace tokens so that consecutive
//! chunks of a document tile its tokens with no overlap and no gap.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::text;

/// Reserved token marking the hidden span in a masked target. Model bindings
/// map it to their native infill sentinel.
pub const MASK_SENTINEL: &str = "<MASK>";

/// Delimiter token inserted between bibliographic fields and chunk text on
/// the index side.
pub const BIBLIO_SEPARATOR: &str = "\u{00b6}";

/// One source or target document: a section of a work (book chapter,
/// Wikipedia page section, ...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    /// Unique id, corpus-wide.
    pub doc_id: String,
    /// Identity of the containing work (book or page).
    pub work_id: String,
    pub section_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub author: String,
    pub text: String,
}

impl Document {
    /// Builds a document with NFC-normalized, whitespace-collapsed text.
    pub fn new(
        doc_id: impl Into<String>,
        work_id: impl Into<String>,
        section_id: impl Into<String>,
        title: impl Into<String>,
        author: impl Into<String>,
        text: &str,
    ) -> Self {
        Self {
            doc_id: doc_id.into(),
            work_id: work_id.into(),
            section_id: section_id.into(),
            title: title.into(),
            author: author.into(),
            text: text::normalize(text),
        }
    }

    /// Re-applies text normalization; use after deserializing from external
    /// input.
    pub fn normalized(mut self) -> Self {
        self.text = text::normalize(&self.text);
        self
    }
}

/// An indexed unit of text: at most `chunk_size` whitespace tokens of one
/// document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    /// Position of this chunk within its document, 0-based.
    pub ordinal: usize,
    /// Whitespace-token offsets into the document text.
    pub token_start: usize,
    pub token_end: usize,
    pub text: String,
}

impl Chunk {
    /// Number of whitespace tokens in this chunk.
    pub fn token_len(&self) -> usize {
        self.token_end - self.token_start
    }
}

/// The region of a target chunk to attribute, in whitespace-token offsets
/// into the chunk's text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanOfInterest {
    pub chunk_id: String,
    pub token_start: usize,
    pub token_end: usize,
}

/// How much annotation produced an example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Supervision {
    /// Pair- and span-level: gold source pairing is known.
    Full,
    /// Span-level only: the span is annotated, the source pairing is not.
    Semi,
    /// Both span and pairing are machine-produced by reuse alignment.
    Pseudo,
}

/// A target span plus whatever gold information its supervision level
/// provides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionExample {
    pub target: SpanOfInterest,
    pub supervision: Supervision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_work_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_chunk_ids: Option<BTreeSet<String>>,
}

/// A target chunk with its span of interest hidden behind one sentinel
/// token. Substituting `masked_text` for the sentinel reconstructs the
/// original chunk text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedTarget {
    /// The visible portion; contains exactly one [`MASK_SENTINEL`] token.
    pub observed_text: String,
    /// The hidden span (possibly truncated to the subword budget).
    pub masked_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("span [{start}, {end}) is out of bounds for chunk {chunk_id} ({len} tokens)")]
    SpanOutOfBounds {
        chunk_id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("span names chunk {span_chunk} but was applied to chunk {chunk_id}")]
    SpanChunkMismatch { chunk_id: String, span_chunk: String },
    #[error("chunk {chunk_id} already contains the mask sentinel")]
    SentinelCollision { chunk_id: String },
}

/// Cuts a document into consecutive chunks of at most `chunk_size`
/// whitespace tokens. The last chunk may be shorter; an empty document
/// yields no chunks.
///
/// Chunk ids take the form `{doc_id}#{ordinal}`.
pub fn chunk_document(doc: &Document, chunk_size: usize) -> Vec<Chunk> {
    assert!(chunk_size >= 1, "chunk_size must be at least 1");
    let toks = text::tokens(&doc.text);
    toks.chunks(chunk_size)
        .enumerate()
        .map(|(ordinal, window)| Chunk {
            chunk_id: format!("{}#{}", doc.doc_id, ordinal),
            doc_id: doc.doc_id.clone(),
            ordinal,
            token_start: ordinal * chunk_size,
            token_end: ordinal * chunk_size + window.len(),
            text: window.join(" "),
        })
        .collect()
}

/// Index-side text for a chunk: title and author prepended when present,
/// each followed by the [`BIBLIO_SEPARATOR`] token. Never mutates the chunk.
pub fn augment_with_biblio(chunk: &Chunk, doc: &Document) -> String {
    biblio_augmented_text(&doc.title, &doc.author, &chunk.text)
}

/// See [`augment_with_biblio`]; this form is for callers that carry the
/// bibliographic fields alongside the chunk rather than a whole `Document`.
pub fn biblio_augmented_text(title: &str, author: &str, chunk_text: &str) -> String {
    let mut out = String::new();
    for field in [title, author] {
        if !field.trim().is_empty() {
            out.push_str(field);
            out.push(' ');
            out.push_str(BIBLIO_SEPARATOR);
            out.push(' ');
        }
    }
    out.push_str(chunk_text);
    out
}

/// One sentence of a page, tagged with the section it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionSentence {
    pub text: String,
    pub section_id: String,
}

/// Inclusive sentence-index range of the context window: up to `n` sentences
/// centered on `citing_index`, truncated at page edges and at section
/// boundaries. `n` must be odd.
pub fn context_window_range(
    sentences: &[SectionSentence],
    citing_index: usize,
    n: usize,
) -> (usize, usize) {
    assert!(n >= 1 && n % 2 == 1, "context window size must be odd");
    assert!(
        citing_index < sentences.len(),
        "citing_index out of bounds"
    );
    let half = n / 2;
    let lo = citing_index.saturating_sub(half);
    let hi = (citing_index + half).min(sentences.len() - 1);
    let section = &sentences[citing_index].section_id;

    let mut start = citing_index;
    while start > lo && sentences[start - 1].section_id == *section {
        start -= 1;
    }
    let mut end = citing_index;
    while end < hi && sentences[end + 1].section_id == *section {
        end += 1;
    }
    (start, end)
}

/// Up to `n` sentences centered on the citing sentence, truncated at page
/// edges and at section boundaries (sentences from a different section are
/// omitted). Always contains the citing sentence. `n` must be odd.
pub fn build_context_window(
    sentences: &[SectionSentence],
    citing_index: usize,
    n: usize,
) -> String {
    let (start, end) = context_window_range(sentences, citing_index, n);
    let mut out = String::new();
    for s in &sentences[start..=end] {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&s.text);
    }
    out
}

/// Hides the span of interest behind one [`MASK_SENTINEL`] token.
///
/// The masked region is the longest prefix of the span whose subword count
/// (as measured by `subword_count`, normally the bound generator's own
/// tokenizer) does not exceed `subword_budget`. Any truncated remainder of
/// the span stays in the observed text, after the sentinel, so part of the
/// target is left to condition the generator.
pub fn mask_span(
    chunk: &Chunk,
    span: &SpanOfInterest,
    subword_budget: usize,
    subword_count: impl Fn(&str) -> usize,
) -> Result<MaskedTarget, CorpusError> {
    if span.chunk_id != chunk.chunk_id {
        return Err(CorpusError::SpanChunkMismatch {
            chunk_id: chunk.chunk_id.clone(),
            span_chunk: span.chunk_id.clone(),
        });
    }
    let toks = text::tokens(&chunk.text);
    if span.token_start >= span.token_end || span.token_end > toks.len() {
        return Err(CorpusError::SpanOutOfBounds {
            chunk_id: chunk.chunk_id.clone(),
            start: span.token_start,
            end: span.token_end,
            len: toks.len(),
        });
    }
    if toks.contains(&MASK_SENTINEL) {
        return Err(CorpusError::SentinelCollision {
            chunk_id: chunk.chunk_id.clone(),
        });
    }

    let span_toks = &toks[span.token_start..span.token_end];
    // Longest prefix of the span fitting the budget. Subword counts are
    // monotone in the prefix length, so stop at the first overflow.
    let mut masked_len = 0;
    for k in 1..=span_toks.len() {
        if subword_count(&span_toks[..k].join(" ")) <= subword_budget {
            masked_len = k;
        } else {
            break;
        }
    }
    let masked_text = span_toks[..masked_len].join(" ");

    let mut observed: Vec<&str> = Vec::with_capacity(toks.len() + 1);
    observed.extend_from_slice(&toks[..span.token_start]);
    observed.push(MASK_SENTINEL);
    observed.extend_from_slice(&toks[span.token_start + masked_len..span.token_end]);
    observed.extend_from_slice(&toks[span.token_end..]);

    Ok(MaskedTarget {
        observed_text: observed.join(" "),
        masked_text,
    })
}

/// Substitutes the hidden span back for the sentinel, reconstructing the
/// original chunk text.
pub fn unmask(masked: &MaskedTarget) -> String {
    let mut out: Vec<&str> = Vec::new();
    for tok in masked.observed_text.split_whitespace() {
        if tok == MASK_SENTINEL {
            out.extend(masked.masked_text.split_whitespace());
        } else {
            out.push(tok);
        }
    }
    out.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn doc_with_tokens(n: usize) -> Document {
        let toks: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        Document::new("d1", "w1", "s1", "", "", &toks.join(" "))
    }

    fn whitespace_subwords(s: &str) -> usize {
        s.split_whitespace().count()
    }

    #[test]
    fn chunking_650_tokens_tiles_as_300_300_50() {
        let doc = doc_with_tokens(650);
        let chunks = chunk_document(&doc, 300);
        assert_eq!(chunks.len(), 3);
        assert_eq!(
            chunks.iter().map(Chunk::token_len).collect::<Vec<_>>(),
            vec![300, 300, 50]
        );
        assert_eq!(chunks[0].ordinal, 0);
        assert_eq!(chunks[2].token_start, 600);
        assert_eq!(chunks[2].token_end, 650);
        // Concatenating the chunk texts reproduces the document tokens.
        let rejoined = chunks
            .iter()
            .map(|c| c.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        assert_eq!(rejoined, doc.text);
    }

    #[test]
    fn chunking_exact_size_is_identity() {
        let doc = doc_with_tokens(300);
        let chunks = chunk_document(&doc, 300);
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, doc.text);
        assert_eq!(chunks[0].chunk_id, "d1#0");
    }

    #[test]
    fn chunking_empty_document_yields_nothing() {
        let doc = Document::new("d1", "w1", "s1", "", "", "   ");
        assert!(chunk_document(&doc, 300).is_empty());
    }

    #[test]
    fn biblio_augmentation_prepends_title_and_author() {
        let doc = Document::new("d", "w", "s", "Futuh Misr", "Ibn Abd al'Hakam", "T");
        let chunk = &chunk_document(&doc, 300)[0];
        assert_eq!(
            augment_with_biblio(chunk, &doc),
            "Futuh Misr \u{00b6} Ibn Abd al'Hakam \u{00b6} T"
        );
    }

    #[test]
    fn biblio_augmentation_skips_empty_fields() {
        let doc = Document::new("d", "w", "s", "Paris", "", "T");
        let chunk = &chunk_document(&doc, 300)[0];
        assert_eq!(augment_with_biblio(chunk, &doc), "Paris \u{00b6} T");

        let bare = Document::new("d", "w", "s", "", "", "T");
        let chunk = &chunk_document(&bare, 300)[0];
        assert_eq!(augment_with_biblio(chunk, &bare), "T");
    }

    fn labeled(texts: &[(&str, &str)]) -> Vec<SectionSentence> {
        texts
            .iter()
            .map(|(t, s)| SectionSentence {
                text: t.to_string(),
                section_id: s.to_string(),
            })
            .collect()
    }

    #[test]
    fn context_window_of_one_is_the_citing_sentence() {
        let page = labeled(&[("a.", "s0"), ("b.", "s0"), ("c.", "s0")]);
        assert_eq!(build_context_window(&page, 1, 1), "b.");
    }

    #[test]
    fn context_window_stops_at_section_boundary() {
        // Citing sentence is first in its section: nothing before it may be
        // included, only the following same-section sentence.
        let page = labeled(&[("prev.", "s0"), ("cite.", "s1"), ("next.", "s1"), ("far.", "s1")]);
        assert_eq!(build_context_window(&page, 1, 3), "cite. next.");
    }

    #[test]
    fn context_window_mid_section_takes_five() {
        let page = labeled(&[
            ("a.", "s"),
            ("b.", "s"),
            ("c.", "s"),
            ("d.", "s"),
            ("e.", "s"),
            ("f.", "s"),
        ]);
        let got = build_context_window(&page, 3, 5);
        assert_eq!(got, "b. c. d. e. f.");
        assert_eq!(got.split_whitespace().count(), 5);
    }

    #[test]
    fn mask_within_budget_hides_whole_span() {
        let doc = doc_with_tokens(60);
        let chunk = &chunk_document(&doc, 300)[0];
        let span = SpanOfInterest {
            chunk_id: chunk.chunk_id.clone(),
            token_start: 10,
            token_end: 50,
        };
        let m = mask_span(chunk, &span, 100, whitespace_subwords).unwrap();
        assert_eq!(m.masked_text.split_whitespace().count(), 40);
        assert_eq!(
            m.observed_text.matches(MASK_SENTINEL).count(),
            1,
            "exactly one sentinel"
        );
        assert_eq!(unmask(&m), chunk.text);
    }

    #[test]
    fn mask_truncates_to_budget_and_keeps_remainder_observed() {
        let doc = doc_with_tokens(400);
        let chunk = &chunk_document(&doc, 400)[0];
        let span = SpanOfInterest {
            chunk_id: chunk.chunk_id.clone(),
            token_start: 50,
            token_end: 350, // 300-token span
        };
        let m = mask_span(chunk, &span, 100, whitespace_subwords).unwrap();
        assert_eq!(m.masked_text.split_whitespace().count(), 100);
        // The 200 unmasked span tokens stay observed.
        assert!(m.observed_text.contains("t150")); // first truncated token
        assert!(m.observed_text.contains("t349")); // last span token
        assert_eq!(unmask(&m), chunk.text);
    }

    #[test]
    fn mask_rejects_out_of_chunk_span() {
        let doc = doc_with_tokens(20);
        let chunk = &chunk_document(&doc, 300)[0];
        let span = SpanOfInterest {
            chunk_id: chunk.chunk_id.clone(),
            token_start: 10,
            token_end: 25,
        };
        let err = mask_span(chunk, &span, 100, whitespace_subwords).unwrap_err();
        assert!(matches!(err, CorpusError::SpanOutOfBounds { .. }));
    }

    #[test]
    fn mask_rejects_wrong_chunk() {
        let doc = doc_with_tokens(20);
        let chunk = &chunk_document(&doc, 300)[0];
        let span = SpanOfInterest {
            chunk_id: "other#0".to_string(),
            token_start: 0,
            token_end: 5,
        };
        assert!(matches!(
            mask_span(chunk, &span, 100, whitespace_subwords),
            Err(CorpusError::SpanChunkMismatch { .. })
        ));
    }
}
