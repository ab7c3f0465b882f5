//! Citation-style dataset construction from page text with double-bracket
//! link markup: `[[Target]]` and `[[Target|anchor]]`.
//!
//! Links whose anchor text is the cited page's headword become attribution
//! examples; the query is a context window of sentences around the citing
//! sentence, sources are chunked at the section level, and relevance is
//! page-level (any section chunk of the cited page counts).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    chunk_document, context_window_range, AttributionExample, Chunk, Document, SectionSentence,
    SpanOfInterest, Supervision,
};
use crate::hash::fnv1a64;
use crate::text;

/// One parsed wiki link, located by character offsets of its whole markup in
/// the citing sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiLink {
    pub page_id: String,
    pub sentence_index: usize,
    /// Headword of the cited page.
    pub target_title: String,
    pub anchor_text: String,
    /// Character (not byte) offsets of the `[[...]]` markup in the sentence.
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WikiError {
    #[error("unbalanced link brackets at character {offset}")]
    Unbalanced { offset: usize },
    #[error("nested link brackets at character {offset}")]
    Nested { offset: usize },
    #[error("link with empty target title at character {offset}")]
    EmptyTarget { offset: usize },
}

struct Fragment {
    target_title: String,
    anchor_text: String,
    char_start: usize,
    char_end: usize,
}

fn parse_links(sentence: &str) -> Result<Vec<Fragment>, WikiError> {
    let chars: Vec<char> = sentence.chars().collect();
    let len = chars.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < len {
        if chars[i] == '[' && i + 1 < len && chars[i + 1] == '[' {
            let start = i;
            let mut j = i + 2;
            let close = loop {
                if j >= len {
                    return Err(WikiError::Unbalanced { offset: start });
                }
                if chars[j] == '[' && j + 1 < len && chars[j + 1] == '[' {
                    return Err(WikiError::Nested { offset: j });
                }
                if chars[j] == ']' && j + 1 < len && chars[j + 1] == ']' {
                    break j;
                }
                j += 1;
            };
            let inner: String = chars[i + 2..close].iter().collect();
            let (target, anchor) = match inner.find('|') {
                Some(p) => (inner[..p].to_string(), inner[p + 1..].to_string()),
                None => (inner.clone(), inner),
            };
            if target.trim().is_empty() {
                return Err(WikiError::EmptyTarget { offset: start });
            }
            out.push(Fragment {
                target_title: target,
                anchor_text: anchor,
                char_start: start,
                char_end: close + 2,
            });
            i = close + 2;
        } else if chars[i] == ']' && i + 1 < len && chars[i + 1] == ']' {
            return Err(WikiError::Unbalanced { offset: i });
        } else {
            i += 1;
        }
    }
    Ok(out)
}

/// Parses the two double-bracket link forms out of one sentence, in
/// left-to-right order. `[[Target]]` has anchor equal to the target.
pub fn extract_links(
    page_id: &str,
    sentence_index: usize,
    sentence: &str,
) -> Result<Vec<WikiLink>, WikiError> {
    Ok(parse_links(sentence)?
        .into_iter()
        .map(|f| WikiLink {
            page_id: page_id.to_string(),
            sentence_index,
            target_title: f.target_title,
            anchor_text: f.anchor_text,
            char_start: f.char_start,
            char_end: f.char_end,
        })
        .collect())
}

/// Keeps links whose anchor text is the cited page's headword, compared
/// under match normalization (NFC, case fold, collapsed whitespace).
pub fn filter_headword_links(links: Vec<WikiLink>) -> Vec<WikiLink> {
    links
        .into_iter()
        .filter(|l| {
            text::normalize_for_match(&l.anchor_text)
                == text::normalize_for_match(&l.target_title)
        })
        .collect()
}

/// Replaces every link markup in the sentence with its anchor text. Returns
/// the stripped sentence and, for each link in order, the half-open
/// whitespace-token span its anchor covers in the stripped sentence.
pub fn strip_links(sentence: &str) -> Result<(String, Vec<(usize, usize)>), WikiError> {
    let fragments = parse_links(sentence)?;
    let chars: Vec<char> = sentence.chars().collect();
    let mut stripped = String::new();
    let mut anchor_chars: Vec<(usize, usize)> = Vec::with_capacity(fragments.len());
    let mut cursor = 0usize;
    let mut emitted = 0usize; // chars written to `stripped`
    for f in &fragments {
        for &c in &chars[cursor..f.char_start] {
            stripped.push(c);
            emitted += 1;
        }
        let a_start = emitted;
        for c in f.anchor_text.chars() {
            stripped.push(c);
            emitted += 1;
        }
        anchor_chars.push((a_start, emitted));
        cursor = f.char_end;
    }
    for &c in &chars[cursor..] {
        stripped.push(c);
    }

    // Token ranges of the stripped sentence, in char offsets.
    let mut token_ranges: Vec<(usize, usize)> = Vec::new();
    let mut pos = 0usize;
    let mut tok_start = None;
    for c in stripped.chars() {
        if c.is_whitespace() {
            if let Some(s) = tok_start.take() {
                token_ranges.push((s, pos));
            }
        } else if tok_start.is_none() {
            tok_start = Some(pos);
        }
        pos += 1;
    }
    if let Some(s) = tok_start {
        token_ranges.push((s, pos));
    }

    // Map each anchor char span to the tokens it overlaps.
    let spans = anchor_chars
        .iter()
        .map(|&(cs, ce)| {
            let mut first = None;
            let mut last = None;
            for (ti, &(ts, te)) in token_ranges.iter().enumerate() {
                if ts < ce && cs < te {
                    if first.is_none() {
                        first = Some(ti);
                    }
                    last = Some(ti);
                }
            }
            match (first, last) {
                (Some(f), Some(l)) => (f, l + 1),
                _ => (0, 0), // empty anchor; dropped by the headword filter
            }
        })
        .collect();
    Ok((stripped, spans))
}

/// One section of a page, with sentences pre-split by the caller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSection {
    pub page_id: String,
    pub section_id: String,
    /// Page headword; shared by all sections of the page.
    pub title: String,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkDatasetParams {
    /// Context window size in sentences (odd).
    pub context_n: usize,
    pub chunk_size: usize,
    /// Fraction of citing pages assigned to the training split.
    pub train_ratio: f64,
}

impl Default for LinkDatasetParams {
    fn default() -> Self {
        Self {
            context_n: 3,
            chunk_size: 300,
            train_ratio: 0.9,
        }
    }
}

/// Output of [`build_link_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkDataset {
    /// One document per page section.
    pub source_documents: Vec<Document>,
    /// Section-level source chunks (sections longer than the chunk size
    /// yield several chunks; page-level relevance makes that harmless).
    pub source_chunks: Vec<Chunk>,
    /// One query chunk per kept link: the context window around the citing
    /// sentence.
    pub target_chunks: Vec<Chunk>,
    pub train_examples: Vec<AttributionExample>,
    pub test_examples: Vec<AttributionExample>,
    pub links_seen: usize,
    pub dropped_non_headword: usize,
    /// Kept links whose cited page is absent from the corpus.
    pub dangling_links: usize,
}

/// Builds the link dataset: parses links, keeps headword links, builds
/// section-level source chunks and context-window queries, and splits
/// train/test deterministically by a hash of the citing page id.
pub fn build_link_dataset(
    pages: &[PageSection],
    params: &LinkDatasetParams,
) -> Result<LinkDataset, WikiError> {
    assert!(params.context_n >= 1 && params.context_n % 2 == 1);
    assert!(params.chunk_size >= 1);
    assert!((0.0..=1.0).contains(&params.train_ratio));

    // Group sections by page, pages ordered by id, sections in input order.
    let mut by_page: BTreeMap<&str, Vec<&PageSection>> = BTreeMap::new();
    for sec in pages {
        by_page.entry(sec.page_id.as_str()).or_default().push(sec);
    }

    // Headword registry: normalized title -> page id (first page wins).
    let mut titles: BTreeMap<String, &str> = BTreeMap::new();
    for (page_id, sections) in &by_page {
        let title = &sections[0].title;
        if !title.trim().is_empty() {
            titles
                .entry(text::normalize_for_match(title))
                .or_insert(page_id);
        }
    }

    // Source side: one document per section, chunked.
    let mut source_documents = Vec::new();
    let mut source_chunks = Vec::new();
    let mut chunks_of_page: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for (page_id, sections) in &by_page {
        for (si, sec) in sections.iter().enumerate() {
            let mut body = String::new();
            for (i, sentence) in sec.sentences.iter().enumerate() {
                let (stripped, _) = strip_links(sentence)?;
                if i > 0 {
                    body.push(' ');
                }
                body.push_str(&stripped);
            }
            let doc = Document::new(
                format!("{page_id}/s{si}"),
                *page_id,
                sec.section_id.clone(),
                sec.title.clone(),
                "",
                &body,
            );
            for chunk in chunk_document(&doc, params.chunk_size) {
                chunks_of_page
                    .entry(page_id)
                    .or_default()
                    .insert(chunk.chunk_id.clone());
                source_chunks.push(chunk);
            }
            source_documents.push(doc);
        }
    }

    let mut target_chunks = Vec::new();
    let mut train_examples = Vec::new();
    let mut test_examples = Vec::new();
    let mut links_seen = 0usize;
    let mut dropped_non_headword = 0usize;
    let mut dangling_links = 0usize;
    let split_bound = (params.train_ratio * 10_000.0) as u64;

    for (page_id, sections) in &by_page {
        // Flat sentence list with section labels, stripped and normalized.
        let mut raw: Vec<(&String, &str)> = Vec::new();
        for sec in sections {
            for sentence in &sec.sentences {
                raw.push((sentence, sec.section_id.as_str()));
            }
        }
        let mut stripped_sentences: Vec<SectionSentence> = Vec::with_capacity(raw.len());
        let mut sentence_links: Vec<Vec<(WikiLink, (usize, usize))>> =
            Vec::with_capacity(raw.len());
        for (si, (sentence, section)) in raw.iter().enumerate() {
            let links = extract_links(page_id, si, sentence)?;
            links_seen += links.len();
            let (stripped, spans) = strip_links(sentence)?;
            let kept: Vec<(WikiLink, (usize, usize))> = links
                .into_iter()
                .zip(spans)
                .filter(|(l, span)| {
                    let keep = text::normalize_for_match(&l.anchor_text)
                        == text::normalize_for_match(&l.target_title)
                        && span.1 > span.0;
                    if !keep {
                        dropped_non_headword += 1;
                    }
                    keep
                })
                .collect();
            stripped_sentences.push(SectionSentence {
                text: text::normalize(&stripped),
                section_id: (*section).to_string(),
            });
            sentence_links.push(kept);
        }

        let is_train = fnv1a64(page_id.as_bytes(), 0x5eed) % 10_000 < split_bound;
        for (si, links) in sentence_links.iter().enumerate() {
            for (li, (link, anchor_span)) in links.iter().enumerate() {
                let cited = titles
                    .get(&text::normalize_for_match(&link.target_title))
                    .copied();
                let gold_chunks = cited.and_then(|p| chunks_of_page.get(p));
                let (Some(cited), Some(gold_chunks)) = (cited, gold_chunks) else {
                    dangling_links += 1;
                    continue;
                };

                let (w_start, w_end) =
                    context_window_range(&stripped_sentences, si, params.context_n);
                let mut window = String::new();
                for s in &stripped_sentences[w_start..=w_end] {
                    if !window.is_empty() {
                        window.push(' ');
                    }
                    window.push_str(&s.text);
                }
                let offset: usize = stripped_sentences[w_start..si]
                    .iter()
                    .map(|s| text::token_count(&s.text))
                    .sum();

                let doc_id = format!("q/{page_id}/{si}/{li}");
                let chunk_id = format!("{doc_id}#0");
                target_chunks.push(Chunk {
                    chunk_id: chunk_id.clone(),
                    doc_id,
                    ordinal: 0,
                    token_start: 0,
                    token_end: text::token_count(&window),
                    text: window,
                });
                let example = AttributionExample {
                    target: SpanOfInterest {
                        chunk_id,
                        token_start: offset + anchor_span.0,
                        token_end: offset + anchor_span.1,
                    },
                    supervision: Supervision::Full,
                    gold_work_id: Some(cited.to_string()),
                    gold_chunk_ids: Some(gold_chunks.clone()),
                };
                if is_train {
                    train_examples.push(example);
                } else {
                    test_examples.push(example);
                }
            }
        }
    }

    Ok(LinkDataset {
        source_documents,
        source_chunks,
        target_chunks,
        train_examples,
        test_examples,
        links_seen,
        dropped_non_headword,
        dangling_links,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn bare_link_has_anchor_equal_to_target() {
        let links = extract_links("p", 0, "born in [[Paris]] in").unwrap();
        assert_eq!(links.len(), 1);
        assert_eq!(links[0].target_title, "Paris");
        assert_eq!(links[0].anchor_text, "Paris");
        assert_eq!((links[0].char_start, links[0].char_end), (8, 17));
    }

    #[test]
    fn piped_link_separates_anchor() {
        let links = extract_links("p", 0, "[[Paris|the city]]").unwrap();
        assert_eq!(links[0].target_title, "Paris");
        assert_eq!(links[0].anchor_text, "the city");
    }

    #[test]
    fn links_come_out_in_textual_order() {
        let links =
            extract_links("p", 2, "[[A]] then [[B|bee]] and finally [[C]].").unwrap();
        let targets: Vec<&str> = links.iter().map(|l| l.target_title.as_str()).collect();
        assert_eq!(targets, vec!["A", "B", "C"]);
        assert!(links.windows(2).all(|w| w[0].char_end <= w[1].char_start));
        assert!(links.iter().all(|l| l.sentence_index == 2));
    }

    #[test]
    fn unbalanced_brackets_report_the_offset() {
        match extract_links("p", 0, "text [[Paris never closed") {
            Err(WikiError::Unbalanced { offset }) => assert_eq!(offset, 5),
            other => panic!("expected unbalanced error, got {other:?}"),
        }
        match extract_links("p", 0, "stray ]] closer") {
            Err(WikiError::Unbalanced { offset }) => assert_eq!(offset, 6),
            other => panic!("expected unbalanced error, got {other:?}"),
        }
    }

    #[test]
    fn nested_brackets_are_rejected() {
        assert!(matches!(
            extract_links("p", 0, "[[outer [[inner]] ]]"),
            Err(WikiError::Nested { .. })
        ));
    }

    #[test]
    fn round_trip_reinserts_markup() {
        let sentence = "a [[B]] c [[D|dee]] e";
        let links = extract_links("p", 0, sentence).unwrap();
        let chars: Vec<char> = sentence.chars().collect();
        let mut rebuilt = String::new();
        let mut cursor = 0;
        for l in &links {
            rebuilt.extend(&chars[cursor..l.char_start]);
            if l.anchor_text == l.target_title {
                rebuilt.push_str(&format!("[[{}]]", l.target_title));
            } else {
                rebuilt.push_str(&format!("[[{}|{}]]", l.target_title, l.anchor_text));
            }
            cursor = l.char_end;
        }
        rebuilt.extend(&chars[cursor..]);
        assert_eq!(rebuilt, sentence);
    }

    fn link(target: &str, anchor: &str) -> WikiLink {
        WikiLink {
            page_id: "p".to_string(),
            sentence_index: 0,
            target_title: target.to_string(),
            anchor_text: anchor.to_string(),
            char_start: 0,
            char_end: 4,
        }
    }

    #[test]
    fn headword_filter_keeps_matching_anchors() {
        let kept = filter_headword_links(vec![
            link("Paris", "Paris"),
            link("Paris", "the city"),
            link("Paris", "paris "),
        ]);
        assert_eq!(kept.len(), 2);
        assert!(kept.iter().all(|l| l.target_title == "Paris"));
        // Idempotent, and output is a subset of the input.
        let again = filter_headword_links(kept.clone());
        assert_eq!(again, kept);
    }

    #[test]
    fn strip_links_locates_anchor_tokens() {
        let (stripped, spans) = strip_links("born in [[Paris]] in [[Q|x y]] end").unwrap();
        assert_eq!(stripped, "born in Paris in x y end");
        assert_eq!(spans, vec![(2, 3), (4, 6)]);
    }

    fn section(page: &str, sec: &str, title: &str, sentences: &[&str]) -> PageSection {
        PageSection {
            page_id: page.to_string(),
            section_id: sec.to_string(),
            title: title.to_string(),
            sentences: sentences.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn one_citing_page_yields_one_example() {
        let pages = vec![
            section(
                "citing",
                "intro",
                "Citing Page",
                &["Before sentence here.", "It mentions [[Paris]] today.", "After sentence."],
            ),
            section(
                "paris",
                "history",
                "Paris",
                &["Paris is the capital of France.", "It has a long history."],
            ),
        ];
        let ds = build_link_dataset(&pages, &LinkDatasetParams::default()).unwrap();
        let all: Vec<&AttributionExample> =
            ds.train_examples.iter().chain(&ds.test_examples).collect();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].gold_work_id.as_deref(), Some("paris"));
        assert_eq!(ds.dangling_links, 0);
        assert_eq!(ds.links_seen, 1);

        // The span points at the anchor tokens inside the window text.
        let target = &ds.target_chunks[0];
        let toks: Vec<&str> = target.text.split_whitespace().collect();
        let ex = all[0];
        assert_eq!(
            toks[ex.target.token_start..ex.target.token_end].join(" "),
            "Paris"
        );
        // Window covers all three same-section sentences.
        assert!(target.text.starts_with("Before sentence"));
        assert!(target.text.ends_with("After sentence."));
    }

    #[test]
    fn dangling_links_are_dropped_and_counted() {
        let pages = vec![section(
            "citing",
            "intro",
            "Citing Page",
            &["It mentions [[Nowhere]] sadly."],
        )];
        let ds = build_link_dataset(&pages, &LinkDatasetParams::default()).unwrap();
        assert_eq!(ds.train_examples.len() + ds.test_examples.len(), 0);
        assert_eq!(ds.dangling_links, 1);
    }

    #[test]
    fn split_is_deterministic_by_page() {
        let mut pages = Vec::new();
        for p in 0..40 {
            pages.push(section(
                &format!("page{p:02}"),
                "s",
                &format!("Page {p:02}"),
                &[&format!("cites [[Hub]] number {p}.")],
            ));
        }
        pages.push(section("hub", "s", "Hub", &["The hub page content here."]));
        let params = LinkDatasetParams::default();
        let a = build_link_dataset(&pages, &params).unwrap();
        let b = build_link_dataset(&pages, &params).unwrap();
        assert_eq!(a.train_examples, b.train_examples);
        assert_eq!(a.test_examples, b.test_examples);
        assert!(!a.train_examples.is_empty());
        assert!(!a.test_examples.is_empty());
        assert_eq!(a.train_examples.len() + a.test_examples.len(), 40);
    }
}
