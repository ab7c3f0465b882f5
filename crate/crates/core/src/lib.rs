//! Source attribution as retrieve-then-rerank.
//!
//! A BM25 index over (optionally biblio-augmented) source chunks produces a
//! candidate pool for each target passage; the pool is then reordered by one
//! of three rerankers — embedding cosine similarity, masked-span generative
//! likelihood, or a dense retriever tuned with a marginal-likelihood
//! objective against a frozen generator — and rankings are scored with
//! Recall@k and MRR. Character-shingle alignment supplies pseudo-labels when
//! no annotation exists, and a double-bracket link parser builds the
//! citation-style dataset.
//!
//! Everything in this crate is pure and deterministic given its inputs. IO,
//! file formats, persistence, and the CLI live in the companion `attrib-cli`
//! crate. The crate is `no_std`-compatible (`alloc` required); disable the
//! default `std` feature to use it in that mode.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod align;
pub mod bm25;
pub mod corpus;
pub mod embed;
pub mod eval;
pub mod gen;
pub mod rag;
pub mod synth;
pub mod text;
pub mod wiki;

mod hash;

pub use bm25::{Bm25Params, IndexedCorpus, RankedCandidates, ScoredChunk};
pub use corpus::{
    AttributionExample, Chunk, Document, MaskedTarget, SpanOfInterest, Supervision,
};
pub use embed::{EncoderVector, TextEncoder};
pub use gen::SpanInfiller;
