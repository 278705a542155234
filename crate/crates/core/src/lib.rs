//! Algorithmic core of a multilingual event-extraction pipeline.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`corpus`]: loading, writing, splitting and combining corpora
//!   (JSONL document/sentence/coreference records and two-column BIO files).
//! - [`embedding`]: word-vector text files, row normalisation and exact
//!   cosine k-nearest-neighbour search.
//! - [`align`]: orthogonal Procrustes mapping between two embedding spaces,
//!   with CSLS-based dictionary refinement.
//! - [`translate`]: CSLS retrieval and word-by-word translation of BIO
//!   corpora with label copy.
//! - [`bio`]: BIO schemes, transition masks and constrained Viterbi decoding.
//! - [`coref`]: sentence-pair datasets and greedy threshold clustering.
//! - [`metrics`]: precision/recall/F-beta and the CoNLL-2012 coreference
//!   average (MUC, B-cubed, CEAF-e).
//! - [`head`]: a small feed-forward classification head trained with SGD.

pub mod align;
pub mod bio;
pub mod coref;
pub mod corpus;
pub mod embedding;
mod error;
pub mod head;
pub mod linalg;
pub mod metrics;
pub mod translate;

pub use error::{Error, Result};
