//! Corpus data model and the file formats used across the pipeline.
//!
//! Documents carry an optional binary label (document and sentence
//! classification), optional gold event clusters (sentence coreference) and
//! sentences whose tokens optionally carry BIO tags (event extraction).

mod conll;
mod jsonl;
mod split;

use std::collections::{BTreeSet, HashSet};

use crate::{Error, Result};

pub use conll::{load_conll_bio, load_conll_tokens, read_conll_bio, write_conll_bio, write_conll_bio_string};
pub use jsonl::{load_jsonl_docs, read_jsonl_docs, write_jsonl_docs, write_jsonl_docs_string, RecordKind};
pub use split::{combine_corpora, split_train_valid, SplitConfig};
pub(crate) use jsonl::id_to_string as jsonl_id;

/// Language code used when a record does not name its language.
pub const UNDETERMINED_LANGUAGE: &str = "und";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub tag: Option<String>,
}

impl Token {
    pub fn new(surface: impl Into<String>, tag: Option<String>) -> Self {
        Token {
            surface: surface.into(),
            tag,
        }
    }

    pub fn tagged(surface: impl Into<String>, tag: impl Into<String>) -> Self {
        Token::new(surface, Some(tag.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    /// Index within the document, preserved verbatim from the input
    /// (either 0- or 1-based numbering is accepted).
    pub id: usize,
    pub tokens: Vec<Token>,
    pub text: Option<String>,
}

impl Sentence {
    pub fn from_tokens(id: usize, tokens: Vec<Token>) -> Self {
        Sentence {
            id,
            tokens,
            text: None,
        }
    }

    pub fn from_text(id: usize, text: impl Into<String>) -> Self {
        Sentence {
            id,
            tokens: Vec::new(),
            text: Some(text.into()),
        }
    }

    pub fn tags(&self) -> Vec<Option<&str>> {
        self.tokens.iter().map(|t| t.tag.as_deref()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
    pub label: Option<u8>,
    pub event_clusters: Option<Vec<Vec<usize>>>,
    pub language: String,
}

impl Document {
    pub fn new(id: impl Into<String>, language: impl Into<String>, sentences: Vec<Sentence>) -> Self {
        Document {
            id: id.into(),
            sentences,
            label: None,
            event_clusters: None,
            language: language.into(),
        }
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_clusters(mut self, clusters: Vec<Vec<usize>>) -> Self {
        self.event_clusters = Some(clusters);
        self
    }

    pub fn sentence_ids(&self) -> Vec<usize> {
        self.sentences.iter().map(|s| s.id).collect()
    }

    /// Checks sentence-id uniqueness, label range and that the event
    /// clusters are disjoint and refer to existing sentences.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for s in &self.sentences {
            if !ids.insert(s.id) {
                return Err(Error::invalid(format!(
                    "document `{}`: duplicate sentence id {}",
                    self.id, s.id
                )));
            }
            if let Some(tok) = s.tokens.iter().find(|t| t.surface.is_empty()) {
                return Err(Error::invalid(format!(
                    "document `{}`, sentence {}: empty token surface (tag {:?})",
                    self.id, s.id, tok.tag
                )));
            }
        }
        if let Some(label) = self.label {
            if label > 1 {
                return Err(Error::invalid(format!(
                    "document `{}`: label {} is not binary",
                    self.id, label
                )));
            }
        }
        if let Some(clusters) = &self.event_clusters {
            let mut seen = HashSet::new();
            for &m in clusters.iter().flatten() {
                if !ids.contains(&m) {
                    return Err(Error::invalid(format!(
                        "document `{}`: cluster member {} is not a sentence id",
                        self.id, m
                    )));
                }
                if !seen.insert(m) {
                    return Err(Error::invalid(format!(
                        "document `{}`: sentence {} appears in more than one cluster",
                        self.id, m
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub languages: BTreeSet<String>,
}

impl Corpus {
    /// Builds a corpus, validating every document and doc-id uniqueness.
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut ids = HashSet::new();
        for doc in &documents {
            doc.validate()?;
            if !ids.insert(doc.id.as_str()) {
                return Err(Error::invalid(format!("duplicate document id `{}`", doc.id)));
            }
        }
        let languages = documents.iter().map(|d| d.language.clone()).collect();
        Ok(Corpus {
            documents,
            languages,
        })
    }

    pub fn empty() -> Self {
        Corpus::default()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.documents.iter().flat_map(|d| d.sentences.iter())
    }

    pub fn token_count(&self) -> usize {
        self.sentences().map(|s| s.tokens.len()).sum()
    }

    /// Relabels every document with `language`.
    pub fn with_language(mut self, language: &str) -> Self {
        for doc in &mut self.documents {
            doc.language = language.to_string();
        }
        self.languages = std::iter::once(language.to_string()).collect();
        if self.documents.is_empty() {
            self.languages.clear();
        }
        self
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_overlapping_clusters() {
        let doc = Document::new("d", "en", (1..=3).map(|i| Sentence::from_text(i, "x")).collect())
            .with_clusters(vec![vec![1, 2], vec![2, 3]]);
        assert!(doc.validate().is_err());
    }

    #[test]
    fn rejects_dangling_cluster_member() {
        let doc = Document::new("d", "en", vec![Sentence::from_text(1, "x")])
            .with_clusters(vec![vec![1, 9]]);
        assert!(doc.validate().is_err());
    }

    #[test]
    fn rejects_duplicate_doc_ids() {
        let a = Document::new("d", "en", vec![]);
        assert!(Corpus::new(vec![a.clone(), a]).is_err());
    }

    #[test]
    fn languages_follow_documents() {
        let c = Corpus::new(vec![Document::new("a", "en", vec![]), Document::new("b", "es", vec![])]).unwrap();
        assert_eq!(c.languages.iter().cloned().collect::<Vec<_>>(), vec!["en", "es"]);
    }
}
