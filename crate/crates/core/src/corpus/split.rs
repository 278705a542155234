use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Corpus;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitConfig {
    /// 80/20 split used for the document and sentence classifiers.
    pub const CLASSIFICATION_FRACTION: f64 = 0.8;
    /// 90/10 split used for token-level and coreference data.
    pub const TOKEN_FRACTION: f64 = 0.9;

    pub fn new(train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        Ok(SplitConfig {
            train_fraction,
            seed,
        })
    }

    pub fn classification(seed: u64) -> Self {
        SplitConfig {
            train_fraction: Self::CLASSIFICATION_FRACTION,
            seed,
        }
    }

    pub fn token(seed: u64) -> Self {
        SplitConfig {
            train_fraction: Self::TOKEN_FRACTION,
            seed,
        }
    }
}

/// Document-level train/validation split.
///
/// Documents are shuffled with a seeded ChaCha8 generator and the first
/// `round(fraction * n)` (clamped so neither side is empty) go to training.
/// Each side keeps the input's document order.
pub fn split_train_valid(corpus: &Corpus, cfg: &SplitConfig) -> Result<(Corpus, Corpus)> {
    SplitConfig::new(cfg.train_fraction, cfg.seed)?;
    let n = corpus.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "cannot split a corpus of {n} document(s); need at least 2"
        )));
    }
    let n_train = ((cfg.train_fraction * n as f64).round() as usize).clamp(1, n - 1);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut in_train = vec![false; n];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }

    let (train, valid): (Vec<_>, Vec<_>) = corpus
        .documents
        .iter()
        .cloned()
        .zip(in_train)
        .partition(|(_, t)| *t);
    let strip = |v: Vec<(crate::corpus::Document, bool)>| {
        Corpus::new(v.into_iter().map(|(d, _)| d).collect())
    };
    Ok((strip(train)?, strip(valid)?))
}

/// Concatenates corpora into one, prefixing every document id with its
/// language code (`en_d1`). Ids that still collide get a `#k` suffix.
pub fn combine_corpora(corpora: &[Corpus]) -> Corpus {
    let mut used = HashSet::new();
    let mut documents = Vec::with_capacity(corpora.iter().map(Corpus::len).sum());
    for corpus in corpora {
        for doc in &corpus.documents {
            let mut doc = doc.clone();
            let base = format!("{}_{}", doc.language, doc.id);
            let mut id = base.clone();
            let mut k = 1;
            while used.contains(&id) {
                k += 1;
                id = format!("{base}#{k}");
            }
            used.insert(id.clone());
            doc.id = id;
            documents.push(doc);
        }
    }
    let languages = documents.iter().map(|d| d.language.clone()).collect();
    Corpus {
        documents,
        languages,
    }
}
