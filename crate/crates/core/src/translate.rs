//! CSLS retrieval and word-by-word translation of BIO-tagged corpora.
//!
//! A source word is mapped into the target space and replaced by the target
//! word with the highest cross-domain similarity local scaling score
//!
//! ```text
//! CSLS(Wx, y) = 2 cos(Wx, y) - r_T(Wx) - r_S(y)
//! ```
//!
//! where `r_T(Wx)` is the mean cosine of `Wx` to its `k` nearest target
//! words and `r_S(y)` the mean cosine of `y` to its `k` nearest mapped
//! source words. Every token keeps its tag, so the output corpus has the
//! same tag sequences as the input.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;

use crate::align::MappingMatrix;
use crate::corpus::{Corpus, Token, UNDETERMINED_LANGUAGE};
use crate::embedding::{top_k, EmbeddingSpace};
use crate::linalg::dot;
use crate::{Error, Result};

/// Neighbourhood size used when none is configured.
pub const DEFAULT_CSLS_K: usize = 10;

/// Surface emitted for OOV tokens under [`OovAction::Mark`].
pub const OOV_MARKER: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CslsParams {
    pub k: usize,
}

impl Default for CslsParams {
    fn default() -> Self {
        CslsParams { k: DEFAULT_CSLS_K }
    }
}

impl CslsParams {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("CSLS neighbourhood size must be at least 1"));
        }
        Ok(CslsParams { k })
    }
}

/// Mean of the `k` largest values, summed in descending order.
fn mean_top_k<I: IntoIterator<Item = (usize, f64)>>(scores: I, k: usize) -> f64 {
    let top = top_k(scores, k);
    if top.is_empty() {
        return 0.0;
    }
    top.iter().map(|&(_, s)| s).sum::<f64>() / top.len() as f64
}

fn check_spaces(src: &EmbeddingSpace, tgt: &EmbeddingSpace, w: &MappingMatrix) -> Result<()> {
    if !src.is_normalized() || !tgt.is_normalized() {
        return Err(Error::invalid("CSLS requires normalised embedding spaces"));
    }
    for d in [src.dim(), tgt.dim()] {
        if d != w.dim() {
            return Err(Error::Dimension {
                expected: w.dim(),
                actual: d,
            });
        }
    }
    Ok(())
}

/// Largest source × target cosine matrix [`CslsIndex`] keeps in memory
/// (32 MiB); bigger vocabularies recompute cosines on demand.
pub const DENSE_COSINE_LIMIT: usize = 1 << 22;

/// Mapped source vectors plus the cached neighbourhood terms for every
/// source and target word.
#[derive(Debug)]
pub struct CslsIndex<'a> {
    src: &'a EmbeddingSpace,
    tgt: &'a EmbeddingSpace,
    mapping: &'a MappingMatrix,
    params: CslsParams,
    mapped: Vec<f64>,
    /// Row-major source × target cosines, kept when small enough.
    cos: Option<Vec<f64>>,
    /// `r_T(W s)` for each source word `s`.
    r_src: Vec<f64>,
    /// `r_S(t)` for each target word `t`.
    r_tgt: Vec<f64>,
}

impl<'a> CslsIndex<'a> {
    pub fn build(
        src: &'a EmbeddingSpace,
        tgt: &'a EmbeddingSpace,
        mapping: &'a MappingMatrix,
        params: CslsParams,
    ) -> Result<Self> {
        check_spaces(src, tgt, mapping)?;
        CslsParams::new(params.k)?;
        let dim = mapping.dim();
        let mapped: Vec<f64> = (0..src.len())
            .into_par_iter()
            .flat_map_iter(|i| mapping.apply(src.row(i)))
            .collect();
        let mapped_rows = |i: usize| &mapped[i * dim..(i + 1) * dim];
        let (n_src, n_tgt) = (src.len(), tgt.len());
        let cos: Option<Vec<f64>> = (n_src * n_tgt <= DENSE_COSINE_LIMIT).then(|| {
            (0..n_src)
                .into_par_iter()
                .flat_map_iter(|s| (0..n_tgt).map(move |t| dot(mapped_rows(s), tgt.row(t))))
                .collect()
        });
        let cos_at = |s: usize, t: usize| match &cos {
            Some(c) => c[s * n_tgt + t],
            None => dot(mapped_rows(s), tgt.row(t)),
        };
        let r_src = (0..n_src)
            .into_par_iter()
            .map(|s| mean_top_k((0..n_tgt).map(|t| (t, cos_at(s, t))), params.k))
            .collect();
        let r_tgt = (0..n_tgt)
            .into_par_iter()
            .map(|t| mean_top_k((0..n_src).map(|s| (s, cos_at(s, t))), params.k))
            .collect();
        Ok(CslsIndex {
            src,
            tgt,
            mapping,
            params,
            mapped,
            cos,
            r_src,
            r_tgt,
        })
    }

    pub fn source(&self) -> &EmbeddingSpace {
        self.src
    }

    pub fn target(&self) -> &EmbeddingSpace {
        self.tgt
    }

    pub fn mapping(&self) -> &MappingMatrix {
        self.mapping
    }

    pub fn params(&self) -> CslsParams {
        self.params
    }

    pub fn mapped_row(&self, s: usize) -> &[f64] {
        let d = self.mapping.dim();
        &self.mapped[s * d..(s + 1) * d]
    }

    /// Cached `r_T` of source word `s`.
    pub fn source_neighbourhood(&self, s: usize) -> f64 {
        self.r_src[s]
    }

    /// Cached `r_S` of target word `t`.
    pub fn target_neighbourhood(&self, t: usize) -> f64 {
        self.r_tgt[t]
    }

    /// `r_T` of an arbitrary vector already in the target space.
    pub fn neighbourhood_of(&self, x_mapped: &[f64]) -> f64 {
        mean_top_k((0..self.tgt.len()).map(|t| (t, dot(x_mapped, self.tgt.row(t)))), self.params.k)
    }

    /// Cosine between mapped source word `s` and target word `t`.
    pub fn cosine(&self, s: usize, t: usize) -> f64 {
        match &self.cos {
            Some(c) => c[s * self.tgt.len() + t],
            None => dot(self.mapped_row(s), self.tgt.row(t)),
        }
    }

    /// CSLS between source word `s` and target word `t`.
    pub fn score(&self, s: usize, t: usize) -> f64 {
        2.0 * self.cosine(s, t) - self.r_src[s] - self.r_tgt[t]
    }

    /// CSLS between an already-mapped vector and target word `t`.
    pub fn score_vector(&self, x_mapped: &[f64], t: usize) -> f64 {
        let cos = dot(x_mapped, self.tgt.row(t));
        2.0 * cos - self.neighbourhood_of(x_mapped) - self.r_tgt[t]
    }

    /// Target index with the highest CSLS for source word `s` (lowest index
    /// on ties). `None` when the target space is empty.
    pub fn best_target(&self, s: usize) -> Option<usize> {
        argmax((0..self.tgt.len()).map(|t| (t, self.score(s, t))))
    }

    /// Source index with the highest CSLS for target word `t`.
    pub fn best_source(&self, t: usize) -> Option<usize> {
        argmax((0..self.src.len()).map(|s| (s, self.score(s, t))))
    }

    /// Plain-cosine nearest target of source word `s`, for comparison.
    pub fn nearest_by_cosine(&self, s: usize) -> Option<usize> {
        argmax((0..self.tgt.len()).map(|t| (t, self.cosine(s, t))))
    }
}

/// First index attaining the maximum.
pub(crate) fn argmax<I: IntoIterator<Item = (usize, f64)>>(scores: I) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in scores {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// CSLS of a mapped vector against target word `y`, computed from scratch
/// without any cache.
pub fn csls_score(
    x_mapped: &[f64],
    y: &str,
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    w: &MappingMatrix,
    params: CslsParams,
) -> Result<f64> {
    check_spaces(src, tgt, w)?;
    if x_mapped.len() != w.dim() {
        return Err(Error::Dimension {
            expected: w.dim(),
            actual: x_mapped.len(),
        });
    }
    let t = tgt
        .index_of(y)
        .ok_or_else(|| Error::NotInVocabulary(y.to_string()))?;
    let yv = tgt.row(t);
    let r_x = mean_top_k((0..tgt.len()).map(|j| (j, dot(x_mapped, tgt.row(j)))), params.k);
    let r_y = mean_top_k((0..src.len()).map(|s| (s, dot(&w.apply(src.row(s)), yv))), params.k);
    Ok(2.0 * dot(x_mapped, yv) - r_x - r_y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OovAction {
    /// Emit the source surface unchanged.
    CopyThrough,
    /// Drop every sentence that contains an OOV token.
    Drop,
    /// Emit [`OOV_MARKER`].
    Mark,
}

impl FromStr for OovAction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy-through" => Ok(OovAction::CopyThrough),
            "drop" => Ok(OovAction::Drop),
            "mark" => Ok(OovAction::Mark),
            other => Err(Error::invalid(format!(
                "unknown OOV action `{other}` (expected copy-through, drop or mark)"
            ))),
        }
    }
}

impl fmt::Display for OovAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OovAction::CopyThrough => "copy-through",
            OovAction::Drop => "drop",
            OovAction::Mark => "mark",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TranslationPolicy {
    pub oov_action: OovAction,
    pub punct_passthrough: bool,
    pub numeral_passthrough: bool,
}

impl Default for TranslationPolicy {
    fn default() -> Self {
        TranslationPolicy {
            oov_action: OovAction::CopyThrough,
            punct_passthrough: true,
            numeral_passthrough: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Csls,
    Passthrough,
    Oov,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslatedWord {
    pub word: String,
    pub provenance: Provenance,
}

/// Token made only of Unicode punctuation.
pub fn is_punctuation(token: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\p{P}+$").expect("valid regex"))
        .is_match(token)
}

/// Token made only of decimal digits.
pub fn is_numeral(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_ascii_digit())
}

/// Translates one word. Passthrough rules run first, then the CSLS lookup
/// (exact spelling, falling back to lowercase); anything left is OOV.
pub fn translate_word(word: &str, index: &CslsIndex<'_>, policy: &TranslationPolicy) -> TranslatedWord {
    if (policy.punct_passthrough && is_punctuation(word)) || (policy.numeral_passthrough && is_numeral(word)) {
        return TranslatedWord {
            word: word.to_string(),
            provenance: Provenance::Passthrough,
        };
    }
    let src = index.source();
    let hit = src
        .index_of(word)
        .or_else(|| src.index_of(&word.to_lowercase()))
        .and_then(|s| index.best_target(s));
    match hit {
        Some(t) => TranslatedWord {
            word: index.target().word(t).to_string(),
            provenance: Provenance::Csls,
        },
        None => TranslatedWord {
            word: match policy.oov_action {
                OovAction::Mark => OOV_MARKER.to_string(),
                OovAction::CopyThrough | OovAction::Drop => word.to_string(),
            },
            provenance: Provenance::Oov,
        },
    }
}

/// Word-by-word translation with tag copy: token `i` of every output
/// sentence is the translation of input token `i` and carries its tag
/// verbatim. Distinct surfaces are translated once.
pub fn translate_corpus(corpus: &Corpus, index: &CslsIndex<'_>, policy: &TranslationPolicy) -> Result<Corpus> {
    let mapping = index.mapping();
    let mut vocab: BTreeMap<&str, Option<TranslatedWord>> = BTreeMap::new();
    for doc in &corpus.documents {
        if doc.language != UNDETERMINED_LANGUAGE
            && mapping.src_lang != UNDETERMINED_LANGUAGE
            && doc.language != mapping.src_lang
        {
            return Err(Error::invalid(format!(
                "document `{}` is in `{}` but the mapping translates from `{}`",
                doc.id, doc.language, mapping.src_lang
            )));
        }
        for s in &doc.sentences {
            for (pos, tok) in s.tokens.iter().enumerate() {
                if tok.tag.is_none() {
                    return Err(Error::invalid(format!(
                        "document `{}`, sentence {}, token {} (`{}`) has no tag",
                        doc.id, s.id, pos, tok.surface
                    )));
                }
                vocab.insert(tok.surface.as_str(), None);
            }
        }
    }
    let words: Vec<&str> = vocab.keys().copied().collect();
    let translated: Vec<TranslatedWord> = words
        .par_iter()
        .map(|w| translate_word(w, index, policy))
        .collect();
    for (w, t) in words.iter().zip(translated) {
        vocab.insert(w, Some(t));
    }

    let mut out = corpus.clone();
    for doc in &mut out.documents {
        doc.language = mapping.tgt_lang.clone();
        doc.sentences.retain_mut(|s| {
            let mut keep = true;
            s.tokens = s
                .tokens
                .iter()
                .map(|tok| {
                    let t = vocab[tok.surface.as_str()].as_ref().expect("translated");
                    if t.provenance == Provenance::Oov && policy.oov_action == OovAction::Drop {
                        keep = false;
                    }
                    Token::new(t.word.clone(), tok.tag.clone())
                })
                .collect();
            s.text = None;
            keep
        });
    }
    out.languages = out.documents.iter().map(|d| d.language.clone()).collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Sentence};
    use crate::embedding::normalize_rows;
    use crate::linalg::Matrix;

    fn space(words: &[&str], rows: Vec<Vec<f64>>) -> EmbeddingSpace {
        normalize_rows(EmbeddingSpace::from_rows(words.to_vec(), rows).unwrap()).unwrap()
    }

    fn identity(d: usize) -> MappingMatrix {
        MappingMatrix::new(Matrix::identity(d), "en", "es").unwrap()
    }

    #[test]
    fn formula_arithmetic() {
        // CSLS = 2 cos - r_T - r_S
        let f = |cos: f64, rt: f64, rs: f64| 2.0 * cos - rt - rs;
        assert_eq!(f(1.0, 1.0, 1.0), 0.0);
        assert!((f(0.5, 0.2, 0.4) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn cached_and_fresh_scores_agree() {
        let src = space(&["a", "b", "c"], vec![vec![1.0, 0.2], vec![0.3, 1.0], vec![1.0, 1.0]]);
        let tgt = space(&["x", "y"], vec![vec![1.0, 0.1], vec![0.1, 1.0]]);
        let w = identity(2);
        let params = CslsParams::new(2).unwrap();
        let idx = CslsIndex::build(&src, &tgt, &w, params).unwrap();
        for s in 0..3 {
            for (t, y) in ["x", "y"].iter().enumerate() {
                let fresh = csls_score(idx.mapped_row(s), y, &src, &tgt, &w, params).unwrap();
                assert!((fresh - idx.score(s, t)).abs() < 1e-12);
                assert!((fresh - idx.score_vector(idx.mapped_row(s), t)).abs() < 1e-12);
            }
        }
        assert!(matches!(
            csls_score(idx.mapped_row(0), "zzz", &src, &tgt, &w, params),
            Err(Error::NotInVocabulary(_))
        ));
    }

    #[test]
    fn dense_aligned_cluster_scores_zero() {
        let v = vec![vec![1.0, 0.0]; 1];
        let src = space(&["a"], v.clone());
        let tgt = space(&["a"], v);
        let w = identity(2);
        let idx = CslsIndex::build(&src, &tgt, &w, CslsParams::new(1).unwrap()).unwrap();
        assert!(idx.score(0, 0).abs() < 1e-15);
    }

    fn toy_index_spaces() -> (EmbeddingSpace, EmbeddingSpace) {
        let src = space(
            &["buses", "were", "attacked", "KSRTC"],
            vec![vec![1.0, 0.0, 0.1], vec![0.0, 1.0, 0.1], vec![0.1, 0.1, 1.0], vec![0.5, 0.5, 0.5]],
        );
        let tgt = space(
            &["autobuses", "fueron", "atacado"],
            vec![vec![0.9, 0.1, 0.0], vec![0.1, 0.9, 0.0], vec![0.0, 0.1, 0.9]],
        );
        (src, tgt)
    }

    #[test]
    fn word_translation_and_passthrough() {
        let (mut src, tgt) = toy_index_spaces();
        src = {
            let words: Vec<String> = src.words().iter().filter(|w| *w != "KSRTC").cloned().collect();
            let rows = words.iter().map(|w| src.lookup(w).unwrap().to_vec()).collect();
            normalize_rows(EmbeddingSpace::from_rows(words, rows).unwrap()).unwrap()
        };
        let w = identity(3);
        let idx = CslsIndex::build(&src, &tgt, &w, CslsParams::new(1).unwrap()).unwrap();
        let p = TranslationPolicy::default();
        assert_eq!(translate_word("buses", &idx, &p).word, "autobuses");
        assert_eq!(translate_word("Buses", &idx, &p).word, "autobuses");
        let dot_ = translate_word(".", &idx, &p);
        assert_eq!((dot_.word.as_str(), dot_.provenance), (".", Provenance::Passthrough));
        assert_eq!(translate_word("10", &idx, &p).provenance, Provenance::Passthrough);
        let oov = translate_word("KSRTC", &idx, &p);
        assert_eq!((oov.word.as_str(), oov.provenance), ("KSRTC", Provenance::Oov));
        let mark = TranslationPolicy { oov_action: OovAction::Mark, ..p };
        assert_eq!(translate_word("KSRTC", &idx, &mark).word, OOV_MARKER);
        let strict = TranslationPolicy { punct_passthrough: false, ..p };
        assert_eq!(translate_word(".", &idx, &strict).provenance, Provenance::Oov);
    }

    fn tagged(words: &[(&str, &str)]) -> Sentence {
        Sentence::from_tokens(0, words.iter().map(|(w, t)| Token::tagged(*w, *t)).collect())
    }

    #[test]
    fn corpus_keeps_tags_and_lengths() {
        let (src, tgt) = toy_index_spaces();
        let w = identity(3);
        let idx = CslsIndex::build(&src, &tgt, &w, CslsParams::default()).unwrap();
        let sent = tagged(&[
            ("KSRTC", "B-participant"),
            ("buses", "I-participant"),
            ("were", "O"),
            ("attacked", "B-trigger"),
            ("at", "O"),
            ("ten", "B-place"),
            ("places", "I-place"),
            (".", "O"),
        ]);
        let c = Corpus::new(vec![Document::new("d", "en", vec![sent.clone()])]).unwrap();
        let out = translate_corpus(&c, &idx, &TranslationPolicy::default()).unwrap();
        let s = &out.documents[0].sentences[0];
        assert_eq!(s.tokens.len(), 8);
        assert_eq!(s.tags(), sent.tags());
        assert_eq!(out.documents[0].language, "es");
        assert!(out.languages.contains("es"));
        assert_eq!(s.tokens[1].surface, "autobuses");
        assert_eq!(s.tokens[7].surface, ".");
    }

    #[test]
    fn drop_policy_removes_oov_sentences() {
        let (src, tgt) = toy_index_spaces();
        let w = identity(3);
        let idx = CslsIndex::build(&src, &tgt, &w, CslsParams::default()).unwrap();
        let c = Corpus::new(vec![Document::new(
            "d",
            "en",
            vec![tagged(&[("buses", "O")]), {
                let mut s = tagged(&[("zzz", "O")]);
                s.id = 1;
                s
            }],
        )])
        .unwrap();
        let policy = TranslationPolicy { oov_action: OovAction::Drop, ..Default::default() };
        let out = translate_corpus(&c, &idx, &policy).unwrap();
        assert_eq!(out.documents[0].sentences.len(), 1);
        assert_eq!(out.documents[0].sentences[0].id, 0);
    }

    #[test]
    fn corpus_errors() {
        let (src, tgt) = toy_index_spaces();
        let w = identity(3);
        let idx = CslsIndex::build(&src, &tgt, &w, CslsParams::default()).unwrap();
        let untagged = Sentence::from_tokens(0, vec![Token::new("buses", None)]);
        let c = Corpus::new(vec![Document::new("d", "en", vec![untagged])]).unwrap();
        assert!(translate_corpus(&c, &idx, &TranslationPolicy::default()).is_err());
        let pt = Corpus::new(vec![Document::new("d", "pt", vec![tagged(&[("a", "O")])])]).unwrap();
        assert!(translate_corpus(&pt, &idx, &TranslationPolicy::default()).is_err());
        assert!(translate_corpus(&Corpus::empty(), &idx, &TranslationPolicy::default()).unwrap().is_empty());
    }

    #[test]
    fn punctuation_and_numerals() {
        assert!(is_punctuation("."));
        assert!(is_punctuation("¿"));
        assert!(is_punctuation("..."));
        assert!(!is_punctuation("a."));
        assert!(is_numeral("2021"));
        assert!(!is_numeral("ten"));
        assert!(!is_numeral(""));
    }

    #[test]
    fn oov_action_parsing() {
        assert_eq!("mark".parse::<OovAction>().unwrap(), OovAction::Mark);
        assert!("skip".parse::<OovAction>().is_err());
        assert_eq!(OovAction::CopyThrough.to_string(), "copy-through");
    }
}
