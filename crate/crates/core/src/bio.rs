//! BIO label schemes and constrained Viterbi decoding.
//!
//! Transitions are not learned: every transition the BIO scheme allows
//! scores zero and every forbidden one is excluded from the search, so the
//! decoded sequence is the best-scoring *valid* sequence under the emission
//! scores alone (optionally plus caller-supplied transition scores).

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Token};
use crate::{Error, Result};

/// Argument types used when no scheme file is given.
pub const DEFAULT_ENTITY_TYPES: &[&str] = &[
    "trigger",
    "participant",
    "organizer",
    "place",
    "etime",
    "target",
    "fname",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Outside,
    Begin(usize),
    Inside(usize),
}

/// Ordered entity-type inventory. Label indices are `O = 0`, then
/// `B-t, I-t` for each type `t` in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemeFile", into = "SchemeFile")]
pub struct BioScheme {
    entity_types: Vec<String>,
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct SchemeFile {
    entity_types: Vec<String>,
}

impl TryFrom<SchemeFile> for BioScheme {
    type Error = Error;
    fn try_from(f: SchemeFile) -> Result<Self> {
        BioScheme::new(f.entity_types)
    }
}

impl From<BioScheme> for SchemeFile {
    fn from(s: BioScheme) -> Self {
        SchemeFile {
            entity_types: s.entity_types,
        }
    }
}

impl Default for BioScheme {
    fn default() -> Self {
        BioScheme::new(DEFAULT_ENTITY_TYPES.iter().copied()).expect("default scheme is valid")
    }
}

impl BioScheme {
    pub fn new<I, S>(entity_types: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entity_types: Vec<String> = entity_types.into_iter().map(Into::into).collect();
        let mut labels = vec!["O".to_string()];
        for t in &entity_types {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("bad entity type name `{t}`")));
            }
            labels.push(format!("B-{t}"));
            labels.push(format!("I-{t}"));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate label `{l}` in scheme")));
            }
        }
        Ok(BioScheme {
            entity_types,
            labels,
            index,
        })
    }

    /// Reads a JSON scheme file: `{"entity_types": ["trigger", ...]}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&content)?)
    }

    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label_name(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn decode_label(&self, index: usize) -> Label {
        match index {
            0 => Label::Outside,
            i if i % 2 == 1 => Label::Begin((i - 1) / 2),
            i => Label::Inside((i - 2) / 2),
        }
    }
}

/// Which transitions the BIO scheme permits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMask {
    num_labels: usize,
    allowed: Vec<bool>,
    start_allowed: Vec<bool>,
}

impl TransitionMask {
    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn allowed(&self, from: usize, to: usize) -> bool {
        self.allowed[from * self.num_labels + to]
    }

    pub fn start_allowed(&self, label: usize) -> bool {
        self.start_allowed[label]
    }
}

/// `I-t` may only follow `B-t` or `I-t` and may not start a sequence;
/// everything else is allowed.
pub fn build_transition_mask(scheme: &BioScheme) -> TransitionMask {
    let n = scheme.num_labels();
    let mut allowed = vec![true; n * n];
    let mut start_allowed = vec![true; n];
    for to in 0..n {
        if let Label::Inside(t) = scheme.decode_label(to) {
            start_allowed[to] = false;
            for from in 0..n {
                allowed[from * n + to] = matches!(
                    scheme.decode_label(from),
                    Label::Begin(u) | Label::Inside(u) if u == t
                );
            }
        }
    }
    TransitionMask {
        num_labels: n,
        allowed,
        start_allowed,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BioRule {
    /// `I-t` as the first tag.
    InsideAtStart,
    /// `I-t` directly after `O`.
    InsideAfterOutside,
    /// `I-t` after `B-u`/`I-u` with `u != t`.
    TypeMismatch { previous: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioViolation {
    pub position: usize,
    pub tag: String,
    pub rule: BioRule,
}

impl fmt::Display for BioViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rule {
            BioRule::InsideAtStart => write!(f, "position {}: `{}` starts the sequence", self.position, self.tag),
            BioRule::InsideAfterOutside => write!(f, "position {}: `{}` follows `O`", self.position, self.tag),
            BioRule::TypeMismatch { previous } => {
                write!(f, "position {}: `{}` follows `{}`", self.position, self.tag, previous)
            }
        }
    }
}

/// Lists every BIO violation in `tags`; an empty list means the sequence is
/// valid. Fails on a tag outside the scheme.
pub fn validate_bio<S: AsRef<str>>(tags: &[S], scheme: &BioScheme) -> Result<Vec<BioViolation>> {
    let indices = tags
        .iter()
        .map(|t| {
            scheme
                .label_index(t.as_ref())
                .ok_or_else(|| Error::UnknownLabel(t.as_ref().to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (pos, &cur) in indices.iter().enumerate() {
        let Label::Inside(t) = scheme.decode_label(cur) else {
            continue;
        };
        let rule = if pos == 0 {
            Some(BioRule::InsideAtStart)
        } else {
            match scheme.decode_label(indices[pos - 1]) {
                Label::Outside => Some(BioRule::InsideAfterOutside),
                Label::Begin(u) | Label::Inside(u) if u != t => Some(BioRule::TypeMismatch {
                    previous: scheme.label_name(indices[pos - 1]).to_string(),
                }),
                _ => None,
            }
        };
        if let Some(rule) = rule {
            out.push(BioViolation {
                position: pos,
                tag: tags[pos].as_ref().to_string(),
                rule,
            });
        }
    }
    Ok(out)
}

/// Per-token label log-scores, `len × num_labels`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix {
    num_labels: usize,
    scores: Vec<f64>,
}

impl EmissionMatrix {
    pub fn new(num_labels: usize, scores: Vec<f64>) -> Result<Self> {
        if num_labels == 0 || !scores.len().is_multiple_of(num_labels) {
            return Err(Error::invalid(format!(
                "{} scores do not form rows of {num_labels} labels",
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("emission score {bad} is not finite")));
        }
        Ok(EmissionMatrix { num_labels, scores })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let l = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != l) {
            return Err(Error::Dimension {
                expected: l,
                actual: r.len(),
            });
        }
        EmissionMatrix::new(l, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.scores.len() / self.num_labels
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.scores[t * self.num_labels..(t + 1) * self.num_labels]
    }

    pub fn get(&self, t: usize, label: usize) -> f64 {
        self.scores[t * self.num_labels + label]
    }
}

fn check_transition_scores(l: usize, transitions: Option<&[f64]>) -> Result<()> {
    if let Some(tr) = transitions {
        if tr.len() != l * l {
            return Err(Error::Dimension {
                expected: l * l,
                actual: tr.len(),
            });
        }
    }
    Ok(())
}

/// Total score of `path`: emissions summed left to right, each followed by
/// the incoming transition score. Returns `None` for a path the mask forbids.
pub fn path_score(
    em: &EmissionMatrix,
    mask: &TransitionMask,
    transitions: Option<&[f64]>,
    path: &[usize],
) -> Option<f64> {
    let l = em.num_labels();
    let mut total = 0.0;
    for (t, &label) in path.iter().enumerate() {
        if t == 0 {
            if !mask.start_allowed(label) {
                return None;
            }
        } else {
            let prev = path[t - 1];
            if !mask.allowed(prev, label) {
                return None;
            }
            if let Some(tr) = transitions {
                total += tr[prev * l + label];
            }
        }
        total += em.get(t, label);
    }
    Some(total)
}

/// Highest-scoring label sequence allowed by `mask`.
///
/// Runs the recursion right to left so the path can be read off left to
/// right choosing the smallest label index among equal scores: ties resolve
/// to the lexicographically smallest optimal path. `transitions`, when
/// given, is an `L × L` row-major matrix of scores added to allowed
/// transitions; otherwise allowed transitions score zero.
pub fn viterbi_decode(
    em: &EmissionMatrix,
    mask: &TransitionMask,
    transitions: Option<&[f64]>,
) -> Result<Vec<usize>> {
    let l = em.num_labels();
    if mask.num_labels() != l {
        return Err(Error::Dimension {
            expected: mask.num_labels(),
            actual: l,
        });
    }
    check_transition_scores(l, transitions)?;
    let len = em.len();
    if len == 0 {
        return Ok(Vec::new());
    }
    let trans = |from: usize, to: usize| transitions.map_or(0.0, |tr| tr[from * l + to]);

    // best[t * l + j]: best score of positions t.. given label j at t.
    // NEG_INFINITY marks labels with no valid continuation; O always has one.
    let mut best = vec![f64::NEG_INFINITY; len * l];
    best[(len - 1) * l..].copy_from_slice(em.row(len - 1));
    for t in (0..len - 1).rev() {
        for j in 0..l {
            let mut tail = f64::NEG_INFINITY;
            for k in 0..l {
                let next = best[(t + 1) * l + k];
                if mask.allowed(j, k) && next > f64::NEG_INFINITY {
                    let v = trans(j, k) + next;
                    if v > tail {
                        tail = v;
                    }
                }
            }
            if tail > f64::NEG_INFINITY {
                best[t * l + j] = em.get(t, j) + tail;
            }
        }
    }

    let pick = |candidates: &mut dyn Iterator<Item = (usize, f64)>| {
        let mut arg = None;
        let mut top = f64::NEG_INFINITY;
        for (k, v) in candidates {
            if v > top {
                top = v;
                arg = Some(k);
            }
        }
        arg
    };

    let mut path = Vec::with_capacity(len);
    let first = pick(&mut (0..l).filter(|&j| mask.start_allowed(j)).map(|j| (j, best[j])))
        .ok_or_else(|| Error::invalid("no label may start a sequence"))?;
    path.push(first);
    for t in 1..len {
        let prev = path[t - 1];
        let next = pick(
            &mut (0..l)
                .filter(|&k| mask.allowed(prev, k) && best[t * l + k] > f64::NEG_INFINITY)
                .map(|k| (k, trans(prev, k) + best[t * l + k])),
        )
        .ok_or_else(|| Error::invalid(format!("no valid continuation at position {t}")))?;
        path.push(next);
    }
    Ok(path)
}

/// Reads a score file: one line of `num_labels` floats per token, blank line
/// between sentences.
pub fn read_score_file(content: &str, path: &Path, num_labels: usize) -> Result<Vec<EmissionMatrix>> {
    let mut out = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    let flush = |rows: &mut Vec<f64>, out: &mut Vec<EmissionMatrix>| -> Result<()> {
        if !rows.is_empty() {
            out.push(EmissionMatrix::new(num_labels, std::mem::take(rows))?);
        }
        Ok(())
    };
    for (i, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            flush(&mut rows, &mut out)?;
            continue;
        }
        let before = rows.len();
        for field in line.split_whitespace() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, i + 1, format!("score `{field}` is not finite")));
            }
            rows.push(v);
        }
        if rows.len() - before != num_labels {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected {num_labels} scores, found {}", rows.len() - before),
            ));
        }
    }
    flush(&mut rows, &mut out)?;
    Ok(out)
}

pub fn load_score_file(path: impl AsRef<Path>, num_labels: usize) -> Result<Vec<EmissionMatrix>> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_score_file(&content, path, num_labels)
}

/// Tags every sentence of `corpus` (in document order) with the decoded
/// sequence for the matching emission matrix. Existing tags are replaced.
pub fn decode_corpus(corpus: &Corpus, scores: &[EmissionMatrix], scheme: &BioScheme) -> Result<Corpus> {
    let n_sentences = corpus.sentences().filter(|s| !s.tokens.is_empty()).count();
    if n_sentences != scores.len() {
        return Err(Error::invalid(format!(
            "corpus has {n_sentences} sentences but the score file has {}",
            scores.len()
        )));
    }
    let mask = build_transition_mask(scheme);
    let mut jobs = Vec::with_capacity(n_sentences);
    for (d, doc) in corpus.documents.iter().enumerate() {
        for (s, sentence) in doc.sentences.iter().enumerate() {
            if !sentence.tokens.is_empty() {
                jobs.push((d, s));
            }
        }
    }
    let decoded: Vec<Vec<usize>> = jobs
        .par_iter()
        .zip(scores.par_iter())
        .map(|(&(d, s), em)| {
            let doc = &corpus.documents[d];
            let sentence = &doc.sentences[s];
            if em.len() != sentence.tokens.len() {
                return Err(Error::invalid(format!(
                    "document `{}`, sentence {}: {} tokens but {} score rows",
                    doc.id,
                    sentence.id,
                    sentence.tokens.len(),
                    em.len()
                )));
            }
            viterbi_decode(em, &mask, None)
        })
        .collect::<Result<_>>()?;

    let mut out = corpus.clone();
    for (&(d, s), path) in jobs.iter().zip(decoded) {
        let sentence = &mut out.documents[d].sentences[s];
        sentence.tokens = sentence
            .tokens
            .iter()
            .zip(path)
            .map(|(tok, label)| Token::tagged(tok.surface.clone(), scheme.label_name(label)))
            .collect();
    }
    Ok(out)
}
