use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Corpus, Document, Sentence, UNDETERMINED_LANGUAGE};
use crate::{Error, Result};

/// Which JSONL record layout a file uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordKind {
    /// `{"id", "text", "label"}`: one news article per line.
    DocLabel,
    /// `{"id", "sentence", "label"}`: one sentence per line.
    SentLabel,
    /// `{"id", "sentence_no", "sentences", "event_clusters"}`.
    Coref,
}

impl FromStr for RecordKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "doc-label" => Ok(RecordKind::DocLabel),
            "sent-label" => Ok(RecordKind::SentLabel),
            "coref" => Ok(RecordKind::Coref),
            other => Err(Error::invalid(format!(
                "unknown record kind `{other}` (expected doc-label, sent-label or coref)"
            ))),
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecordKind::DocLabel => "doc-label",
            RecordKind::SentLabel => "sent-label",
            RecordKind::Coref => "coref",
        })
    }
}

#[derive(Deserialize)]
struct LabelRecordIn {
    id: Value,
    #[serde(default, alias = "sentence")]
    text: Option<String>,
    #[serde(default)]
    label: Option<u8>,
    #[serde(default)]
    lang: Option<String>,
}

#[derive(Deserialize)]
struct CorefRecordIn {
    id: Value,
    #[serde(default)]
    sentence_no: Vec<usize>,
    #[serde(default)]
    sentences: Vec<String>,
    #[serde(default)]
    event_clusters: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    lang: Option<String>,
}

#[derive(Serialize)]
struct DocRecordOut<'a> {
    id: &'a str,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lang: Option<&'a str>,
}

#[derive(Serialize)]
struct SentRecordOut<'a> {
    id: &'a str,
    sentence: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lang: Option<&'a str>,
}

#[derive(Serialize)]
struct CorefRecordOut<'a> {
    id: &'a str,
    sentence_no: Vec<usize>,
    sentences: Vec<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    event_clusters: Option<&'a Vec<Vec<usize>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lang: Option<&'a str>,
}

pub(crate) fn id_to_string(id: &Value) -> Option<String> {
    match id {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_line(path: &Path, lineno: usize, line: &str, kind: RecordKind) -> Result<Document> {
    let bad = |msg: String| Error::parse(path, lineno, msg);
    let doc = match kind {
        RecordKind::DocLabel | RecordKind::SentLabel => {
            let rec: LabelRecordIn = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            let id = id_to_string(&rec.id).ok_or_else(|| bad("`id` must be a string or number".into()))?;
            let lang = rec.lang.unwrap_or_else(|| UNDETERMINED_LANGUAGE.to_string());
            let text = rec.text.ok_or_else(|| bad("missing `text`/`sentence` field".into()))?;
            let mut doc = Document::new(id, lang, vec![Sentence::from_text(0, text)]);
            doc.label = rec.label;
            doc
        }
        RecordKind::Coref => {
            let rec: CorefRecordIn = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            let id = id_to_string(&rec.id).ok_or_else(|| bad("`id` must be a string or number".into()))?;
            if rec.sentence_no.len() != rec.sentences.len() {
                return Err(bad(format!(
                    "`sentence_no` has {} entries but `sentences` has {}",
                    rec.sentence_no.len(),
                    rec.sentences.len()
                )));
            }
            let sentences = rec
                .sentence_no
                .iter()
                .zip(rec.sentences)
                .map(|(&no, text)| Sentence::from_text(no, text))
                .collect();
            let lang = rec.lang.unwrap_or_else(|| UNDETERMINED_LANGUAGE.to_string());
            let mut doc = Document::new(id, lang, sentences);
            doc.event_clusters = rec.event_clusters;
            doc
        }
    };
    doc.validate().map_err(|e| bad(e.to_string()))?;
    Ok(doc)
}

/// Parses JSONL content; `path` is only used in error messages.
pub fn read_jsonl_docs(content: &str, path: &Path, kind: RecordKind) -> Result<Corpus> {
    let mut docs = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        docs.push(parse_line(path, i + 1, line, kind)?);
    }
    Corpus::new(docs)
}

pub fn load_jsonl_docs(path: impl AsRef<Path>, kind: RecordKind) -> Result<Corpus> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_jsonl_docs(&content, path, kind)
}

fn lang_field(doc: &Document) -> Option<&str> {
    (doc.language != UNDETERMINED_LANGUAGE).then_some(doc.language.as_str())
}

fn doc_text(doc: &Document) -> Result<&str> {
    match doc.sentences.as_slice() {
        [s] => s.text.as_deref().ok_or_else(|| {
            Error::invalid(format!("document `{}` has no text to write", doc.id))
        }),
        _ => Err(Error::invalid(format!(
            "document `{}` must hold exactly one text sentence for a label record",
            doc.id
        ))),
    }
}

pub fn write_jsonl_docs_string(corpus: &Corpus, kind: RecordKind) -> Result<String> {
    let mut out = String::new();
    for doc in &corpus.documents {
        let line = match kind {
            RecordKind::DocLabel => serde_json::to_string(&DocRecordOut {
                id: &doc.id,
                text: doc_text(doc)?,
                label: doc.label,
                lang: lang_field(doc),
            })?,
            RecordKind::SentLabel => serde_json::to_string(&SentRecordOut {
                id: &doc.id,
                sentence: doc_text(doc)?,
                label: doc.label,
                lang: lang_field(doc),
            })?,
            RecordKind::Coref => serde_json::to_string(&CorefRecordOut {
                id: &doc.id,
                sentence_no: doc.sentence_ids(),
                sentences: doc
                    .sentences
                    .iter()
                    .map(|s| s.text.as_deref().unwrap_or(""))
                    .collect(),
                event_clusters: doc.event_clusters.as_ref(),
                lang: lang_field(doc),
            })?,
        };
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl_docs(corpus: &Corpus, kind: RecordKind, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let content = write_jsonl_docs_string(corpus, kind)?;
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}
