use std::path::Path;

use super::{Corpus, Document, Sentence, Token, UNDETERMINED_LANGUAGE};
use crate::bio::BioScheme;
use crate::{Error, Result};

fn doc_id_for(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "bio".to_string())
}

/// Shared reader. With `scheme` set every line must be `token<TAB>tag` and
/// the tag must belong to the scheme; without it a bare token column is
/// also accepted.
fn read_columns(content: &str, path: &Path, scheme: Option<&BioScheme>) -> Result<Corpus> {
    let mut sentences = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    let flush = |current: &mut Vec<Token>, sentences: &mut Vec<Sentence>| {
        if !current.is_empty() {
            let id = sentences.len();
            sentences.push(Sentence::from_tokens(id, std::mem::take(current)));
        }
    };
    for (i, raw) in content.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            flush(&mut current, &mut sentences);
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let (surface, tag) = match (cols.as_slice(), scheme) {
            ([surface, tag], _) => (*surface, Some(*tag)),
            ([surface], None) => (*surface, None),
            _ => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected `token<TAB>tag`, found {} column(s)", cols.len()),
                ))
            }
        };
        if surface.is_empty() {
            return Err(Error::parse(path, lineno, "empty token"));
        }
        if let (Some(scheme), Some(tag)) = (scheme, tag) {
            if scheme.label_index(tag).is_none() {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!(
                        "tag `{tag}` at sentence {}, token {} is not in the BIO scheme",
                        sentences.len(),
                        current.len()
                    ),
                ));
            }
        }
        current.push(Token::new(surface, tag.map(str::to_string)));
    }
    flush(&mut current, &mut sentences);
    if sentences.is_empty() {
        return Ok(Corpus::empty());
    }
    Corpus::new(vec![Document::new(doc_id_for(path), UNDETERMINED_LANGUAGE, sentences)])
}

/// Parses two-column BIO content. Tags are checked against the scheme's
/// label set only; sequence validity is left to [`crate::bio::validate_bio`].
pub fn read_conll_bio(content: &str, path: &Path, scheme: &BioScheme) -> Result<Corpus> {
    read_columns(content, path, Some(scheme))
}

pub fn load_conll_bio(path: impl AsRef<Path>, scheme: &BioScheme) -> Result<Corpus> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_conll_bio(&content, path, scheme)
}

/// Loads a token file whose tag column is optional (decoder input).
pub fn load_conll_tokens(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_columns(&content, path, None)
}

pub fn write_conll_bio_string(corpus: &Corpus) -> Result<String> {
    let mut out = String::new();
    for doc in &corpus.documents {
        for sentence in &doc.sentences {
            if sentence.tokens.is_empty() {
                continue;
            }
            for (pos, tok) in sentence.tokens.iter().enumerate() {
                let tag = tok.tag.as_deref().ok_or_else(|| {
                    Error::invalid(format!(
                        "document `{}`, sentence {}, token {} (`{}`) has no tag",
                        doc.id, sentence.id, pos, tok.surface
                    ))
                })?;
                out.push_str(&tok.surface);
                out.push('\t');
                out.push_str(tag);
                out.push('\n');
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn write_conll_bio(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let content = write_conll_bio_string(corpus)?;
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}
