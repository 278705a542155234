//! Word-embedding spaces: text loading, row normalisation and exact cosine
//! nearest-neighbour search.

use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use rayon::prelude::*;

use crate::linalg::dot;
use crate::{Error, Result};

/// Vocabulary cap applied by the command-line tools when none is given.
pub const DEFAULT_MAX_VOCAB: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    words: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    matrix: Vec<f64>,
    normalized: bool,
}

impl EmbeddingSpace {
    /// Builds a space from parallel word and row lists. Duplicate words are
    /// rejected here; the file loader keeps the first occurrence instead.
    pub fn from_rows<S: Into<String>>(words: Vec<S>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        Self::from_flat(words, dim, rows.concat())
    }

    pub fn from_flat<S: Into<String>>(words: Vec<S>, dim: usize, matrix: Vec<f64>) -> Result<Self> {
        let words: Vec<String> = words.into_iter().map(Into::into).collect();
        if matrix.len() != words.len() * dim {
            return Err(Error::Dimension {
                expected: words.len() * dim,
                actual: matrix.len(),
            });
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate word `{w}`")));
            }
        }
        Ok(EmbeddingSpace {
            words,
            index,
            dim,
            matrix,
            normalized: false,
        })
    }

    /// The first `n` words (file order is frequency order), keeping the
    /// normalisation flag.
    pub fn truncated(&self, n: usize) -> EmbeddingSpace {
        let n = n.min(self.len());
        let words = self.words[..n].to_vec();
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        EmbeddingSpace {
            words,
            index,
            dim: self.dim,
            matrix: self.matrix[..n * self.dim].to_vec(),
            normalized: self.normalized,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    /// Vector for `word`, or `None` when it is out of vocabulary.
    pub fn lookup(&self, word: &str) -> Option<&[f64]> {
        self.index_of(word).map(|i| self.row(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.matrix.chunks_exact(self.dim.max(1)).take(self.words.len())
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }
}

/// Parses the word-vector text format: a `n d` header, then one
/// `word v1 .. vd` line per word. Keeps at most `max_vocab` rows in file
/// order; a repeated word keeps its first vector and logs a warning.
pub fn read_text_embeddings<R: BufRead>(reader: R, path: &Path, max_vocab: Option<usize>) -> Result<EmbeddingSpace> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::parse(path, 1, "missing `n d` header")),
    };
    let mut fields = header.split_whitespace();
    let parse_count = |f: Option<&str>| f.and_then(|v| v.parse::<usize>().ok());
    let (declared, dim) = match (parse_count(fields.next()), parse_count(fields.next()), fields.next()) {
        (Some(n), Some(d), None) => (n, d),
        _ => return Err(Error::parse(path, 1, format!("bad header `{header}`, expected `n d`"))),
    };
    let cap = max_vocab.unwrap_or(usize::MAX);

    let mut words = Vec::new();
    let mut index = HashMap::new();
    let mut matrix = Vec::new();
    let mut seen_rows = 0usize;
    for (i, line) in lines {
        if words.len() >= cap {
            break;
        }
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches(['\r', '\n', ' ']);
        if line.is_empty() {
            continue;
        }
        seen_rows += 1;
        let mut parts = line.split(' ').filter(|p| !p.is_empty());
        let word = parts.next().unwrap_or_default().to_string();
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| Error::parse(path, lineno, format!("`{p}` is not a number")))
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::parse(
                path,
                lineno,
                format!("`{word}` has {} values, header says {dim}", values.len()),
            ));
        }
        match index.entry(word) {
            Entry::Occupied(e) => {
                warn!("{}:{lineno}: duplicate word `{}` ignored", path.display(), e.key());
            }
            Entry::Vacant(e) => {
                words.push(e.key().clone());
                e.insert(words.len() - 1);
                matrix.extend(values);
            }
        }
    }
    if words.len() < cap && seen_rows != declared {
        warn!(
            "{}: header declares {declared} vectors, file holds {seen_rows}",
            path.display()
        );
    }
    Ok(EmbeddingSpace {
        words,
        index,
        dim,
        matrix,
        normalized: false,
    })
}

pub fn load_text_embeddings(path: impl AsRef<Path>, max_vocab: Option<usize>) -> Result<EmbeddingSpace> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_text_embeddings(BufReader::new(file), path, max_vocab)
}

/// Writes the `n d` text format. Values use the shortest round-trip
/// representation, so write-then-load is lossless.
pub fn write_text_embeddings(space: &EmbeddingSpace) -> String {
    let mut out = format!("{} {}\n", space.len(), space.dim());
    for (w, row) in space.words.iter().zip(space.rows()) {
        out.push_str(w);
        for v in row {
            out.push(' ');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

/// Scales every row to unit L2 norm. Fails on an all-zero row.
pub fn normalize_rows(mut space: EmbeddingSpace) -> Result<EmbeddingSpace> {
    let dim = space.dim;
    if dim > 0 {
        for (i, row) in space.matrix.chunks_exact_mut(dim).enumerate() {
            let norm = dot(row, row).sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::invalid(format!(
                    "cannot normalise `{}`: its vector has norm {norm}",
                    space.words[i]
                )));
            }
            if norm != 1.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
    space.normalized = true;
    Ok(space)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub word: String,
    pub score: f64,
}

/// Heap entry ordered so the *worst* candidate sits on top: lower score is
/// worse, and among equal scores the higher row index is worse.
#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| self.1.cmp(&other.1))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The `k` best `(index, score)` pairs, score descending, ties by ascending
/// index.
pub(crate) fn top_k<I>(scores: I, k: usize) -> Vec<(usize, f64)>
where
    I: IntoIterator<Item = (usize, f64)>,
{
    if k == 0 {
        return Vec::new();
    }
    let mut heap = BinaryHeap::with_capacity(k + 1);
    for (i, s) in scores {
        let c = Candidate(s, i);
        if heap.len() < k {
            heap.push(c);
        } else if let Some(worst) = heap.peek() {
            if c < *worst {
                heap.pop();
                heap.push(c);
            }
        }
    }
    let mut out: Vec<(usize, f64)> = heap.into_iter().map(|Candidate(s, i)| (i, s)).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

const KNN_CHUNK: usize = 4096;

/// Exact cosine k-nearest neighbours of `query`. `k` larger than the
/// vocabulary returns every word.
pub fn knn_cosine(space: &EmbeddingSpace, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
    if !space.normalized {
        return Err(Error::invalid("k-NN requires a normalised embedding space"));
    }
    if query.len() != space.dim {
        return Err(Error::Dimension {
            expected: space.dim,
            actual: query.len(),
        });
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let qnorm = dot(query, query).sqrt();
    let scale = if qnorm > 0.0 { qnorm } else { 1.0 };
    let dim = space.dim.max(1);
    let partial: Vec<Vec<(usize, f64)>> = space
        .matrix
        .par_chunks(KNN_CHUNK * dim)
        .enumerate()
        .map(|(c, chunk)| {
            let base = c * KNN_CHUNK;
            top_k(
                chunk
                    .chunks_exact(dim)
                    .enumerate()
                    .map(|(i, row)| (base + i, dot(row, query) / scale)),
                k,
            )
        })
        .collect();
    Ok(top_k(partial.into_iter().flatten(), k)
        .into_iter()
        .map(|(index, score)| Neighbor {
            index,
            word: space.words[index].clone(),
            score,
        })
        .collect())
}

/// Words present verbatim in both vocabularies, as `(w, w)` pairs sorted
/// lexicographically.
pub fn identical_string_pairs(src: &EmbeddingSpace, tgt: &EmbeddingSpace) -> Vec<(String, String)> {
    identical_string_pairs_with(src, tgt, false)
}

/// Like [`identical_string_pairs`]; with `lowercase` the match ignores case
/// and pairs the first source and first target spelling of each form.
pub fn identical_string_pairs_with(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    lowercase: bool,
) -> Vec<(String, String)> {
    let mut pairs: Vec<(String, String)> = if lowercase {
        let mut first_tgt: HashMap<String, &str> = HashMap::new();
        for w in &tgt.words {
            first_tgt.entry(w.to_lowercase()).or_insert(w);
        }
        let mut used = std::collections::HashSet::new();
        src.words
            .iter()
            .filter_map(|w| {
                let key = w.to_lowercase();
                let t = first_tgt.get(&key)?;
                used.insert(key).then(|| (w.clone(), t.to_string()))
            })
            .collect()
    } else {
        src.words
            .iter()
            .filter(|w| tgt.contains(w))
            .map(|w| (w.clone(), w.clone()))
            .collect()
    };
    pairs.sort();
    pairs
}
