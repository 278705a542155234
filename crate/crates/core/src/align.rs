//! Orthogonal mapping between two embedding spaces.
//!
//! The mapping is fitted by orthogonal Procrustes on a seed dictionary
//! (identical strings by default) and optionally refined by alternating
//! Procrustes with mutual-nearest-neighbour CSLS dictionary induction.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use rayon::prelude::*;

use crate::corpus::UNDETERMINED_LANGUAGE;
use crate::embedding::{identical_string_pairs_with, EmbeddingSpace};
use crate::linalg::{orthogonal_polar_factor, Matrix};
use crate::translate::{CslsIndex, CslsParams};
use crate::{Error, Result};

/// Bound on `‖WᵀW − I‖_F` checked after every solve.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-4;

pub const DEFAULT_REFINE_ITERATIONS: usize = 5;

/// `d × d` linear map from the source to the target space.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingMatrix {
    matrix: Matrix,
    pub src_lang: String,
    pub tgt_lang: String,
}

impl MappingMatrix {
    pub fn new(matrix: Matrix, src_lang: impl Into<String>, tgt_lang: impl Into<String>) -> Result<Self> {
        if matrix.rows() != matrix.cols() {
            return Err(Error::Dimension {
                expected: matrix.rows(),
                actual: matrix.cols(),
            });
        }
        Ok(MappingMatrix {
            matrix,
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
        })
    }

    pub fn identity(dim: usize) -> Self {
        MappingMatrix {
            matrix: Matrix::identity(dim),
            src_lang: UNDETERMINED_LANGUAGE.into(),
            tgt_lang: UNDETERMINED_LANGUAGE.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// `W x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(x)
    }

    pub fn orthogonality_error(&self) -> f64 {
        self.matrix.orthogonality_error()
    }

    /// Text form: a line holding `d`, then `d` rows of `d` floats.
    pub fn to_text(&self) -> String {
        let d = self.dim();
        let mut out = format!("{d}\n");
        for r in 0..d {
            let row: Vec<String> = self.matrix.row(r).iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn from_text(content: &str, path: &Path) -> Result<Self> {
        let mut lines = content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let d: usize = match lines.next() {
            Some((i, l)) => l
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad dimension header `{l}`")))?,
            None => return Err(Error::parse(path, 1, "empty mapping file")),
        };
        let mut data = Vec::with_capacity(d * d);
        for (i, line) in lines {
            let before = data.len();
            for f in line.split_whitespace() {
                data.push(
                    f.parse::<f64>()
                        .map_err(|_| Error::parse(path, i + 1, format!("`{f}` is not a number")))?,
                );
            }
            if data.len() - before != d {
                return Err(Error::parse(path, i + 1, format!("expected {d} values")));
            }
        }
        if data.len() != d * d {
            return Err(Error::parse(path, 1, format!("expected {d} rows, found {}", data.len() / d.max(1))));
        }
        MappingMatrix::new(Matrix::from_vec(d, d, data)?, UNDETERMINED_LANGUAGE, UNDETERMINED_LANGUAGE)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MappingMatrix::from_text(&content, path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictionarySource {
    IdenticalStrings,
    File,
    Induced,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedDictionary {
    pub pairs: Vec<(String, String)>,
    pub source: DictionarySource,
}

impl SeedDictionary {
    /// Keeps pairs whose words exist in their spaces, dropping duplicates.
    /// Returns the dictionary and the number of pairs dropped.
    pub fn restricted(
        pairs: impl IntoIterator<Item = (String, String)>,
        source: DictionarySource,
        src: &EmbeddingSpace,
        tgt: &EmbeddingSpace,
    ) -> (Self, usize) {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut dropped = 0;
        for (s, t) in pairs {
            if src.contains(&s) && tgt.contains(&t) && seen.insert((s.clone(), t.clone())) {
                kept.push((s, t));
            } else {
                dropped += 1;
            }
        }
        (SeedDictionary { pairs: kept, source }, dropped)
    }

    pub fn identical_strings(src: &EmbeddingSpace, tgt: &EmbeddingSpace, lowercase: bool) -> Self {
        SeedDictionary {
            pairs: identical_string_pairs_with(src, tgt, lowercase),
            source: DictionarySource::IdenticalStrings,
        }
    }

    /// Reads `src<TAB>tgt` lines (extra columns and blank lines ignored).
    pub fn read_tsv(content: &str, path: &Path) -> Result<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next()) {
                (Some(s), Some(t)) if !s.is_empty() && !t.is_empty() => pairs.push((s.to_string(), t.to_string())),
                _ => return Err(Error::parse(path, i + 1, "expected `src<TAB>tgt`")),
            }
        }
        Ok(pairs)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn require_normalized(src: &EmbeddingSpace, tgt: &EmbeddingSpace) -> Result<()> {
    if !src.is_normalized() || !tgt.is_normalized() {
        return Err(Error::invalid("alignment requires normalised embedding spaces"));
    }
    if src.dim() != tgt.dim() {
        return Err(Error::Dimension {
            expected: src.dim(),
            actual: tgt.dim(),
        });
    }
    Ok(())
}

fn check_orthogonal(w: &MappingMatrix) -> Result<()> {
    let err = w.orthogonality_error();
    if err.is_finite() && err < ORTHOGONALITY_TOLERANCE {
        Ok(())
    } else {
        Err(Error::invalid(format!("mapping lost orthogonality: ‖WᵀW − I‖ = {err:e}")))
    }
}

/// Orthogonal `W` minimising `Σ ‖W x_i − y_i‖²` over the dictionary pairs:
/// `W = U Vᵀ` where `U Σ Vᵀ = Σ y_i x_iᵀ`.
pub fn procrustes_solve(src: &EmbeddingSpace, tgt: &EmbeddingSpace, dict: &SeedDictionary) -> Result<MappingMatrix> {
    require_normalized(src, tgt)?;
    if dict.is_empty() {
        return Err(Error::invalid("cannot fit a mapping from an empty dictionary"));
    }
    let d = src.dim();
    if dict.len() < d {
        warn!("dictionary has {} pairs for dimension {d}; the mapping is underdetermined", dict.len());
    }
    let mut cross = vec![0.0; d * d];
    for (s, t) in &dict.pairs {
        let x = src.lookup(s).ok_or_else(|| Error::NotInVocabulary(s.clone()))?;
        let y = tgt.lookup(t).ok_or_else(|| Error::NotInVocabulary(t.clone()))?;
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for (c, &xj) in cross[i * d..(i + 1) * d].iter_mut().zip(x) {
                *c += yi * xj;
            }
        }
    }
    let w = orthogonal_polar_factor(&Matrix::from_vec(d, d, cross)?)?;
    let mapping = MappingMatrix::new(w, UNDETERMINED_LANGUAGE, UNDETERMINED_LANGUAGE)?;
    check_orthogonal(&mapping)?;
    Ok(mapping)
}

/// Mutual CSLS nearest neighbours under `w`: `(s, t)` is kept when `t` is
/// the best target for `s` and `s` the best source for `t`.
pub fn induce_dictionary_csls(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    w: &MappingMatrix,
    params: CslsParams,
) -> Result<SeedDictionary> {
    let index = CslsIndex::build(src, tgt, w, params)?;
    let forward: Vec<Option<usize>> = (0..src.len()).into_par_iter().map(|s| index.best_target(s)).collect();
    let backward: Vec<Option<usize>> = (0..tgt.len()).into_par_iter().map(|t| index.best_source(t)).collect();
    let pairs = forward
        .iter()
        .enumerate()
        .filter_map(|(s, t)| {
            let t = (*t)?;
            (backward[t] == Some(s)).then(|| (src.word(s).to_string(), tgt.word(t).to_string()))
        })
        .collect();
    Ok(SeedDictionary {
        pairs,
        source: DictionarySource::Induced,
    })
}

/// Every mapping produced during refinement.
#[derive(Debug, Clone)]
pub struct RefineTrace {
    /// `mappings[0]` is fitted on the seed; `mappings[i]` on the dictionary
    /// induced from `mappings[i - 1]`.
    pub mappings: Vec<MappingMatrix>,
    pub dictionary_sizes: Vec<usize>,
    pub stopped_early: bool,
}

impl RefineTrace {
    pub fn last(&self) -> &MappingMatrix {
        self.mappings.last().expect("at least the seed mapping")
    }
}

/// Refinement loop with a caller-supplied induction step, e.g. one that
/// searches a frequency-truncated vocabulary.
pub fn refine_with<F>(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    seed: &SeedDictionary,
    iterations: usize,
    mut induce: F,
) -> Result<RefineTrace>
where
    F: FnMut(&MappingMatrix) -> Result<SeedDictionary>,
{
    let mut trace = RefineTrace {
        mappings: vec![procrustes_solve(src, tgt, seed)?],
        dictionary_sizes: vec![seed.len()],
        stopped_early: false,
    };
    for it in 1..=iterations {
        let dict = induce(trace.last())?;
        if dict.is_empty() {
            warn!("refinement iteration {it}: induced dictionary is empty, keeping the previous mapping");
            trace.stopped_early = true;
            break;
        }
        trace.dictionary_sizes.push(dict.len());
        let w = procrustes_solve(src, tgt, &dict)?;
        trace.mappings.push(w);
    }
    Ok(trace)
}

/// Procrustes on the seed followed by `iterations` rounds of CSLS
/// induction and refitting, keeping every intermediate mapping.
pub fn refine_mapping_traced(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    seed: &SeedDictionary,
    iterations: usize,
    params: CslsParams,
) -> Result<RefineTrace> {
    refine_with(src, tgt, seed, iterations, |w| induce_dictionary_csls(src, tgt, w, params))
}

pub fn refine_mapping(
    src: &EmbeddingSpace,
    tgt: &EmbeddingSpace,
    seed: &SeedDictionary,
    iterations: usize,
    params: CslsParams,
) -> Result<MappingMatrix> {
    Ok(refine_mapping_traced(src, tgt, seed, iterations, params)?.last().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::normalize_rows;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space(words: Vec<String>, rows: Vec<Vec<f64>>) -> EmbeddingSpace {
        normalize_rows(EmbeddingSpace::from_rows(words, rows).unwrap()).unwrap()
    }

    fn identity_dict(s: &EmbeddingSpace) -> SeedDictionary {
        SeedDictionary {
            pairs: s.words().iter().map(|w| (w.clone(), w.clone())).collect(),
            source: DictionarySource::File,
        }
    }

    fn random_space(n: usize, d: usize, seed: u64) -> EmbeddingSpace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        space((0..n).map(|i| format!("w{i}")).collect(), rows)
    }

    #[test]
    fn identity_case() {
        let s = random_space(20, 5, 1);
        let w = procrustes_solve(&s, &s, &identity_dict(&s)).unwrap();
        assert!(w.matrix().frobenius_distance(&Matrix::identity(5)) < 1e-6);
    }

    #[test]
    fn quarter_turn() {
        let x = space(vec!["a".into(), "b".into()], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let y = space(vec!["a".into(), "b".into()], vec![vec![0.0, 1.0], vec![-1.0, 0.0]]);
        let w = procrustes_solve(&x, &y, &identity_dict(&x)).unwrap();
        let rot = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        assert!(w.matrix().frobenius_distance(&rot) < 1e-12);
    }

    #[test]
    fn empty_dictionary_fails() {
        let s = random_space(3, 2, 2);
        let d = SeedDictionary { pairs: vec![], source: DictionarySource::File };
        assert!(procrustes_solve(&s, &s, &d).is_err());
    }

    #[test]
    fn restricted_drops_missing_and_duplicates() {
        let s = random_space(3, 2, 3);
        let pairs = vec![
            ("w0".to_string(), "w1".to_string()),
            ("w0".to_string(), "w1".to_string()),
            ("zz".to_string(), "w1".to_string()),
        ];
        let (d, dropped) = SeedDictionary::restricted(pairs, DictionarySource::File, &s, &s);
        assert_eq!((d.len(), dropped), (1, 2));
    }

    #[test]
    fn tsv_dictionary() {
        let p = Path::new("d.tsv");
        assert_eq!(
            SeedDictionary::read_tsv("bus\tautobús\n\nriot\tmotín\n", p).unwrap(),
            vec![("bus".into(), "autobús".into()), ("riot".into(), "motín".into())]
        );
        assert!(SeedDictionary::read_tsv("bus autobús\n", p).is_err());
    }

    #[test]
    fn mapping_text_round_trip() {
        let s = random_space(30, 4, 4);
        let t = random_space(30, 4, 5);
        let w = procrustes_solve(&s, &t, &identity_dict(&s)).unwrap();
        let back = MappingMatrix::from_text(&w.to_text(), Path::new("m")).unwrap();
        assert_eq!(back.matrix(), w.matrix());
        assert!(MappingMatrix::from_text("2\n1 0\n", Path::new("m")).is_err());
    }

    #[test]
    fn aligned_spaces_induce_identity() {
        let s = random_space(15, 4, 6);
        let w = MappingMatrix::identity(4);
        let d = induce_dictionary_csls(&s, &s, &w, CslsParams::default()).unwrap();
        assert_eq!(d.len(), 15);
        assert!(d.pairs.iter().all(|(a, b)| a == b));
        assert_eq!(d.source, DictionarySource::Induced);
    }

    #[test]
    fn zero_iterations_is_plain_procrustes() {
        let s = random_space(25, 4, 7);
        let t = random_space(25, 4, 8);
        let seed = identity_dict(&s);
        let plain = procrustes_solve(&s, &t, &seed).unwrap();
        let refined = refine_mapping(&s, &t, &seed, 0, CslsParams::default()).unwrap();
        assert_eq!(plain, refined);
    }

    #[test]
    fn fixed_point_on_aligned_spaces() {
        let s = random_space(40, 6, 9);
        let trace = refine_mapping_traced(&s, &s, &identity_dict(&s), 3, CslsParams::default()).unwrap();
        assert_eq!(trace.mappings.len(), 4);
        for w in &trace.mappings {
            assert!(w.matrix().frobenius_distance(&Matrix::identity(6)) < 1e-6);
        }
    }

    #[test]
    fn empty_induction_stops_early() {
        let s = random_space(10, 3, 10);
        let mut calls = 0;
        let trace = refine_with(&s, &s, &identity_dict(&s), 5, |_| {
            calls += 1;
            Ok(SeedDictionary { pairs: vec![], source: DictionarySource::Induced })
        })
        .unwrap();
        assert_eq!(calls, 1);
        assert!(trace.stopped_early);
        assert_eq!(trace.mappings.len(), 1);
    }
}
