//! Two-stage event-sentence coreference.
//!
//! Stage one scores every sentence pair of a document (from a score file
//! or with a trained [`MlpModel`](crate::head::MlpModel) over sentence
//! embeddings). Stage two links pairs whose score exceeds a threshold,
//! strongest first, and reads clusters off the resulting union-find forest.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{Corpus, Document};
use crate::embedding::EmbeddingSpace;
use crate::head::MlpModel;
use crate::linalg::dot;
use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Partition of a document's event sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    pub doc_id: String,
    pub clusters: Vec<Vec<usize>>,
}

impl Clustering {
    pub fn new(doc_id: impl Into<String>, clusters: Vec<Vec<usize>>) -> Self {
        Clustering {
            doc_id: doc_id.into(),
            clusters,
        }
    }

    /// Members sorted within clusters, clusters sorted by first member,
    /// empty clusters removed.
    pub fn canonical(mut self) -> Self {
        self.clusters.retain(|c| !c.is_empty());
        for c in &mut self.clusters {
            c.sort_unstable();
        }
        self.clusters.sort();
        self
    }

    pub fn mentions(&self) -> BTreeSet<usize> {
        self.clusters.iter().flatten().copied().collect()
    }

    /// True when every cluster of `self` lies inside one cluster of `coarser`.
    pub fn refines(&self, coarser: &Clustering) -> bool {
        let owner: HashMap<usize, usize> = coarser
            .clusters
            .iter()
            .enumerate()
            .flat_map(|(k, c)| c.iter().map(move |&m| (m, k)))
            .collect();
        self.clusters.iter().all(|c| {
            let parts: BTreeSet<Option<&usize>> = c.iter().map(|m| owner.get(m)).collect();
            parts.len() <= 1 && !parts.contains(&None)
        })
    }
}

/// Gold clustering of a document: its event clusters plus a singleton for
/// every sentence outside them.
pub fn gold_clustering(doc: &Document) -> Result<Clustering> {
    let clusters = doc
        .event_clusters
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("document `{}` has no event clusters", doc.id)))?;
    let covered: BTreeSet<usize> = clusters.iter().flatten().copied().collect();
    let mut all = clusters.clone();
    all.extend(doc.sentence_ids().into_iter().filter(|s| !covered.contains(s)).map(|s| vec![s]));
    Ok(Clustering::new(doc.id.clone(), all).canonical())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentencePair {
    pub doc_id: String,
    pub i: usize,
    pub j: usize,
    /// `Some(true)` for coreferential pairs.
    pub label: Option<bool>,
    pub score: Option<f64>,
}

/// Every unordered pair of sentences in every document, labelled
/// coreferential exactly when both sentences share a gold cluster.
pub fn make_pair_dataset(corpus: &Corpus) -> Result<Vec<SentencePair>> {
    let mut out = Vec::new();
    for doc in &corpus.documents {
        let clusters = doc
            .event_clusters
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("document `{}` has no event clusters", doc.id)))?;
        let owner: HashMap<usize, usize> = clusters
            .iter()
            .enumerate()
            .flat_map(|(k, c)| c.iter().map(move |&m| (m, k)))
            .collect();
        let mut ids = doc.sentence_ids();
        ids.sort_unstable();
        for (a, &i) in ids.iter().enumerate() {
            for &j in &ids[a + 1..] {
                let same = matches!((owner.get(&i), owner.get(&j)), (Some(x), Some(y)) if x == y);
                out.push(SentencePair {
                    doc_id: doc.id.clone(),
                    i,
                    j,
                    label: Some(same),
                    score: None,
                });
            }
        }
    }
    Ok(out)
}

/// Embedding-file row id of a sentence: `doc_id/sentence_id`.
pub fn sentence_key(doc_id: &str, sentence: usize) -> String {
    format!("{doc_id}/{sentence}")
}

/// Pair features: `|a − b|`, `a ⊙ b` and `cos(a, b)`, length `2d + 1`.
pub fn pair_features(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * a.len() + 1);
    out.extend(a.iter().zip(b).map(|(x, y)| (x - y).abs()));
    out.extend(a.iter().zip(b).map(|(x, y)| x * y));
    let denom = (dot(a, a) * dot(b, b)).sqrt();
    out.push(if denom > 0.0 { dot(a, b) / denom } else { 0.0 });
    out
}

/// Feature vector for a pair, looking both sentences up in `embeddings`.
pub fn features_for(pair: &SentencePair, embeddings: &EmbeddingSpace) -> Result<Vec<f64>> {
    let get = |s: usize| {
        let key = sentence_key(&pair.doc_id, s);
        embeddings.lookup(&key).ok_or(Error::NotInVocabulary(key))
    };
    Ok(pair_features(get(pair.i)?, get(pair.j)?))
}

/// Pair scores keyed by `(doc, i, j)` with `i < j`.
pub type PairScores = HashMap<(String, usize, usize), f64>;

pub enum PairScoreSource<'a> {
    File(&'a PairScores),
    Model {
        model: &'a MlpModel,
        embeddings: &'a EmbeddingSpace,
    },
}

/// Fills in `score` for every pair. Fails naming the first pair that has
/// no score or no sentence embedding.
pub fn score_pairs(pairs: &[SentencePair], source: &PairScoreSource<'_>) -> Result<Vec<SentencePair>> {
    pairs
        .iter()
        .map(|p| {
            let score = match source {
                PairScoreSource::File(scores) => *scores
                    .get(&(p.doc_id.clone(), p.i, p.j))
                    .ok_or_else(|| Error::invalid(format!("no score for pair ({}, {}) of `{}`", p.i, p.j, p.doc_id)))?,
                PairScoreSource::Model { model, embeddings } => {
                    let x = features_for(p, embeddings)
                        .map_err(|e| Error::invalid(format!("pair ({}, {}) of `{}`: {e}", p.i, p.j, p.doc_id)))?;
                    model.forward(&x)?[1]
                }
            };
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::invalid(format!(
                    "score {score} for pair ({}, {}) of `{}` is outside [0, 1]",
                    p.i, p.j, p.doc_id
                )));
            }
            Ok(SentencePair {
                score: Some(score),
                ..p.clone()
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinkRule {
    /// Accept links strongest first, merging with union-find.
    #[default]
    BestLinkUnionFind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    pub threshold: f64,
    pub link_rule: LinkRule,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            threshold: DEFAULT_THRESHOLD,
            link_rule: LinkRule::default(),
        }
    }
}

impl ClusterParams {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::invalid(format!("threshold must lie in (0, 1), got {threshold}")));
        }
        Ok(ClusterParams {
            threshold,
            ..Default::default()
        })
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Greedy clustering of one document's sentences.
///
/// Pairs are visited by descending score (ties by ascending `(i, j)`); a
/// pair scoring strictly above the threshold merges the clusters of its two
/// sentences. Sentences never linked stay singletons. The universe is
/// `sentence_ids` plus every sentence named by a pair; unscored pairs never
/// link.
pub fn greedy_cluster(doc_id: &str, sentence_ids: &[usize], pairs: &[SentencePair], params: &ClusterParams) -> Clustering {
    let universe: BTreeSet<usize> = sentence_ids
        .iter()
        .copied()
        .chain(pairs.iter().flat_map(|p| [p.i, p.j]))
        .collect();
    let slot: HashMap<usize, usize> = universe.iter().enumerate().map(|(k, &s)| (s, k)).collect();

    let mut links: Vec<(f64, usize, usize)> = pairs
        .iter()
        .filter_map(|p| {
            let score = p.score?;
            let (i, j) = if p.i <= p.j { (p.i, p.j) } else { (p.j, p.i) };
            (score > params.threshold).then_some((score, i, j))
        })
        .collect();
    links.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut uf = UnionFind::new(universe.len());
    match params.link_rule {
        LinkRule::BestLinkUnionFind => {
            for &(_, i, j) in &links {
                uf.union(slot[&i], slot[&j]);
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&s, &k) in &slot {
        groups.entry(uf.find(k)).or_default().push(s);
    }
    Clustering::new(doc_id, groups.into_values().collect()).canonical()
}

/// Document with scored pairs, as read from a pair-score file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDocument {
    pub doc_id: String,
    pub sentence_ids: Vec<usize>,
    pub pairs: Vec<SentencePair>,
}

#[derive(Deserialize)]
struct ScoreRecordIn {
    id: Value,
    #[serde(default)]
    sentence_no: Vec<usize>,
    pairs: Vec<(usize, usize, f64)>,
}

#[derive(Serialize)]
struct ScoreRecordOut<'a> {
    id: &'a str,
    sentence_no: &'a [usize],
    pairs: Vec<(usize, usize, f64)>,
}

/// Reads `{"id", "pairs": [[i, j, score], ...]}` lines; `sentence_no` is
/// optional and lets unpaired sentences take part as singletons.
pub fn read_pair_scores(content: &str, path: &Path) -> Result<Vec<ScoredDocument>> {
    let mut out = Vec::new();
    for (n, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreRecordIn = serde_json::from_str(line).map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
        let doc_id = crate::corpus::jsonl_id(&rec.id).ok_or_else(|| Error::parse(path, n + 1, "bad `id`"))?;
        let mut pairs = Vec::with_capacity(rec.pairs.len());
        for (i, j, score) in rec.pairs {
            if i == j || !(0.0..=1.0).contains(&score) {
                return Err(Error::parse(path, n + 1, format!("bad pair [{i}, {j}, {score}]")));
            }
            pairs.push(SentencePair {
                doc_id: doc_id.clone(),
                i: i.min(j),
                j: i.max(j),
                label: None,
                score: Some(score),
            });
        }
        out.push(ScoredDocument {
            doc_id,
            sentence_ids: rec.sentence_no,
            pairs,
        });
    }
    Ok(out)
}

pub fn load_pair_scores(path: impl AsRef<Path>) -> Result<Vec<ScoredDocument>> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_pair_scores(&content, path)
}

pub fn write_pair_scores(docs: &[ScoredDocument]) -> Result<String> {
    let mut out = String::new();
    for d in docs {
        let rec = ScoreRecordOut {
            id: &d.doc_id,
            sentence_no: &d.sentence_ids,
            pairs: d.pairs.iter().map(|p| (p.i, p.j, p.score.unwrap_or(0.0))).collect(),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

/// Groups scored pairs by document, keeping first-seen document order.
pub fn group_by_document(corpus: &Corpus, pairs: Vec<SentencePair>) -> Vec<ScoredDocument> {
    let mut by_doc: HashMap<String, Vec<SentencePair>> = HashMap::new();
    for p in pairs {
        by_doc.entry(p.doc_id.clone()).or_default().push(p);
    }
    corpus
        .documents
        .iter()
        .map(|d| ScoredDocument {
            doc_id: d.id.clone(),
            sentence_ids: d.sentence_ids(),
            pairs: by_doc.remove(&d.id).unwrap_or_default(),
        })
        .collect()
}

#[derive(Deserialize)]
struct ClusterRecordIn {
    id: Value,
    #[serde(alias = "event_clusters")]
    pred_clusters: Vec<Vec<usize>>,
    #[serde(default)]
    sentence_no: Vec<usize>,
}

#[derive(Serialize)]
struct ClusterRecordOut<'a> {
    id: &'a str,
    pred_clusters: &'a [Vec<usize>],
}

/// Reads `{"id", "pred_clusters"}` (or `event_clusters`) lines. When a
/// line lists `sentence_no`, sentences outside every cluster become
/// singletons.
pub fn read_clusterings(content: &str, path: &Path) -> Result<Vec<Clustering>> {
    let mut out = Vec::new();
    for (n, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ClusterRecordIn = serde_json::from_str(line).map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
        let id = crate::corpus::jsonl_id(&rec.id).ok_or_else(|| Error::parse(path, n + 1, "bad `id`"))?;
        let covered: BTreeSet<usize> = rec.pred_clusters.iter().flatten().copied().collect();
        let mut clusters = rec.pred_clusters;
        clusters.extend(rec.sentence_no.into_iter().filter(|s| !covered.contains(s)).map(|s| vec![s]));
        out.push(Clustering::new(id, clusters));
    }
    Ok(out)
}

pub fn load_clusterings(path: impl AsRef<Path>) -> Result<Vec<Clustering>> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_clusterings(&content, path)
}

pub fn write_clusterings(clusterings: &[Clustering]) -> Result<String> {
    let mut out = String::new();
    for c in clusterings {
        out.push_str(&serde_json::to_string(&ClusterRecordOut {
            id: &c.doc_id,
            pred_clusters: &c.clusters,
        })?);
        out.push('\n');
    }
    Ok(out)
}

/// Clusters every scored document.
pub fn cluster_documents(docs: &[ScoredDocument], params: &ClusterParams) -> Vec<Clustering> {
    use rayon::prelude::*;
    docs.par_iter()
        .map(|d| greedy_cluster(&d.doc_id, &d.sentence_ids, &d.pairs, params))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;
    use proptest::prelude::*;

    fn doc(id: &str, n: usize, clusters: Vec<Vec<usize>>) -> Document {
        Document::new(id, "en", (1..=n).map(|i| Sentence::from_text(i, format!("s{i}"))).collect()).with_clusters(clusters)
    }

    fn scored(pairs: &[(usize, usize, f64)]) -> Vec<SentencePair> {
        pairs
            .iter()
            .map(|&(i, j, s)| SentencePair { doc_id: "d".into(), i, j, label: None, score: Some(s) })
            .collect()
    }

    #[test]
    fn pair_dataset_examples() {
        let c = Corpus::new(vec![doc("d", 3, vec![vec![1, 3], vec![2]])]).unwrap();
        let pairs = make_pair_dataset(&c).unwrap();
        let got: Vec<_> = pairs.iter().map(|p| (p.i, p.j, p.label.unwrap())).collect();
        assert_eq!(got, vec![(1, 2, false), (1, 3, true), (2, 3, false)]);

        let one = Corpus::new(vec![doc("d", 4, vec![vec![1, 2, 3, 4]])]).unwrap();
        let p = make_pair_dataset(&one).unwrap();
        assert_eq!(p.len(), 6);
        assert!(p.iter().all(|p| p.label == Some(true)));

        let singles = Corpus::new(vec![doc("d", 4, vec![vec![1], vec![2], vec![3], vec![4]])]).unwrap();
        let p = make_pair_dataset(&singles).unwrap();
        assert_eq!(p.len(), 6);
        assert!(p.iter().all(|p| p.label == Some(false)));
    }

    #[test]
    fn pair_dataset_needs_clusters() {
        let c = Corpus::new(vec![Document::new("bare", "en", vec![Sentence::from_text(1, "x")])]).unwrap();
        let err = make_pair_dataset(&c).unwrap_err().to_string();
        assert!(err.contains("bare"));
    }

    #[test]
    fn below_threshold_gives_singletons() {
        let c = greedy_cluster("d", &[], &scored(&[(1, 2, 0.5), (2, 3, 0.2), (1, 3, 0.4)]), &ClusterParams::default());
        assert_eq!(c.clusters, vec![vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn transitive_merge() {
        let c = greedy_cluster("d", &[], &scored(&[(1, 2, 0.9), (2, 3, 0.8), (1, 3, 0.1)]), &ClusterParams::default());
        assert_eq!(c.clusters, vec![vec![1, 2, 3]]);
    }

    #[test]
    fn independent_links() {
        let c = greedy_cluster(
            "d",
            &[],
            &scored(&[(1, 2, 0.9), (3, 4, 0.8), (1, 3, 0.2), (1, 4, 0.3), (2, 3, 0.1), (2, 4, 0.4)]),
            &ClusterParams::default(),
        );
        assert_eq!(c.clusters, vec![vec![1, 2], vec![3, 4]]);
    }

    #[test]
    fn universe_includes_unpaired_sentences() {
        let c = greedy_cluster("d", &[1, 2, 7], &scored(&[(1, 2, 0.9)]), &ClusterParams::default());
        assert_eq!(c.clusters, vec![vec![1, 2], vec![7]]);
    }

    #[test]
    fn score_sources() {
        let c = Corpus::new(vec![doc("d", 3, vec![vec![1, 3], vec![2]])]).unwrap();
        let pairs = make_pair_dataset(&c).unwrap();
        let mut file: PairScores = HashMap::new();
        for p in &pairs {
            file.insert((p.doc_id.clone(), p.i, p.j), if (p.i, p.j) == (1, 3) { 0.9 } else { 0.1 });
        }
        let out = score_pairs(&pairs, &PairScoreSource::File(&file)).unwrap();
        assert_eq!(out[1].score, Some(0.9));
        file.remove(&("d".into(), 2, 3));
        assert!(score_pairs(&pairs, &PairScoreSource::File(&file)).is_err());
    }

    #[test]
    fn pair_feature_layout() {
        let f = pair_features(&[1.0, 0.0], &[0.0, 2.0]);
        assert_eq!(f, vec![1.0, 2.0, 0.0, 0.0, 0.0]);
        let f = pair_features(&[1.0, 1.0], &[1.0, 1.0]);
        assert!((f[4] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn score_file_round_trip() {
        let docs = vec![ScoredDocument { doc_id: "d".into(), sentence_ids: vec![1, 2, 3], pairs: scored(&[(1, 2, 0.25), (1, 3, 0.75)]) }];
        let text = write_pair_scores(&docs).unwrap();
        assert_eq!(text, "{\"id\":\"d\",\"sentence_no\":[1,2,3],\"pairs\":[[1,2,0.25],[1,3,0.75]]}\n");
        assert_eq!(read_pair_scores(&text, Path::new("s")).unwrap(), docs);
        assert!(read_pair_scores("{\"id\":\"d\",\"pairs\":[[1,1,0.5]]}", Path::new("s")).is_err());
        assert!(read_pair_scores("{\"id\":\"d\",\"pairs\":[[1,2,1.5]]}", Path::new("s")).is_err());
    }

    #[test]
    fn cluster_file_round_trip() {
        let cs = vec![Clustering::new("a", vec![vec![1, 3], vec![2]])];
        let text = write_clusterings(&cs).unwrap();
        assert_eq!(text, "{\"id\":\"a\",\"pred_clusters\":[[1,3],[2]]}\n");
        assert_eq!(read_clusterings(&text, Path::new("p")).unwrap(), cs);
        let gold = read_clusterings("{\"id\":\"a\",\"event_clusters\":[[1]]}", Path::new("g")).unwrap();
        assert_eq!(gold[0].clusters, vec![vec![1]]);
        let full = read_clusterings("{\"id\":\"a\",\"sentence_no\":[1,2],\"sentences\":[\"x\",\"y\"],\"event_clusters\":[[1]]}", Path::new("g")).unwrap();
        assert_eq!(full[0].clusters, vec![vec![1], vec![2]]);
    }

    #[test]
    fn gold_clustering_adds_singletons() {
        let d = doc("d", 4, vec![vec![3, 1]]);
        assert_eq!(gold_clustering(&d).unwrap().clusters, vec![vec![1, 3], vec![2], vec![4]]);
    }

    fn arb_scored_doc() -> impl Strategy<Value = (usize, Vec<f64>)> {
        (2usize..10).prop_flat_map(|n| (Just(n), prop::collection::vec(0.0f64..1.0, n * (n - 1) / 2)))
    }

    fn all_pairs(n: usize, scores: &[f64]) -> Vec<SentencePair> {
        let mut out = Vec::new();
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                out.push(SentencePair { doc_id: "d".into(), i, j, label: None, score: Some(scores[k]) });
                k += 1;
            }
        }
        out
    }

    proptest! {
        #[test]
        fn output_is_partition((n, scores) in arb_scored_doc(), t in 0.05f64..0.95) {
            let ids: Vec<usize> = (0..n).collect();
            let c = greedy_cluster("d", &ids, &all_pairs(n, &scores), &ClusterParams::new(t).unwrap());
            let members: Vec<usize> = c.clusters.iter().flatten().copied().collect();
            prop_assert_eq!(members.len(), n);
            prop_assert_eq!(c.mentions(), ids.into_iter().collect::<BTreeSet<_>>());
        }

        #[test]
        fn order_independent((n, scores) in arb_scored_doc(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let pairs = all_pairs(n, &scores);
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let p = ClusterParams::default();
            prop_assert_eq!(greedy_cluster("d", &[], &pairs, &p), greedy_cluster("d", &[], &shuffled, &p));
        }

        #[test]
        fn higher_threshold_refines((n, scores) in arb_scored_doc(), a in 0.05f64..0.95, b in 0.05f64..0.95) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let pairs = all_pairs(n, &scores);
            let fine = greedy_cluster("d", &[], &pairs, &ClusterParams::new(hi).unwrap());
            let coarse = greedy_cluster("d", &[], &pairs, &ClusterParams::new(lo).unwrap());
            prop_assert!(fine.refines(&coarse));
        }
    }
}
