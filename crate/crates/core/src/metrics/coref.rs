//! CoNLL-2012 coreference metrics over sentence-level mentions.
//!
//! Every metric is first reduced to precision and recall numerator and
//! denominator sums ([`MetricCounts`]) so that corpus scores can be
//! micro-averaged the way the reference scorer does: sums across documents,
//! then one division.

use std::collections::{BTreeSet, HashMap};

use log::warn;
use serde::Serialize;

use super::{max_weight_assignment, Prf};
use crate::coref::Clustering;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricCounts {
    pub p_num: f64,
    pub p_den: f64,
    pub r_num: f64,
    pub r_den: f64,
}

impl MetricCounts {
    pub fn add(&mut self, other: &MetricCounts) {
        self.p_num += other.p_num;
        self.p_den += other.p_den;
        self.r_num += other.r_num;
        self.r_den += other.r_den;
    }

    /// F1 from the sums; an empty denominator gives 0 and a warning.
    pub fn prf(&self, metric: &str) -> Prf {
        let div = |num: f64, den: f64, what: &str| {
            if den > 0.0 {
                num / den
            } else {
                warn!("{metric}: {what} denominator is zero, scoring 0");
                0.0
            }
        };
        Prf::from_pr(div(self.p_num, self.p_den, "precision"), div(self.r_num, self.r_den, "recall"), 1.0)
    }
}

/// Mention → cluster index; fails when a mention appears twice.
fn membership(c: &Clustering) -> Result<HashMap<usize, usize>> {
    let mut map = HashMap::new();
    for (k, cluster) in c.clusters.iter().enumerate() {
        for &m in cluster {
            if map.insert(m, k).is_some() {
                return Err(Error::invalid(format!(
                    "document `{}`: mention {m} is in more than one cluster",
                    c.doc_id
                )));
            }
        }
    }
    Ok(map)
}

fn check_universe(gold: &Clustering, pred: &Clustering) -> Result<(HashMap<usize, usize>, HashMap<usize, usize>)> {
    let g = membership(gold)?;
    let p = membership(pred)?;
    let gk: BTreeSet<_> = g.keys().collect();
    let pk: BTreeSet<_> = p.keys().collect();
    if gk != pk {
        let only_gold: Vec<_> = gk.difference(&pk).collect();
        let only_pred: Vec<_> = pk.difference(&gk).collect();
        return Err(Error::invalid(format!(
            "document `{}`: gold and predicted mentions differ (gold only {:?}, predicted only {:?})",
            gold.doc_id, only_gold, only_pred
        )));
    }
    Ok((g, p))
}

/// Σ_K (|K| − |parts of K under `other`|) and Σ_K (|K| − 1).
fn muc_side(key: &Clustering, other: &HashMap<usize, usize>) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    for cluster in &key.clusters {
        let parts: BTreeSet<usize> = cluster.iter().map(|m| other[m]).collect();
        num += (cluster.len() - parts.len()) as f64;
        den += (cluster.len() - 1) as f64;
    }
    (num, den)
}

pub fn muc_counts(gold: &Clustering, pred: &Clustering) -> Result<MetricCounts> {
    let (g, p) = check_universe(gold, pred)?;
    let (r_num, r_den) = muc_side(gold, &p);
    let (p_num, p_den) = muc_side(pred, &g);
    Ok(MetricCounts {
        p_num,
        p_den,
        r_num,
        r_den,
    })
}

/// Link-based MUC. Singleton clusters add nothing to either sum.
pub fn muc_score(gold: &Clustering, pred: &Clustering) -> Result<Prf> {
    Ok(muc_counts(gold, pred)?.prf("MUC"))
}

/// Σ_m |K(m) ∩ S(m)| / |K(m)| over mentions, with `key` giving `K`.
fn b_cubed_side(key: &Clustering, key_of: &HashMap<usize, usize>, other_of: &HashMap<usize, usize>) -> f64 {
    let mut overlap: HashMap<(usize, usize), usize> = HashMap::new();
    for (&m, &k) in key_of {
        *overlap.entry((k, other_of[&m])).or_default() += 1;
    }
    let mut total = 0.0;
    // iterate clusters in order so the sum is reproducible
    for (k, cluster) in key.clusters.iter().enumerate() {
        for m in cluster {
            let shared = overlap[&(k, other_of[m])];
            total += shared as f64 / cluster.len() as f64;
        }
    }
    total
}

pub fn b_cubed_counts(gold: &Clustering, pred: &Clustering) -> Result<MetricCounts> {
    let (g, p) = check_universe(gold, pred)?;
    let mentions = g.len() as f64;
    Ok(MetricCounts {
        p_num: b_cubed_side(pred, &p, &g),
        p_den: mentions,
        r_num: b_cubed_side(gold, &g, &p),
        r_den: mentions,
    })
}

/// Mention-based B³.
pub fn b_cubed_score(gold: &Clustering, pred: &Clustering) -> Result<Prf> {
    Ok(b_cubed_counts(gold, pred)?.prf("B3"))
}

/// Entity similarity `φ4(K, S) = 2 |K ∩ S| / (|K| + |S|)`.
pub fn phi4(k: &[usize], s: &[usize]) -> f64 {
    if k.is_empty() && s.is_empty() {
        return 0.0;
    }
    let sset: BTreeSet<_> = s.iter().collect();
    let shared = k.iter().filter(|m| sset.contains(m)).count();
    2.0 * shared as f64 / (k.len() + s.len()) as f64
}

pub fn ceaf_e_counts(gold: &Clustering, pred: &Clustering) -> Result<MetricCounts> {
    check_universe(gold, pred)?;
    let weights: Vec<Vec<f64>> = gold
        .clusters
        .iter()
        .map(|k| pred.clusters.iter().map(|s| phi4(k, s)).collect())
        .collect();
    let (phi, _) = max_weight_assignment(&weights);
    Ok(MetricCounts {
        p_num: phi,
        p_den: pred.clusters.len() as f64,
        r_num: phi,
        r_den: gold.clusters.len() as f64,
    })
}

/// Entity-based CEAF with φ4 similarity and an optimal one-to-one entity
/// alignment.
pub fn ceaf_e_score(gold: &Clustering, pred: &Clustering) -> Result<Prf> {
    Ok(ceaf_e_counts(gold, pred)?.prf("CEAFe"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorefScore {
    pub muc: Prf,
    pub b3: Prf,
    pub ceaf_e: Prf,
    pub conll_avg: f64,
}

impl CorefScore {
    pub fn new(muc: Prf, b3: Prf, ceaf_e: Prf) -> Self {
        CorefScore {
            muc,
            b3,
            ceaf_e,
            conll_avg: (muc.f + b3.f + ceaf_e.f) / 3.0,
        }
    }
}

/// Mean of the MUC, B³ and CEAFe F1 scores for one document.
pub fn conll_average(gold: &Clustering, pred: &Clustering) -> Result<CorefScore> {
    Ok(CorefScore::new(
        muc_score(gold, pred)?,
        b_cubed_score(gold, pred)?,
        ceaf_e_score(gold, pred)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Sum numerators and denominators over documents, then divide.
    #[default]
    Micro,
    /// Average per-document P, R and F.
    Macro,
}

fn mean_prf(items: &[Prf]) -> Prf {
    let n = items.len().max(1) as f64;
    Prf {
        precision: items.iter().map(|p| p.precision).sum::<f64>() / n,
        recall: items.iter().map(|p| p.recall).sum::<f64>() / n,
        f: items.iter().map(|p| p.f).sum::<f64>() / n,
        beta: 1.0,
    }
}

/// Scores `(gold, pred)` document pairs together.
pub fn score_documents(docs: &[(Clustering, Clustering)], aggregation: Aggregation) -> Result<CorefScore> {
    match aggregation {
        Aggregation::Micro => {
            let (mut muc, mut b3, mut ceaf) = Default::default();
            for (g, p) in docs {
                MetricCounts::add(&mut muc, &muc_counts(g, p)?);
                MetricCounts::add(&mut b3, &b_cubed_counts(g, p)?);
                MetricCounts::add(&mut ceaf, &ceaf_e_counts(g, p)?);
            }
            Ok(CorefScore::new(muc.prf("MUC"), b3.prf("B3"), ceaf.prf("CEAFe")))
        }
        Aggregation::Macro => {
            let scores = docs
                .iter()
                .map(|(g, p)| conll_average(g, p))
                .collect::<Result<Vec<_>>>()?;
            let muc: Vec<Prf> = scores.iter().map(|s| s.muc).collect();
            let b3: Vec<Prf> = scores.iter().map(|s| s.b3).collect();
            let ceaf: Vec<Prf> = scores.iter().map(|s| s.ceaf_e).collect();
            let mut out = CorefScore::new(mean_prf(&muc), mean_prf(&b3), mean_prf(&ceaf));
            out.conll_avg = scores.iter().map(|s| s.conll_avg).sum::<f64>() / scores.len().max(1) as f64;
            Ok(out)
        }
    }
}
