//! Evaluation metrics: precision/recall/F-beta for classifiers and the
//! CoNLL-2012 coreference average.

mod assignment;
mod coref;

use serde::Serialize;

use crate::{Error, Result};

pub use assignment::max_weight_assignment;
pub use coref::{
    b_cubed_counts, b_cubed_score, ceaf_e_counts, ceaf_e_score, conll_average, muc_counts, muc_score,
    phi4, score_documents, Aggregation, CorefScore, MetricCounts,
};

/// Precision, recall and the F-beta that combines them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    pub beta: f64,
}

impl Prf {
    /// `F = (1 + β²) P R / (β² P + R)`, or 0 when `P + R = 0`.
    pub fn from_pr(precision: f64, recall: f64, beta: f64) -> Self {
        let b2 = beta * beta;
        let f = if precision + recall > 0.0 {
            (1.0 + b2) * precision * recall / (b2 * precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f,
            beta,
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Scores from confusion counts; empty denominators give 0.
pub fn prf(tp: u64, fp: u64, fn_: u64, beta: f64) -> Prf {
    let tp_f = tp as f64;
    Prf::from_pr(ratio(tp_f, (tp + fp) as f64), ratio(tp_f, (tp + fn_) as f64), beta)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

pub fn confusion(gold: &[u8], pred: &[u8], positive: u8) -> Result<Confusion> {
    if gold.len() != pred.len() {
        return Err(Error::Dimension {
            expected: gold.len(),
            actual: pred.len(),
        });
    }
    let mut c = Confusion::default();
    for (&g, &p) in gold.iter().zip(pred) {
        match (g == positive, p == positive) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// F-beta of the positive class (label 1).
pub fn binary_f1(gold: &[u8], pred: &[u8], beta: f64) -> Result<Prf> {
    let c = confusion(gold, pred, 1)?;
    Ok(prf(c.tp, c.fp, c.fn_, beta))
}

/// Unweighted mean of per-class F scores.
pub fn macro_f1(per_class: &[Prf]) -> f64 {
    if per_class.is_empty() {
        return 0.0;
    }
    per_class.iter().map(|p| p.f).sum::<f64>() / per_class.len() as f64
}

/// Per-class scores for the two binary classes, class 0 first.
pub fn per_class_prf(gold: &[u8], pred: &[u8], beta: f64) -> Result<[Prf; 2]> {
    let neg = confusion(gold, pred, 0)?;
    let pos = confusion(gold, pred, 1)?;
    Ok([
        prf(neg.tp, neg.fp, neg.fn_, beta),
        prf(pos.tp, pos.fp, pos.fn_, beta),
    ])
}
