use crate::dataset::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub record_id: String,
    pub label: Label,
    /// Softmax probability of the VTA class.
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl Confusion {
    /// Counts with the positive call made when `p >= threshold`.
    pub fn from_predictions(preds: &[Prediction], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for p in preds {
            match (p.label.is_positive(), p.probability >= threshold) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.tn + self.fp
    }

    pub fn metrics(&self) -> Metrics {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Metrics {
            accuracy: ratio(self.tp + self.tn, self.total()),
            sensitivity: ratio(self.tp, self.tp + self.fn_),
            specificity: ratio(self.tn, self.tn + self.fp),
            precision: ratio(self.tp, self.tp + self.fp),
            precision_undefined: self.tp + self.fp == 0,
        }
    }
}

/// Threshold metrics as fractions in [0, 1].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// Reported as 0 when nothing was predicted positive.
    pub precision: f64,
    pub precision_undefined: bool,
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub fn metrics(preds: &[Prediction], threshold: f64) -> Metrics {
    Confusion::from_predictions(preds, threshold).metrics()
}

/// Area under the ROC curve via the rank-sum statistic: the probability that
/// a random positive scores above a random negative, ties counting one half.
pub fn auc(preds: &[Prediction]) -> Result<f64> {
    let scores: Vec<(f64, bool)> = preds.iter().map(|p| (p.probability, p.label.is_positive())).collect();
    auc_scores(&scores)
}

pub fn auc_scores(scores: &[(f64, bool)]) -> Result<f64> {
    let positives = scores.iter().filter(|s| s.1).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Eval("AUC needs both classes present".into()));
    }
    if scores.iter().any(|s| s.0.is_nan()) {
        return Err(Error::NonFinite("prediction scores".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Sum of mid-ranks (1-based) of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let mid = (i + 1 + j) as f64 / 2.0;
        let tied_pos = sorted[i..j].iter().filter(|s| s.1).count();
        rank_sum += mid * tied_pos as f64;
        i = j;
    }
    let (p, n) = (positives as f64, negatives as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}
