//! Binary and multilabel classification metrics.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent when only one class is present.
    pub auroc: Option<f64>,
}

impl BinaryMetrics {
    pub const NAMES: [&'static str; 5] = ["accuracy", "precision", "recall", "auroc", "f1"];

    /// Values in `NAMES` order.
    pub fn values(&self) -> [Option<f64>; 5] {
        [
            Some(self.accuracy),
            Some(self.precision),
            Some(self.recall),
            self.auroc,
            Some(self.f1),
        ]
    }
}

/// Mann-Whitney AUROC with average ranks for ties.
pub fn auroc(y: &[u8], scores: &[f64]) -> Option<f64> {
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 || y.len() != scores.len() {
        return None;
    }
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if y[k] == 1 {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Standard definitions; precision and F1 are 0 when nothing is predicted
/// positive, recall is 0 when nothing is positive.
pub fn metrics(y_true: &[u8], y_pred: &[u8], scores: Option<&[f64]>) -> Result<BinaryMetrics> {
    if y_true.len() != y_pred.len() || scores.is_some_and(|s| s.len() != y_true.len()) {
        return Err(Error::invalid("metric inputs must have equal lengths"));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("metrics need at least one sample"));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == 1, p == 1) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (false, false) => tn += 1.0,
            (true, false) => fn_ += 1.0,
        }
    }
    let div = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fn_);
    Ok(BinaryMetrics {
        accuracy: (tp + tn) / y_true.len() as f64,
        precision,
        recall,
        f1: div(2.0 * precision * recall, precision + recall),
        auroc: scores.and_then(|s| auroc(y_true, s)),
    })
}

/// Label-wise metrics and their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub per_label: Vec<BinaryMetrics>,
    pub macro_avg: BinaryMetrics,
}

/// Mean of each field; AUROC averages the labels where it is defined.
pub fn mean_metrics(items: &[BinaryMetrics]) -> BinaryMetrics {
    let n = items.len().max(1) as f64;
    let aurocs: Vec<f64> = items.iter().filter_map(|m| m.auroc).collect();
    BinaryMetrics {
        accuracy: items.iter().map(|m| m.accuracy).sum::<f64>() / n,
        precision: items.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: items.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: items.iter().map(|m| m.f1).sum::<f64>() / n,
        auroc: (!aurocs.is_empty()).then(|| aurocs.iter().sum::<f64>() / aurocs.len() as f64),
    }
}

/// Thresholds scores at 0.5. `y` and `scores` are `N x n_labels`.
pub fn multilabel_metrics(y: &[Vec<u8>], scores: &[Vec<f64>]) -> Result<MetricsTable> {
    if y.len() != scores.len() || y.is_empty() {
        return Err(Error::invalid("label and score rows must align and be non-empty"));
    }
    let n_labels = y[0].len();
    if y.iter().any(|r| r.len() != n_labels) || scores.iter().any(|r| r.len() != n_labels) {
        return Err(Error::invalid("ragged label or score rows"));
    }
    let per_label = (0..n_labels)
        .map(|j| {
            let t: Vec<u8> = y.iter().map(|r| r[j]).collect();
            let s: Vec<f64> = scores.iter().map(|r| r[j]).collect();
            let p: Vec<u8> = s.iter().map(|&v| u8::from(v >= 0.5)).collect();
            metrics(&t, &p, Some(&s))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsTable {
        macro_avg: mean_metrics(&per_label),
        per_label,
    })
}
