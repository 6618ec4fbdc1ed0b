//! Surrogate-forest benchmark: network vs forests on raw signal and on
//! cluster proportions, scored against true labels and network predictions.

use serde::{Deserialize, Serialize};

use super::cv::{cross_validate, CvConfig};
use super::metrics::{multilabel_metrics, BinaryMetrics};
use crate::signal::{EcgRecord, N_LEADS};
use crate::{Error, Matrix, Result};

/// Largest raw feature count handed to the signal forest.
pub const MAX_RAW_FEATURES: usize = 2000;

/// Block-averages time so that `steps x 12` fits in `max_features`, then
/// flattens row-major.
pub fn raw_features(ecg: &EcgRecord, max_features: usize) -> Vec<f64> {
    let l = ecg.len();
    let max_steps = (max_features / N_LEADS).max(1);
    let factor = l.div_ceil(max_steps).max(1);
    let steps = l.div_ceil(factor);
    let mut out = vec![0.0; steps * N_LEADS];
    for s in 0..steps {
        let (a, b) = (s * factor, ((s + 1) * factor).min(l));
        for t in a..b {
            for (o, &v) in out[s * N_LEADS..(s + 1) * N_LEADS].iter_mut().zip(ecg.row(t)) {
                *o += f64::from(v);
            }
        }
        out[s * N_LEADS..(s + 1) * N_LEADS].iter_mut().for_each(|o| *o /= (b - a) as f64);
    }
    out
}

pub fn raw_matrix(records: &[EcgRecord], max_features: usize) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = crate::par::map(records, |r| raw_features(r, max_features));
    Matrix::from_rows(&rows)
}

/// Binarises scores at 0.5.
pub fn threshold(scores: &[Vec<f64>]) -> Vec<Vec<u8>> {
    scores.iter().map(|r| r.iter().map(|&s| u8::from(s >= 0.5)).collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkColumn {
    pub name: String,
    pub mean: BinaryMetrics,
    /// Run-to-run spread; absent for the single network evaluation.
    pub std: Option<BinaryMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub columns: Vec<BenchmarkColumn>,
}

impl BenchmarkTable {
    pub const COLUMNS: [&'static str; 5] = ["ResNet/Labels", "RFsig/Labels", "RFsig/Pred", "RFclus/Labels", "RFclus/Pred"];

    pub fn column(&self, name: &str) -> Option<&BenchmarkColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Metrics as rows, columns in `COLUMNS` order.
    pub fn to_csv(&self) -> String {
        let mut s = format!("metric,{}\n", self.columns.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(","));
        for (i, m) in BinaryMetrics::NAMES.iter().enumerate() {
            let vals: Vec<String> = self
                .columns
                .iter()
                .map(|c| c.mean.values()[i].map_or(String::new(), |v| format!("{v:.4}")))
                .collect();
            s += &format!("{m},{}\n", vals.join(","));
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<10}", "");
        for c in &self.columns {
            s += &format!("{:>16}", c.name);
        }
        s.push('\n');
        for (i, m) in BinaryMetrics::NAMES.iter().enumerate() {
            s += &format!("{m:<10}");
            for c in &self.columns {
                let cell = match (c.mean.values()[i], c.std.and_then(|d| d.values()[i])) {
                    (Some(v), Some(d)) => format!("{:.1}±{:.1}", 100.0 * v, 100.0 * d),
                    (Some(v), None) => format!("{:.1}", 100.0 * v),
                    _ => "-".into(),
                };
                s += &format!("{cell:>16}");
            }
            s.push('\n');
        }
        s
    }
}

/// `labels` and `net_scores` are `N x n_labels`; `raw` and `proportions`
/// hold one row per record.
pub fn benchmark(
    labels: &[Vec<u8>],
    net_scores: &[Vec<f64>],
    raw: &Matrix,
    proportions: &Matrix,
    cv: &CvConfig,
) -> Result<BenchmarkTable> {
    let n = labels.len();
    if net_scores.len() != n || raw.rows() != n || proportions.rows() != n {
        return Err(Error::invalid("benchmark inputs must have one row per record"));
    }
    let preds = threshold(net_scores);
    let net = multilabel_metrics(labels, net_scores)?;
    let mut columns = vec![BenchmarkColumn {
        name: BenchmarkTable::COLUMNS[0].into(),
        mean: net.macro_avg,
        std: None,
    }];
    for (i, (x, y)) in [(raw, labels), (raw, &preds), (proportions, labels), (proportions, &preds)]
        .into_iter()
        .enumerate()
    {
        let r = cross_validate(x, y, cv)?;
        columns.push(BenchmarkColumn {
            name: BenchmarkTable::COLUMNS[i + 1].into(),
            mean: r.macro_avg,
            std: Some(r.macro_std),
        });
    }
    Ok(BenchmarkTable { columns })
}
