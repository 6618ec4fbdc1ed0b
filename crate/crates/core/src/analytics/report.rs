//! Cluster proportions and their correlation with outcomes.

use serde::{Deserialize, Serialize};

use super::stats::{pearson, Pearson};
use crate::explain::Explanation;
use crate::{Error, Result};

/// Fraction of cells assigned to each cluster. With a mask, only cells
/// where it is `true` count.
pub fn proportions(e: &Explanation, mask: Option<&[bool]>) -> Result<Vec<f64>> {
    if let Some(m) = mask {
        if m.len() != e.d() {
            return Err(Error::Dimension {
                expected: e.d(),
                actual: m.len(),
                context: "cell mask length",
            });
        }
    }
    let mut counts = vec![0usize; e.k()];
    let mut n = 0;
    for (j, &s) in e.labels().iter().enumerate() {
        if mask.is_none_or(|m| m[j]) {
            counts[s] += 1;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid(format!("no unmasked cells in `{}`", e.ecg_id)));
    }
    Ok(counts.into_iter().map(|c| c as f64 / n as f64).collect())
}

/// Proportions of the cells inside each record's valid range.
pub fn masked_proportions(e: &Explanation, valid: &std::ops::Range<usize>) -> Result<Vec<f64>> {
    proportions(e, Some(&e.cell_mask(valid)))
}

/// Pearson statistics for every (outcome, cluster) pair; `None` marks a
/// degenerate pair (a constant column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub outcomes: Vec<String>,
    pub k: usize,
    pub cells: Vec<Vec<Option<Pearson>>>,
}

impl CorrelationReport {
    pub fn degenerate(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for (i, row) in self.cells.iter().enumerate() {
            for (k, c) in row.iter().enumerate() {
                if c.is_none() {
                    v.push((i, k));
                }
            }
        }
        v
    }

    /// Aligned text table of r values, with `.` after non-significant ones.
    pub fn to_text(&self, alpha: f64) -> String {
        let mut s = format!("{:<12}", "outcome");
        for k in 0..self.k {
            s += &format!("{:>8}", format!("c{k}"));
        }
        s.push('\n');
        for (name, row) in self.outcomes.iter().zip(&self.cells) {
            s += &format!("{name:<12}");
            for c in row {
                s += &match c {
                    Some(p) => format!("{:>8}", format!("{:.3}{}", p.r, if p.p > alpha { "." } else { "" })),
                    None => format!("{:>8}", "-"),
                };
            }
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("outcome,cluster,r,p,n\n");
        for (name, row) in self.outcomes.iter().zip(&self.cells) {
            for (k, c) in row.iter().enumerate() {
                match c {
                    Some(p) => s += &format!("{name},{k},{},{},{}\n", p.r, p.p, p.n),
                    None => s += &format!("{name},{k},,,\n"),
                }
            }
        }
        s
    }
}

/// `props` holds one proportion vector per record; each outcome is a named
/// column aligned with the records (binary labels as 0/1).
pub fn correlation_report(props: &[Vec<f64>], outcomes: &[(String, Vec<f64>)]) -> Result<CorrelationReport> {
    let k = props.first().map_or(0, |p| p.len());
    if props.iter().any(|p| p.len() != k) {
        return Err(Error::invalid("proportion vectors have different lengths"));
    }
    let mut cells = Vec::with_capacity(outcomes.len());
    for (name, y) in outcomes {
        if y.len() != props.len() {
            return Err(Error::Dimension {
                expected: props.len(),
                actual: y.len(),
                context: "outcome column length vs record count",
            });
        }
        let row = (0..k)
            .map(|c| {
                let x: Vec<f64> = props.iter().map(|p| p[c]).collect();
                match pearson(&x, y) {
                    Ok(p) => Ok(Some(p)),
                    Err(Error::Numeric(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if row.iter().all(Option::is_none) {
            log::warn!("outcome `{name}` is constant or all clusters are degenerate");
        }
        cells.push(row);
    }
    Ok(CorrelationReport {
        outcomes: outcomes.iter().map(|o| o.0.clone()).collect(),
        k,
        cells,
    })
}
