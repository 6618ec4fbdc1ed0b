use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::cluster::Assignment;
use crate::{Error, Matrix, Result};

/// Soft segmentation of one record on `D` cells spread uniformly over `L`
/// input samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub ecg_id: String,
    /// Input length in samples.
    pub l: usize,
    pub assignment: Assignment,
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct Doc {
    ecg_id: String,
    D: usize,
    L: usize,
    K: usize,
    labels: Vec<usize>,
    entropy: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    probs: Option<Vec<f64>>,
}

impl Explanation {
    pub fn d(&self) -> usize {
        self.assignment.len()
    }

    pub fn k(&self) -> usize {
        self.assignment.k()
    }

    pub fn labels(&self) -> &[usize] {
        &self.assignment.labels
    }

    pub fn entropy(&self) -> &[f64] {
        &self.assignment.entropy
    }

    /// Input samples covered by cell `j`.
    pub fn timeline(&self, j: usize) -> Range<usize> {
        let (d, l) = (self.d(), self.l);
        j * l / d..(j + 1) * l / d
    }

    /// Cell whose range contains input sample `s`.
    pub fn cell_of(&self, s: usize) -> Result<usize> {
        if s >= self.l {
            return Err(Error::invalid(format!("sample {s} outside record of length {}", self.l)));
        }
        Ok(((s + 1) * self.d()).div_ceil(self.l) - 1)
    }

    /// Cluster id and entropy at input sample `s`.
    pub fn segment_at(&self, s: usize) -> Result<(usize, f64)> {
        let j = self.cell_of(s)?;
        Ok((self.assignment.labels[j], self.assignment.entropy[j]))
    }

    /// Per-sample cluster ids, length `L`.
    pub fn labels_per_sample(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.l);
        for j in 0..self.d() {
            let r = self.timeline(j);
            out.extend(std::iter::repeat_n(self.assignment.labels[j], r.len()));
        }
        out
    }

    /// Cells whose midpoint lies inside `valid`.
    pub fn cell_mask(&self, valid: &Range<usize>) -> Vec<bool> {
        (0..self.d())
            .map(|j| {
                let r = self.timeline(j);
                let mid2 = r.start + r.end;
                !r.is_empty() && mid2 >= 2 * valid.start && mid2 < 2 * valid.end
            })
            .collect()
    }

    pub fn to_json(&self, include_probs: bool) -> Result<String> {
        let doc = Doc {
            ecg_id: self.ecg_id.clone(),
            D: self.d(),
            L: self.l,
            K: self.k(),
            labels: self.assignment.labels.clone(),
            entropy: self.assignment.entropy.clone(),
            probs: include_probs.then(|| self.assignment.probs.as_slice().to_vec()),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    /// Parses the JSON form. Without probabilities, a one-hot matrix is
    /// rebuilt from the labels and the stored entropy is kept.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Doc = serde_json::from_str(text)?;
        if doc.labels.len() != doc.D || doc.entropy.len() != doc.D {
            return Err(Error::invalid("labels and entropy must both have length D"));
        }
        if doc.D == 0 || doc.L == 0 || doc.K < 2 {
            return Err(Error::invalid(format!("implausible sizes D={}, L={}, K={}", doc.D, doc.L, doc.K)));
        }
        if doc.labels.iter().any(|&s| s >= doc.K) {
            return Err(Error::invalid("label out of range"));
        }
        let probs = match doc.probs {
            Some(p) => Matrix::from_vec(doc.D, doc.K, p)?,
            None => {
                let mut m = Matrix::zeros(doc.D, doc.K);
                for (t, &s) in doc.labels.iter().enumerate() {
                    m.set(t, s, 1.0);
                }
                m
            }
        };
        if probs.iter_rows().any(|r| (r.iter().sum::<f64>() - 1.0).abs() > 1e-6) {
            return Err(Error::invalid("probability rows must sum to 1"));
        }
        Ok(Explanation {
            ecg_id: doc.ecg_id,
            l: doc.L,
            assignment: Assignment {
                probs,
                labels: doc.labels,
                entropy: doc.entropy,
            },
        })
    }
}
