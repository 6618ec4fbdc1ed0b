//! How often each cluster's cells coincide with ECG landmarks.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::explain::Explanation;
use crate::signal::{Keypoint, KeypointSet};
use crate::{Error, Result};

/// One explained record with its landmarks.
#[derive(Debug, Clone, Copy)]
pub struct Annotated<'a> {
    pub explanation: &'a Explanation,
    pub keypoints: &'a KeypointSet,
    pub fs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Share of a cluster's cells that overlap the landmark windows.
    #[default]
    PerCluster,
    /// Share of the cells overlapping a landmark that belong to each cluster.
    PerKeypoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrequencyConfig {
    /// Width of the window centred on each landmark.
    pub window_ms: f64,
    pub normalization: Normalization,
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        FrequencyConfig {
            window_ms: 8.0,
            normalization: Normalization::PerCluster,
        }
    }
}

/// `K x 10` table in `Keypoint::ALL` order; `None` where undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointTable {
    pub k: usize,
    pub keypoints: Vec<String>,
    pub freq: Vec<Vec<Option<f64>>>,
}

impl KeypointTable {
    pub fn column(&self, kp: Keypoint) -> Vec<Option<f64>> {
        let q = Keypoint::ALL.iter().position(|&k| k == kp).expect("known keypoint");
        self.freq.iter().map(|r| r[q]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("cluster,{}\n", self.keypoints.join(","));
        for (k, row) in self.freq.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| v.map_or(String::new(), |f| format!("{f}"))).collect();
            s += &format!("{k},{}\n", cells.join(","));
        }
        s
    }
}

/// Sample ranges (half-open) covered by the landmark's windows in one record.
pub fn landmark_ranges(kps: &KeypointSet, kp: Keypoint, fs: f64, window_ms: f64, len: usize) -> Vec<Range<usize>> {
    if kp == Keypoint::Tp {
        return kps.tp_intervals.iter().map(|&(a, b)| a..b.min(len)).filter(|r| !r.is_empty()).collect();
    }
    let half = (window_ms * fs / 1000.0 / 2.0).floor() as usize;
    kps.occurrences(kp)
        .into_iter()
        .filter(|&s| s < len)
        .map(|s| s.saturating_sub(half)..(s + half + 1).min(len))
        .collect()
}

fn overlaps(cell: &Range<usize>, ranges: &[Range<usize>]) -> bool {
    ranges.iter().any(|r| cell.start < r.end && r.start < cell.end)
}

/// Per-cluster share of cells overlapping any range produced by `ranges`.
pub fn overlap_frequency<F>(records: &[Annotated<'_>], k: usize, ranges: F) -> Result<Vec<Option<f64>>>
where
    F: Fn(&Annotated<'_>) -> Vec<Range<usize>>,
{
    let mut hit = vec![0usize; k];
    let mut total = vec![0usize; k];
    for rec in records {
        let e = rec.explanation;
        if e.k() != k {
            return Err(Error::invalid("explanations use different cluster counts"));
        }
        let rs = ranges(rec);
        for (j, &s) in e.labels().iter().enumerate() {
            let cell = e.timeline(j);
            if cell.is_empty() {
                continue;
            }
            total[s] += 1;
            if overlaps(&cell, &rs) {
                hit[s] += 1;
            }
        }
    }
    Ok(hit
        .iter()
        .zip(&total)
        .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
        .collect())
}

/// Without any landmark the frequencies are undefined rather than zero.
fn any_keypoints(records: &[Annotated<'_>]) -> bool {
    records.iter().any(|r| !r.keypoints.r_peaks.is_empty())
}

pub fn keypoint_frequencies(records: &[Annotated<'_>], cfg: &FrequencyConfig) -> Result<KeypointTable> {
    let k = records.first().map_or(0, |r| r.explanation.k());
    let mut freq = vec![vec![None; Keypoint::ALL.len()]; k];
    for (q, &kp) in Keypoint::ALL.iter().enumerate() {
        let ranges = |r: &Annotated<'_>| landmark_ranges(r.keypoints, kp, r.fs, cfg.window_ms, r.explanation.l);
        let col = match cfg.normalization {
            Normalization::PerCluster => overlap_frequency(records, k, ranges)?,
            Normalization::PerKeypoint => {
                let mut counts = vec![0usize; k];
                for rec in records {
                    let e = rec.explanation;
                    let rs = ranges(rec);
                    for (j, &s) in e.labels().iter().enumerate() {
                        let cell = e.timeline(j);
                        if !cell.is_empty() && overlaps(&cell, &rs) {
                            counts[s] += 1;
                        }
                    }
                }
                let n: usize = counts.iter().sum();
                counts.iter().map(|&c| (n > 0).then(|| c as f64 / n as f64)).collect()
            }
        };
        for (row, v) in freq.iter_mut().zip(col) {
            row[q] = v;
        }
    }
    if !any_keypoints(records) {
        log::warn!("no keypoints available; keypoint frequencies are absent");
        freq.iter_mut().flatten().for_each(|v| *v = None);
    }
    Ok(KeypointTable {
        k,
        keypoints: Keypoint::ALL.iter().map(|k| k.name().to_string()).collect(),
        freq,
    })
}

/// Per-cluster share of cells overlapping the QRS onset, R peak or QRS
/// offset windows.
pub fn qrs_window_frequency(records: &[Annotated<'_>], window_ms: f64) -> Result<Vec<Option<f64>>> {
    let k = records.first().map_or(0, |r| r.explanation.k());
    if !any_keypoints(records) {
        return Ok(vec![None; k]);
    }
    overlap_frequency(records, k, |r| {
        [Keypoint::QrsOn, Keypoint::RPeak, Keypoint::QrsOff]
            .iter()
            .flat_map(|&kp| landmark_ranges(r.keypoints, kp, r.fs, window_ms, r.explanation.l))
            .collect()
    })
}
