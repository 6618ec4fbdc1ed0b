//! Mean transformed uncertainty (or saliency) per cardiac phase and group.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::net::{contrast_transform, ContrastConfig};
use crate::signal::KeypointSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    P,
    Qrs,
    T,
    Tp,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::P, Phase::Qrs, Phase::T, Phase::Tp];

    pub fn name(self) -> &'static str {
        match self {
            Phase::P => "P",
            Phase::Qrs => "QRS",
            Phase::T => "T",
            Phase::Tp => "TP",
        }
    }
}

/// Half-open sample ranges of each phase. Complexes span onset through
/// offset inclusive.
pub fn phase_ranges(kps: &KeypointSet) -> [Vec<Range<usize>>; 4] {
    let mut out: [Vec<Range<usize>>; 4] = Default::default();
    for b in &kps.beats {
        for (slot, on, off) in [(0, b.p_on, b.p_off), (1, b.qrs_on, b.qrs_off), (2, b.t_on, b.t_off)] {
            if let (Some(a), Some(z)) = (on, off) {
                out[slot].push(a..z + 1);
            }
        }
    }
    out[3] = kps.tp_intervals.iter().map(|&(a, b)| a..b).collect();
    out
}

/// Phase of a cell `[start, end)` judged by its midpoint.
pub fn phase_of(cell: &Range<usize>, ranges: &[Vec<Range<usize>>; 4]) -> Option<Phase> {
    let mid2 = cell.start + cell.end;
    Phase::ALL
        .iter()
        .zip(ranges)
        .find(|(_, rs)| rs.iter().any(|r| 2 * r.start <= mid2 && mid2 < 2 * r.end))
        .map(|(p, _)| *p)
}

/// One record's map over a uniform timeline of `values.len()` cells across
/// `len` samples.
#[derive(Debug, Clone)]
pub struct PhaseInput<'a> {
    pub values: &'a [f64],
    pub len: usize,
    pub keypoints: &'a KeypointSet,
    pub group: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTable {
    pub groups: Vec<i64>,
    /// `groups x 4` means in `Phase::ALL` order, absent for empty cells.
    pub means: Vec<[Option<f64>; 4]>,
    pub counts: Vec<[usize; 4]>,
}

impl PhaseTable {
    pub fn to_csv(&self, group_label: impl Fn(i64) -> String) -> String {
        let mut s = String::from("group,P,QRS,T,TP\n");
        for (g, row) in self.groups.iter().zip(&self.means) {
            let cells: Vec<String> = row.iter().map(|v| v.map_or(String::new(), |m| format!("{m}"))).collect();
            s += &format!("{},{}\n", group_label(*g), cells.join(","));
        }
        s
    }

    /// Mean over all groups, weighted by cell counts.
    pub fn pooled(&self) -> [Option<f64>; 4] {
        std::array::from_fn(|p| {
            let (mut sum, mut n) = (0.0, 0usize);
            for (m, c) in self.means.iter().zip(&self.counts) {
                if let Some(v) = m[p] {
                    sum += v * c[p] as f64;
                    n += c[p];
                }
            }
            (n > 0).then(|| sum / n as f64)
        })
    }
}

/// Contrast-transforms each record's map, then averages the cells of every
/// phase within each group.
pub fn phase_means(inputs: &[PhaseInput<'_>], contrast: Option<&ContrastConfig>) -> Result<PhaseTable> {
    let mut acc: BTreeMap<i64, ([f64; 4], [usize; 4])> = BTreeMap::new();
    for inp in inputs {
        let d = inp.values.len();
        if d == 0 || inp.len < d {
            return Err(Error::invalid(format!("map of {d} cells cannot cover {} samples", inp.len)));
        }
        let vals = match contrast {
            Some(c) => contrast_transform(inp.values, c),
            None => inp.values.to_vec(),
        };
        let ranges = phase_ranges(inp.keypoints);
        let slot = acc.entry(inp.group).or_insert(([0.0; 4], [0; 4]));
        for (j, v) in vals.iter().enumerate() {
            let cell = j * inp.len / d..(j + 1) * inp.len / d;
            if let Some(p) = phase_of(&cell, &ranges) {
                let i = p as usize;
                slot.0[i] += v;
                slot.1[i] += 1;
            }
        }
    }
    let mut table = PhaseTable {
        groups: Vec::new(),
        means: Vec::new(),
        counts: Vec::new(),
    };
    for (g, (sums, counts)) in acc {
        table.groups.push(g);
        table.means.push(std::array::from_fn(|i| (counts[i] > 0).then(|| sums[i] / counts[i] as f64)));
        table.counts.push(counts);
    }
    Ok(table)
}

/// Lower edge of the 5-year bin containing `age`.
pub fn age_bin(age: f64) -> i64 {
    (age / 5.0).floor() as i64 * 5
}

pub fn age_bin_label(start: i64) -> String {
    format!("{start}-{}", start + 4)
}

/// Entropy maps grouped by predicted label or predicted-age bin.
pub fn uncertainty_by_phase(
    explanations: &[&crate::explain::Explanation],
    keypoints: &[&KeypointSet],
    groups: &[i64],
    contrast: &ContrastConfig,
) -> Result<PhaseTable> {
    if explanations.len() != keypoints.len() || explanations.len() != groups.len() {
        return Err(Error::invalid("explanations, keypoints and groups must align"));
    }
    let inputs: Vec<PhaseInput<'_>> = explanations
        .iter()
        .zip(keypoints)
        .zip(groups)
        .map(|((e, k), &g)| PhaseInput {
            values: e.entropy(),
            len: e.l,
            keypoints: k,
            group: g,
        })
        .collect();
    phase_means(&inputs, Some(contrast))
}
