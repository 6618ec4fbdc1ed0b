//! Proportion trends of cluster groups over a continuous target.

use serde::{Deserialize, Serialize};

use super::stats::{least_squares, pearson, Line, Pearson};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTrend {
    pub clusters: Vec<usize>,
    /// `(target, summed proportion)` per record.
    pub points: Vec<(f64, f64)>,
    pub line: Line,
    /// Absent when the summed proportion is constant.
    pub pearson: Option<Pearson>,
}

pub fn age_group_trends(props: &[Vec<f64>], target: &[f64], groups: &[Vec<usize>]) -> Result<Vec<GroupTrend>> {
    if props.len() != target.len() {
        return Err(Error::Dimension {
            expected: props.len(),
            actual: target.len(),
            context: "targets vs proportion vectors",
        });
    }
    let k = props.first().map_or(0, |p| p.len());
    groups
        .iter()
        .map(|g| {
            if g.is_empty() {
                return Err(Error::invalid("cluster group is empty"));
            }
            if let Some(&bad) = g.iter().find(|&&c| c >= k) {
                return Err(Error::invalid(format!("cluster {bad} out of range for K={k}")));
            }
            let y: Vec<f64> = props.iter().map(|p| g.iter().map(|&c| p[c]).sum()).collect();
            let line = least_squares(target, &y)?;
            let pearson = match pearson(target, &y) {
                Ok(p) => Some(p),
                Err(Error::Numeric(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(GroupTrend {
                clusters: g.clone(),
                points: target.iter().copied().zip(y).collect(),
                line,
                pearson,
            })
        })
        .collect()
}
