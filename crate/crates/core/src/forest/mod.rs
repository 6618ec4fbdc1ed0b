//! Bagged CART trees with Gini splits, for binary and multilabel targets.

mod tree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use tree::{Node, TreeParams};

use crate::signal::splitmix;
use crate::{par, Error, Matrix, Result};

/// Features examined per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, f: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((f as f64).sqrt().ceil() as usize).clamp(1, f.max(1)),
            MaxFeatures::All => f,
            MaxFeatures::Count(n) => n.clamp(1, f.max(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            max_depth: None,
            min_leaf: 1,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Node>,
    pub n_features: usize,
    pub max_features: usize,
    pub seed: u64,
    /// Out-of-bag misclassification rate at threshold 0.5, when bootstrapped
    /// and at least one sample was left out of some tree.
    pub oob_error: Option<f64>,
}

fn check_xy(x: &Matrix, y: &[u8]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::Dimension {
            expected: x.rows(),
            actual: y.len(),
            context: "label count vs feature rows",
        });
    }
    if x.rows() < 2 || x.cols() == 0 {
        return Err(Error::invalid("random forest needs at least 2 samples and 1 feature"));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    if !x.is_finite() {
        return Err(Error::Numeric("feature matrix contains non-finite values".into()));
    }
    Ok(())
}

/// Fits a binary forest; both classes must be present.
pub fn rf_fit(x: &Matrix, y: &[u8], cfg: &ForestConfig) -> Result<Forest> {
    check_xy(x, y)?;
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::invalid("random forest needs both classes in the training labels"));
    }
    if cfg.n_trees == 0 || cfg.min_leaf == 0 {
        return Err(Error::Config("n_trees and min_leaf must be positive".into()));
    }
    let n = x.rows();
    let params = TreeParams {
        max_features: cfg.max_features.resolve(x.cols()),
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf,
    };
    let cols = tree::Columns::new(x);
    let grown = par::map_range(cfg.n_trees, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(cfg.seed ^ splitmix(t as u64 + 1)));
        let sample: Vec<usize> = if cfg.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let node = tree::grow(&cols, y, sample.clone(), &params, &mut rng);
        let mut in_bag = vec![false; n];
        sample.iter().for_each(|&i| in_bag[i] = true);
        (node, in_bag)
    });
    let oob_error = cfg.bootstrap.then(|| oob(&grown, x, y)).flatten();
    Ok(Forest {
        trees: grown.into_iter().map(|g| g.0).collect(),
        n_features: x.cols(),
        max_features: params.max_features,
        seed: cfg.seed,
        oob_error,
    })
}

fn oob(grown: &[(Node, Vec<bool>)], x: &Matrix, y: &[u8]) -> Option<f64> {
    let (mut wrong, mut seen) = (0usize, 0usize);
    for (i, &yi) in y.iter().enumerate() {
        let votes: Vec<f64> = grown
            .iter()
            .filter(|g| !g.1[i])
            .map(|g| g.0.predict(x.row(i)))
            .collect();
        if votes.is_empty() {
            continue;
        }
        seen += 1;
        let p = votes.iter().sum::<f64>() / votes.len() as f64;
        if (p >= 0.5) != (yi == 1) {
            wrong += 1;
        }
    }
    (seen > 0).then(|| wrong as f64 / seen as f64)
}

impl Forest {
    /// Mean positive-class leaf frequency over trees, per row.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                actual: x.cols(),
                context: "feature columns vs forest training width",
            });
        }
        let n_trees = self.trees.len() as f64;
        Ok(par::map_range(x.rows(), |i| {
            self.trees.iter().map(|t| t.predict(x.row(i))).sum::<f64>() / n_trees
        }))
    }

    /// Number of splits on each feature over all trees.
    pub fn split_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_features];
        for t in &self.trees {
            t.visit_splits(&mut |f| counts[f] += 1);
        }
        counts
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

pub fn rf_predict_proba(forest: &Forest, x: &Matrix) -> Result<Vec<f64>> {
    forest.predict_proba(x)
}

/// One model per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelModel {
    Forest(Forest),
    /// The label had a single class in training; predicts its rate.
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiForest {
    pub labels: Vec<LabelModel>,
}

/// Fits one independent forest per column of `y` (`N x n_labels`).
pub fn multilabel_fit(x: &Matrix, y: &[Vec<u8>], cfg: &ForestConfig) -> Result<MultiForest> {
    let n_labels = y.first().map_or(0, |r| r.len());
    if y.iter().any(|r| r.len() != n_labels) {
        return Err(Error::invalid("every label row must have the same length"));
    }
    let mut labels = Vec::with_capacity(n_labels);
    for j in 0..n_labels {
        let col: Vec<u8> = y.iter().map(|r| r[j]).collect();
        check_xy(x, &col)?;
        let pos = col.iter().filter(|&&v| v == 1).count();
        if pos == 0 || pos == col.len() {
            log::warn!("label {j} has a single class in training; predicting a constant");
            labels.push(LabelModel::Constant(pos as f64 / col.len() as f64));
        } else {
            // Same seed for every label, so label order does not matter.
            labels.push(LabelModel::Forest(rf_fit(x, &col, cfg)?));
        }
    }
    Ok(MultiForest { labels })
}

/// Scores per row, `N x n_labels`.
pub fn multilabel_predict(model: &MultiForest, x: &Matrix) -> Result<Vec<Vec<f64>>> {
    let per_label = model
        .labels
        .iter()
        .map(|m| match m {
            LabelModel::Forest(f) => f.predict_proba(x),
            LabelModel::Constant(p) => Ok(vec![*p; x.rows()]),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..x.rows()).map(|i| per_label.iter().map(|c| c[i]).collect()).collect())
}

#[cfg(test)]
mod tests;
