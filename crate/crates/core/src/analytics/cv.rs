//! Repeated stratified k-fold cross-validation of multilabel forests.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{mean_metrics, multilabel_metrics, BinaryMetrics, MetricsTable};
use crate::forest::{multilabel_fit, multilabel_predict, ForestConfig};
use crate::signal::splitmix;
use crate::{par, Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub forest: ForestConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 5,
            repeats: 3,
            seed: 0,
            forest: ForestConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// One entry per train/eval run.
    pub runs: Vec<MetricsTable>,
    /// Per-label metrics averaged over runs.
    pub per_label: Vec<BinaryMetrics>,
    /// Macro metrics averaged over runs.
    pub macro_avg: BinaryMetrics,
    /// Standard deviation over runs of the macro metrics.
    pub macro_std: BinaryMetrics,
    pub stratified: bool,
    /// Evaluation fold sizes of the first repeat.
    pub fold_sizes: Vec<usize>,
}

/// Order that depends only on row contents, so that results do not depend
/// on the order records were supplied in.
fn canonical_order(x: &Matrix, y: &[Vec<u8>]) -> Vec<usize> {
    let key = |i: usize| {
        let h = x.row(i).iter().fold(0u64, |h, v| splitmix(h ^ v.to_bits()));
        y[i].iter().fold(h, |h, &l| splitmix(h ^ u64::from(l)))
    };
    let keys: Vec<u64> = (0..x.rows()).map(key).collect();
    let mut idx: Vec<usize> = (0..x.rows()).collect();
    idx.sort_by(|&a, &b| {
        keys[a]
            .cmp(&keys[b])
            .then_with(|| {
                x.row(a)
                    .iter()
                    .zip(x.row(b))
                    .map(|(p, q)| p.total_cmp(q))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then_with(|| y[a].cmp(&y[b]))
    });
    idx
}

/// Splits `order` into `folds` groups. With `strata`, each class is shuffled
/// and dealt round-robin with a shared counter so sizes differ by at most one.
pub fn make_folds(order: &[usize], strata: Option<&[u8]>, folds: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    let mut deal = |mut items: Vec<usize>, rng: &mut ChaCha8Rng| {
        items.shuffle(rng);
        for i in items {
            out[next % folds].push(i);
            next += 1;
        }
    };
    match strata {
        Some(s) => {
            let mut classes: Vec<u8> = order.iter().map(|&i| s[i]).collect();
            classes.sort_unstable();
            classes.dedup();
            for c in classes {
                deal(order.iter().copied().filter(|&i| s[i] == c).collect(), rng);
            }
        }
        None => deal(order.to_vec(), rng),
    }
    out
}

/// `folds x repeats` runs of fit-on-train, score-on-held-out; metrics are
/// averaged over runs.
pub fn cross_validate(x: &Matrix, y: &[Vec<u8>], cfg: &CvConfig) -> Result<CvReport> {
    let n = x.rows();
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: y.len(),
            context: "label rows vs feature rows",
        });
    }
    if cfg.folds < 2 || cfg.repeats == 0 {
        return Err(Error::Config("cross-validation needs folds >= 2 and repeats >= 1".into()));
    }
    if n < cfg.folds {
        return Err(Error::invalid(format!("{} folds need at least as many records, got {n}", cfg.folds)));
    }
    if y.first().is_none_or(|r| r.is_empty()) {
        return Err(Error::invalid("cross-validation needs at least one label"));
    }
    let order = canonical_order(x, y);
    let mut rank = vec![0; n];
    order.iter().enumerate().for_each(|(r, &i)| rank[i] = r);
    let first: Vec<u8> = y.iter().map(|r| r[0]).collect();
    let pos = first.iter().filter(|&&v| v == 1).count();
    let stratified = pos >= cfg.folds && n - pos >= cfg.folds;
    if !stratified {
        log::warn!(
            "a class of the first label has fewer than {} records; using unstratified folds",
            cfg.folds
        );
    }
    let splits: Vec<Vec<Vec<usize>>> = (0..cfg.repeats)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix(cfg.seed ^ splitmix(r as u64 + 0x5eed)));
            make_folds(&order, stratified.then_some(first.as_slice()), cfg.folds, &mut rng)
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cfg.repeats)
        .flat_map(|r| (0..cfg.folds).map(move |f| (r, f)))
        .collect();
    let runs = par::try_map(&jobs, |&(r, f)| {
        let eval = &splits[r][f];
        let mut train: Vec<usize> = splits[r]
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        train.sort_by_key(|&i| rank[i]);
        let ytr: Vec<Vec<u8>> = train.iter().map(|&i| y[i].clone()).collect();
        let yev: Vec<Vec<u8>> = eval.iter().map(|&i| y[i].clone()).collect();
        let fc = ForestConfig {
            seed: splitmix(cfg.forest.seed ^ splitmix((r * cfg.folds + f) as u64)),
            ..cfg.forest.clone()
        };
        let model = multilabel_fit(&x.select_rows(&train), &ytr, &fc)?;
        let scores = multilabel_predict(&model, &x.select_rows(eval))?;
        multilabel_metrics(&yev, &scores)
    })?;
    let n_labels = y[0].len();
    let per_label = (0..n_labels)
        .map(|j| mean_metrics(&runs.iter().map(|t| t.per_label[j]).collect::<Vec<_>>()))
        .collect();
    let macros: Vec<BinaryMetrics> = runs.iter().map(|t| t.macro_avg).collect();
    let macro_avg = mean_metrics(&macros);
    let sd = |f: &dyn Fn(&BinaryMetrics) -> Option<f64>| {
        let v: Vec<f64> = macros.iter().filter_map(f).collect();
        if v.is_empty() {
            return None;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        Some((v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / v.len() as f64).sqrt())
    };
    let macro_std = BinaryMetrics {
        accuracy: sd(&|m| Some(m.accuracy)).unwrap_or(0.0),
        precision: sd(&|m| Some(m.precision)).unwrap_or(0.0),
        recall: sd(&|m| Some(m.recall)).unwrap_or(0.0),
        f1: sd(&|m| Some(m.f1)).unwrap_or(0.0),
        auroc: sd(&|m| m.auroc),
    };
    Ok(CvReport {
        fold_sizes: splits[0].iter().map(|f| f.len()).collect(),
        runs,
        per_label,
        macro_avg,
        macro_std,
        stratified,
    })
}
