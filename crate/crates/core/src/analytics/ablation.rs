//! Training-size and cluster-count ablations.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cv::{cross_validate, CvConfig};
use super::metrics::BinaryMetrics;
use super::report::masked_proportions;
use crate::explain::{explain_all, fit_explainer, ExplainerConfig};
use crate::net::Network;
use crate::signal::{splitmix, EcgRecord};
use crate::{Error, Matrix, Result};

/// A subset size, or the whole pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SizeSpec {
    Count(usize),
    /// Only `"all"` is accepted.
    Keyword(String),
}

impl SizeSpec {
    pub fn all() -> Self {
        SizeSpec::Keyword("all".into())
    }

    pub fn resolve(&self, pool: usize) -> Result<usize> {
        match self {
            SizeSpec::Count(n) if *n >= 1 && *n <= pool => Ok(*n),
            SizeSpec::Count(n) => Err(Error::Config(format!("subset size {n} outside [1, {pool}]"))),
            SizeSpec::Keyword(k) if k == "all" => Ok(pool),
            SizeSpec::Keyword(k) => Err(Error::Config(format!("unknown subset size `{k}`"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SizeSpec::Count(n) => n.to_string(),
            SizeSpec::Keyword(k) => k.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub sizes: Vec<SizeSpec>,
    pub ks: Vec<usize>,
    /// Cluster count used along the size axis.
    pub k_for_sizes: usize,
    /// Fit subset used along the cluster-count axis.
    pub size_for_ks: SizeSpec,
    pub explainer: ExplainerConfig,
    pub cv: CvConfig,
    pub seed: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            sizes: [50, 100, 200, 500, 1000, 1500]
                .into_iter()
                .map(SizeSpec::Count)
                .chain([SizeSpec::all()])
                .collect(),
            ks: vec![5, 10, 20, 50, 100],
            k_for_sizes: 20,
            size_for_ks: SizeSpec::Count(500),
            explainer: ExplainerConfig::default(),
            cv: CvConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub n_fit: usize,
    pub k: usize,
    pub mean: BinaryMetrics,
    pub std: BinaryMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTables {
    pub sizes: Vec<AblationRow>,
    pub ks: Vec<AblationRow>,
}

/// Metrics as rows and grid values as columns.
pub fn grid_csv(header: &str, rows: &[AblationRow]) -> String {
    let mut s = format!("{header},{}\n", rows.iter().map(|r| r.label.as_str()).collect::<Vec<_>>().join(","));
    for (i, m) in BinaryMetrics::NAMES.iter().enumerate() {
        let vals: Vec<String> = rows
            .iter()
            .map(|r| r.mean.values()[i].map_or(String::new(), |v| format!("{v:.4}")))
            .collect();
        s += &format!("{m},{}\n", vals.join(","));
    }
    s
}

struct Data<'a> {
    net: &'a Network,
    pool: &'a [EcgRecord],
    eval: &'a [EcgRecord],
    labels: &'a [Vec<u8>],
}

fn cell(data: &Data<'_>, n_fit: usize, k: usize, cfg: &AblationConfig, tag: u64, label: String) -> Result<AblationRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(cfg.seed ^ tag));
    let mut idx = sample(&mut rng, data.pool.len(), n_fit).into_vec();
    idx.sort_unstable();
    let subset: Vec<EcgRecord> = idx.iter().map(|&i| data.pool[i].clone()).collect();
    let ecfg = ExplainerConfig {
        k,
        seed: splitmix(cfg.seed ^ tag ^ 0xa5a5),
        ..cfg.explainer.clone()
    };
    let model = fit_explainer(data.net, &subset, &ecfg)?;
    let ex = explain_all(data.net, &model, data.eval)?;
    let props = ex
        .iter()
        .zip(data.eval)
        .map(|(e, r)| masked_proportions(e, &r.valid_range()))
        .collect::<Result<Vec<_>>>()?;
    let report = cross_validate(&Matrix::from_rows(&props)?, data.labels, &cfg.cv)?;
    log::info!("ablation {label}: macro AUROC {:?}", report.macro_avg.auroc);
    Ok(AblationRow {
        label,
        n_fit,
        k,
        mean: report.macro_avg,
        std: report.macro_std,
    })
}

/// Fits explainers on seeded subsets of `pool`, then cross-validates forests
/// on the evaluation set's cluster proportions.
pub fn ablation_grid(
    net: &Network,
    pool: &[EcgRecord],
    eval: &[EcgRecord],
    eval_labels: &[Vec<u8>],
    cfg: &AblationConfig,
) -> Result<AblationTables> {
    if eval.len() != eval_labels.len() {
        return Err(Error::invalid("evaluation records and labels must align"));
    }
    if cfg.ks.iter().chain([&cfg.k_for_sizes]).any(|&k| k < 2) {
        return Err(Error::Config("cluster counts must be at least 2".into()));
    }
    let data = Data {
        net,
        pool,
        eval,
        labels: eval_labels,
    };
    let sizes = cfg
        .sizes
        .iter()
        .enumerate()
        .map(|(i, s)| cell(&data, s.resolve(pool.len())?, cfg.k_for_sizes, cfg, 1 + i as u64, s.label()))
        .collect::<Result<Vec<_>>>()?;
    let n_k = cfg.size_for_ks.resolve(pool.len())?;
    let ks = cfg
        .ks
        .iter()
        .enumerate()
        .map(|(i, &k)| cell(&data, n_k, k, cfg, 0x100 + i as u64, k.to_string()))
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTables { sizes, ks })
}
