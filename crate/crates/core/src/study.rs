//! Seeded synthetic end-to-end benchmark.
//!
//! For each seed: generate a 4-class train/eval corpus, build a toy network
//! (random convolutional features with a ridge-fitted linear head), fit an
//! explainer on the training records, and compare forests trained on cluster
//! proportions against forests trained on the decimated raw signal. The eval
//! explanations are also scored against the generator's ground-truth
//! landmarks.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analytics::{
    keypoint_frequencies, masked_proportions, multilabel_metrics, qrs_window_frequency, raw_matrix, threshold,
    Annotated, BinaryMetrics, FrequencyConfig, KeypointTable, MAX_RAW_FEATURES,
};
use crate::cluster::Temperature;
use crate::explain::{explain_all, fit_explainer, ExplainerConfig, Explanation};
use crate::forest::{multilabel_fit, multilabel_predict, ForestConfig};
use crate::net::{Network, ReferenceArch, Tensor, WeightsBundle};
use crate::signal::{splitmix, synth_corpus, CorpusSpec, EcgRecord, Keypoint, KeypointSet};
use crate::{par, Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub arch: ReferenceArch,
    pub n_train: usize,
    pub n_eval: usize,
    pub fs: f64,
    pub noise_std_mv: f64,
    pub seeds: Vec<u64>,
    pub k: usize,
    /// Training records pooled for k-means; `None` uses all of them.
    pub fit_records: Option<usize>,
    pub kmeans_max_iter: usize,
    pub forest: ForestConfig,
    /// Ridge penalty relative to the mean squared feature norm.
    pub ridge: f64,
    /// Clusters holding less than this share of eval cells are ignored when
    /// picking the best landmark-specific cluster.
    pub min_cluster_share: f64,
    pub window_ms: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            arch: ReferenceArch::compact(),
            n_train: 600,
            n_eval: 200,
            fs: 250.0,
            noise_std_mv: 0.02,
            seeds: (0..5).collect(),
            k: 20,
            fit_records: Some(200),
            kmeans_max_iter: 100,
            forest: ForestConfig::default(),
            ridge: 1e-2,
            min_cluster_share: 0.01,
            window_ms: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Network scores against labels on the eval set.
    pub net_vs_labels: BinaryMetrics,
    pub rf_clus_labels: BinaryMetrics,
    pub rf_sig_labels: BinaryMetrics,
    pub rf_clus_pred: BinaryMetrics,
    pub rf_sig_pred: BinaryMetrics,
    pub keypoints: KeypointTable,
    pub qrs_window: Vec<Option<f64>>,
    pub cluster_share: Vec<f64>,
    /// Best TP-interval frequency among clusters above the share floor.
    pub best_tp: f64,
    pub best_qrs: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub seeds: Vec<SeedResult>,
    pub mean_clus_auroc: f64,
    pub mean_sig_auroc: f64,
    pub mean_clus_pred_auroc: f64,
    pub mean_sig_pred_auroc: f64,
    pub mean_best_tp: f64,
    pub mean_best_qrs: f64,
}

/// Eval-time artifacts of one seed, kept for plotting.
pub struct SeedArtifacts {
    pub bundle: WeightsBundle,
    pub eval: Vec<(EcgRecord, KeypointSet)>,
    pub explanations: Vec<Explanation>,
}

fn cholesky_solve(a: &mut [f64], n: usize, rhs: &mut [f64], m: usize) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return Err(Error::Numeric("ridge system is not positive definite".into()));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for c in 0..m {
        for i in 0..n {
            let mut s = rhs[i * m + c];
            for k in 0..i {
                s -= a[i * n + k] * rhs[k * m + c];
            }
            rhs[i * m + c] = s / a[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = rhs[i * m + c];
            for k in i + 1..n {
                s -= a[k * n + i] * rhs[k * m + c];
            }
            rhs[i * m + c] = s / a[i * n + i];
        }
    }
    Ok(())
}

/// Replaces the final dense layer by a ridge regression of logit targets
/// (`+-2`) on the activation feeding the final flatten, solved in dual form.
pub fn fit_linear_head(bundle: &mut WeightsBundle, records: &[EcgRecord], labels: &[Vec<u8>], ridge: f64) -> Result<()> {
    let net = Network::new(bundle)?;
    let (last, dense) = match bundle.arch.as_slice() {
        [.., src, crate::net::Layer::Flatten { .. }, crate::net::Layer::Dense { name, .. }] => {
            (src.name().to_string(), name.clone())
        }
        _ => return Err(Error::Config("head fitting needs the bundle to end in flatten then dense".into())),
    };
    let feats = par::try_map(records, |r| {
        let out = net.forward(r, &[last.as_str()])?;
        // Flatten is channel-major while activations are time-major.
        let a = &out.acts[0];
        Ok::<_, Error>((0..a.c()).flat_map(|c| (0..a.d()).map(move |t| a.data.get(t, c))).collect::<Vec<f64>>())
    })?;
    let n = feats.len();
    let p = feats.first().map_or(0, Vec::len);
    let m = labels.first().map_or(0, Vec::len);
    if n == 0 || labels.len() != n {
        return Err(Error::invalid("head fitting needs one label row per record"));
    }
    let mean: Vec<f64> = (0..p).map(|j| feats.iter().map(|f| f[j]).sum::<f64>() / n as f64).collect();
    let centred: Vec<Vec<f64>> = feats
        .iter()
        .map(|f| f.iter().zip(&mean).map(|(a, b)| a - b).collect())
        .collect();
    let targets: Vec<f64> = labels.iter().flatten().map(|&y| if y > 0 { 2.0 } else { -2.0 }).collect();
    let t_mean: Vec<f64> = (0..m).map(|c| (0..n).map(|i| targets[i * m + c]).sum::<f64>() / n as f64).collect();
    let gram_rows = par::map_range(n, |i| (0..n).map(|j| dot(&centred[i], &centred[j])).collect::<Vec<f64>>());
    let mut gram: Vec<f64> = gram_rows.into_iter().flatten().collect();
    let trace: f64 = (0..n).map(|i| gram[i * n + i]).sum();
    let lambda = ridge * (trace / n as f64).max(f64::MIN_POSITIVE);
    for i in 0..n {
        gram[i * n + i] += lambda;
    }
    let mut alpha: Vec<f64> = (0..n * m).map(|k| targets[k] - t_mean[k % m]).collect();
    cholesky_solve(&mut gram, n, &mut alpha, m)?;
    let mut w = vec![0.0f64; m * p];
    for (i, row) in centred.iter().enumerate() {
        for c in 0..m {
            let a = alpha[i * m + c];
            for (wj, x) in w[c * p..(c + 1) * p].iter_mut().zip(row) {
                *wj += a * x;
            }
        }
    }
    let bias: Vec<f64> = (0..m).map(|c| t_mean[c] - dot(&w[c * p..(c + 1) * p], &mean)).collect();
    let wt = Tensor::new(vec![m, p], w.iter().map(|&v| v as f32).collect())?;
    let bt = Tensor::new(vec![m], bias.iter().map(|&v| v as f32).collect())?;
    let mut params = bundle.params.clone();
    params.insert(format!("{dense}.weight"), wt);
    params.insert(format!("{dense}.bias"), bt);
    *bundle = WeightsBundle::new(bundle.arch.clone(), bundle.meta.clone(), params)?;
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn corpus(cfg: &StudyConfig, n: usize, seed: u64) -> Result<Vec<(EcgRecord, KeypointSet)>> {
    synth_corpus(&CorpusSpec {
        n_records: n,
        fs: cfg.fs,
        length: cfg.arch.input_length,
        noise_std_mv: cfg.noise_std_mv,
        seed,
        ..CorpusSpec::default()
    })
}

fn labels_of(records: &[EcgRecord]) -> Result<Vec<Vec<u8>>> {
    records
        .iter()
        .map(|r| r.labels().map(<[u8]>::to_vec).ok_or_else(|| Error::invalid(format!("record {} has no labels", r.id))))
        .collect()
}

fn holdout(x_tr: &Matrix, y_tr: &[Vec<u8>], x_ev: &Matrix, y_ev: &[Vec<u8>], forest: &ForestConfig) -> Result<BinaryMetrics> {
    let model = multilabel_fit(x_tr, y_tr, forest)?;
    let scores = multilabel_predict(&model, x_ev)?;
    Ok(multilabel_metrics(y_ev, &scores)?.macro_avg)
}

fn proportion_matrix(ex: &[Explanation], records: &[EcgRecord]) -> Result<Matrix> {
    let rows = ex
        .iter()
        .zip(records)
        .map(|(e, r)| masked_proportions(e, &r.valid_range()))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows)
}

/// Runs one seed and returns its metrics plus the eval artifacts.
pub fn run_seed(cfg: &StudyConfig, seed: u64) -> Result<(SeedResult, SeedArtifacts)> {
    let start = Instant::now();
    let train = corpus(cfg, cfg.n_train, splitmix(seed ^ 0x7261_696e))?;
    let eval = corpus(cfg, cfg.n_eval, splitmix(seed ^ 0x6576_616c))?;
    let tr: Vec<EcgRecord> = train.into_iter().map(|(r, _)| r).collect();
    let ev: Vec<EcgRecord> = eval.iter().map(|(r, _)| r.clone()).collect();
    let y_tr = labels_of(&tr)?;
    let y_ev = labels_of(&ev)?;

    let mut bundle = cfg.arch.build(splitmix(seed))?;
    fit_linear_head(&mut bundle, &tr, &y_tr, cfg.ridge)?;
    let net = Network::new(&bundle)?;
    let taps = net.default_taps().to_vec();
    let score = |recs: &[EcgRecord]| par::try_map(recs, |r| Ok::<_, Error>(net.forward(r, &taps[..0])?.output));
    let s_tr = score(&tr)?;
    let s_ev = score(&ev)?;
    let net_vs_labels = multilabel_metrics(&y_ev, &s_ev)?.macro_avg;

    let n_fit = cfg.fit_records.unwrap_or(tr.len()).min(tr.len());
    let ecfg = ExplainerConfig {
        k: cfg.k,
        seed: splitmix(seed ^ 0x6b6d),
        max_iter: cfg.kmeans_max_iter,
        temperature: Temperature::MeanInertia,
        ..ExplainerConfig::default()
    };
    let model = fit_explainer(&net, &tr[..n_fit], &ecfg)?;
    let ex_tr = explain_all(&net, &model, &tr)?;
    let ex_ev = explain_all(&net, &model, &ev)?;
    let p_tr = proportion_matrix(&ex_tr, &tr)?;
    let p_ev = proportion_matrix(&ex_ev, &ev)?;
    let raw_tr = raw_matrix(&tr, MAX_RAW_FEATURES)?;
    let raw_ev = raw_matrix(&ev, MAX_RAW_FEATURES)?;

    let forest = ForestConfig {
        seed: splitmix(seed ^ 0x7266),
        ..cfg.forest.clone()
    };
    let pred_tr = threshold(&s_tr);
    let pred_ev = threshold(&s_ev);
    let rf_clus_labels = holdout(&p_tr, &y_tr, &p_ev, &y_ev, &forest)?;
    let rf_sig_labels = holdout(&raw_tr, &y_tr, &raw_ev, &y_ev, &forest)?;
    let rf_clus_pred = holdout(&p_tr, &pred_tr, &p_ev, &pred_ev, &forest)?;
    let rf_sig_pred = holdout(&raw_tr, &pred_tr, &raw_ev, &pred_ev, &forest)?;

    let annotated: Vec<Annotated<'_>> = ex_ev
        .iter()
        .zip(&eval)
        .map(|(e, (r, k))| Annotated {
            explanation: e,
            keypoints: k,
            fs: r.fs(),
        })
        .collect();
    let fcfg = FrequencyConfig {
        window_ms: cfg.window_ms,
        ..FrequencyConfig::default()
    };
    let keypoints = keypoint_frequencies(&annotated, &fcfg)?;
    let qrs_window = qrs_window_frequency(&annotated, cfg.window_ms)?;
    let mut counts = vec![0usize; cfg.k];
    for e in &ex_ev {
        for &s in e.labels() {
            counts[s] += 1;
        }
    }
    let total = counts.iter().sum::<usize>().max(1) as f64;
    let cluster_share: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let best = |col: &[Option<f64>]| {
        col.iter()
            .zip(&cluster_share)
            .filter(|(_, &s)| s >= cfg.min_cluster_share)
            .filter_map(|(v, _)| *v)
            .fold(0.0, f64::max)
    };
    let best_tp = best(&keypoints.column(Keypoint::Tp));
    let best_qrs = best(&qrs_window);
    let seconds = start.elapsed().as_secs_f64();
    log::info!(
        "study seed {seed}: clus AUROC {:?}, sig AUROC {:?}, TP {best_tp:.3}, QRS {best_qrs:.3} ({seconds:.1} s)",
        rf_clus_labels.auroc,
        rf_sig_labels.auroc
    );
    Ok((
        SeedResult {
            seed,
            net_vs_labels,
            rf_clus_labels,
            rf_sig_labels,
            rf_clus_pred,
            rf_sig_pred,
            keypoints,
            qrs_window,
            cluster_share,
            best_tp,
            best_qrs,
            seconds,
        },
        SeedArtifacts {
            bundle,
            eval,
            explanations: ex_ev,
        },
    ))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Runs every configured seed sequentially; each seed parallelizes inside.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    if cfg.seeds.is_empty() {
        return Err(Error::Config("study needs at least one seed".into()));
    }
    let seeds = cfg
        .seeds
        .iter()
        .map(|&s| run_seed(cfg, s).map(|(r, _)| r))
        .collect::<Result<Vec<_>>>()?;
    let auc = |f: fn(&SeedResult) -> &BinaryMetrics| mean(seeds.iter().map(|s| f(s).auroc.unwrap_or(f64::NAN)));
    Ok(StudyResult {
        mean_clus_auroc: auc(|s| &s.rf_clus_labels),
        mean_sig_auroc: auc(|s| &s.rf_sig_labels),
        mean_clus_pred_auroc: auc(|s| &s.rf_clus_pred),
        mean_sig_pred_auroc: auc(|s| &s.rf_sig_pred),
        mean_best_tp: mean(seeds.iter().map(|s| s.best_tp)),
        mean_best_qrs: mean(seeds.iter().map(|s| s.best_qrs)),
        seeds,
    })
}
