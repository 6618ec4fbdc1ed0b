//! Tap, upsample, normalise, weight, concatenate; then fit or apply the
//! clusterer and map explanation cells back to input samples.

mod collate;
mod explanation;

pub use collate::{collate, linear_upsample, FeatureMatrix, TapLayout};
pub use explanation::Explanation;

use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans_fit, soft_assign, ExplainerModel, KMeansConfig, Temperature};
use crate::net::Network;
use crate::signal::EcgRecord;
use crate::{par, Error, Matrix, Result};

/// Settings for fitting an explainer on a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainerConfig {
    /// Number of clusters.
    pub k: usize,
    pub seed: u64,
    /// Tapped layers; empty means the bundle's declared taps.
    pub taps: Vec<String>,
    pub max_iter: usize,
    pub tol: f64,
    pub n_init: usize,
    pub temperature: Temperature,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        ExplainerConfig {
            k: 20,
            seed: 0,
            taps: Vec::new(),
            max_iter: 300,
            tol: 1e-6,
            n_init: 1,
            temperature: Temperature::MeanInertia,
        }
    }
}

impl ExplainerConfig {
    fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            k: self.k,
            seed: self.seed,
            max_iter: self.max_iter,
            tol: self.tol,
            n_init: self.n_init,
            temperature: self.temperature,
            ..KMeansConfig::default()
        }
    }
}

fn resolve_taps(net: &Network, taps: &[String]) -> Result<Vec<String>> {
    let taps = if taps.is_empty() { net.default_taps().to_vec() } else { taps.to_vec() };
    if taps.is_empty() {
        return Err(Error::Config("no tap layers configured and the bundle declares none".into()));
    }
    Ok(taps)
}

/// Forward pass plus collation for one record.
pub fn features(net: &Network, ecg: &EcgRecord, taps: &[String]) -> Result<FeatureMatrix> {
    let taps = resolve_taps(net, taps)?;
    let out = net.forward(ecg, &taps)?;
    let d = out.acts.first().map(|a| a.d()).unwrap_or(0);
    collate(&out.acts, d)
}

/// Pools the collated rows of every record and fits k-means on them.
pub fn fit_explainer(net: &Network, corpus: &[EcgRecord], cfg: &ExplainerConfig) -> Result<ExplainerModel> {
    if corpus.is_empty() {
        return Err(Error::invalid("cannot fit an explainer on an empty corpus"));
    }
    let taps = resolve_taps(net, &cfg.taps)?;
    let feats = par::try_map(corpus, |ecg| features(net, ecg, &taps))?;
    let layout = &feats[0].layout;
    if let Some(f) = feats.iter().find(|f| &f.layout != layout) {
        return Err(Error::invalid(format!(
            "inconsistent tap layout across records: {:?} vs {:?}",
            f.layout, layout
        )));
    }
    let parts: Vec<&Matrix> = feats.iter().map(|f| &f.data).collect();
    let pooled = Matrix::vstack(&parts)?;
    log::info!(
        "fitting K={} on {} rows x {} features from {} records",
        cfg.k,
        pooled.rows(),
        pooled.cols(),
        corpus.len()
    );
    let mut model = kmeans_fit(&pooled, &cfg.kmeans())?;
    model.fit_meta.taps = taps;
    Ok(model)
}

/// Explains one record with a fitted model.
pub fn explain(net: &Network, model: &ExplainerModel, ecg: &EcgRecord) -> Result<Explanation> {
    let f = features(net, ecg, &model.fit_meta.taps)?;
    if f.c() != model.c() {
        return Err(Error::Dimension {
            expected: model.c(),
            actual: f.c(),
            context: "collated feature columns vs model centroid dimension",
        });
    }
    Ok(Explanation {
        ecg_id: ecg.id.clone(),
        l: ecg.len(),
        assignment: soft_assign(model, &f.data)?,
    })
}

/// Explains many records in parallel, preserving order.
pub fn explain_all(net: &Network, model: &ExplainerModel, corpus: &[EcgRecord]) -> Result<Vec<Explanation>> {
    par::try_map(corpus, |ecg| explain(net, model, ecg))
}

#[cfg(test)]
mod tests;
