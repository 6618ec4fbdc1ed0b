//! Fitted centroids, soft assignment and the `TLXC` container.
//!
//! Layout: magic `TLXC`, u32 version, u32 K, u32 C, f64 tau, f64 inertia,
//! then `K x C` little-endian `f32` centroids. Fit metadata lives in a JSON
//! sidecar next to the file (`<name>.json` appended to the full file name).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{read_file, to_u32, write_file, Reader, Writer};
use crate::matrix::sq_dist;
use crate::{Error, Matrix, Result};

const MAGIC: &[u8; 4] = b"TLXC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitMeta {
    pub n_samples: usize,
    pub n_iters: usize,
    pub seed: u64,
    /// Layers whose collated activations the centroids live in.
    #[serde(default)]
    pub taps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainerModel {
    centroids: Matrix,
    tau: f64,
    inertia: f64,
    pub fit_meta: FitMeta,
}

impl ExplainerModel {
    pub fn new(centroids: Matrix, tau: f64, inertia: f64, fit_meta: FitMeta) -> Result<Self> {
        if centroids.rows() < 2 {
            return Err(Error::Config(format!("need K >= 2 centroids, got {}", centroids.rows())));
        }
        if !centroids.is_finite() {
            return Err(Error::Numeric("centroids must be finite".into()));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive and finite, got {tau}")));
        }
        if !(inertia >= 0.0) {
            return Err(Error::Numeric(format!("inertia must be non-negative, got {inertia}")));
        }
        Ok(ExplainerModel {
            centroids,
            tau,
            inertia,
            fit_meta,
        })
    }

    pub fn centroids(&self) -> &Matrix {
        &self.centroids
    }

    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn c(&self) -> usize {
        self.centroids.cols()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    /// Same centroids with another temperature.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        ExplainerModel::new(self.centroids.clone(), tau, self.inertia, self.fit_meta.clone())
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u32(to_u32(self.k(), "K")?);
        w.u32(to_u32(self.c(), "C")?);
        w.f64(self.tau);
        w.f64(self.inertia);
        let f: Vec<f32> = self.centroids.as_slice().iter().map(|&v| v as f32).collect();
        w.f32s(&f);
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path, fit_meta: FitMeta) -> Result<Self> {
        let mut r = Reader::new(bytes, path);
        r.magic(MAGIC)?;
        let at = r.pos();
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.error(at, format!("unsupported version {version}")));
        }
        let at = r.pos();
        let k = r.u32()? as usize;
        let c = r.u32()? as usize;
        if k < 2 || c == 0 {
            return Err(r.error(at, format!("invalid dimensions K={k}, C={c}")));
        }
        let at = r.pos();
        let tau = r.f64()?;
        let inertia = r.f64()?;
        let n = k
            .checked_mul(c)
            .ok_or_else(|| r.error(at, "centroid count overflows"))?;
        let data = r.f32s(n)?.into_iter().map(f64::from).collect();
        r.finish()?;
        ExplainerModel::new(Matrix::from_vec(k, c, data)?, tau, inertia, fit_meta)
            .map_err(|e| r.error(at, e.to_string()))
    }

    /// Writes the binary model and its JSON sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)?;
        let meta = serde_json::to_vec_pretty(&self.fit_meta)?;
        write_file(&Self::sidecar_path(path), &meta)
    }

    /// Reads a model; a missing sidecar yields default metadata.
    pub fn load(path: &Path) -> Result<Self> {
        let side = Self::sidecar_path(path);
        let meta = if side.exists() {
            serde_json::from_slice(&read_file(&side)?).map_err(|e| Error::Ingest {
                path: side.clone(),
                location: crate::error::Location::Line(e.line()),
                message: e.to_string(),
            })?
        } else {
            FitMeta::default()
        };
        Self::from_bytes(&read_file(path)?, path, meta)
    }
}

/// Soft assignment of `D` feature rows to `K` centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `D x K`, rows sum to one.
    pub probs: Matrix,
    pub labels: Vec<usize>,
    /// Natural-log entropy per row.
    pub entropy: Vec<f64>,
}

impl Assignment {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.probs.cols()
    }

    /// Entropy divided by `ln K`, in `[0, 1]`.
    pub fn normalized_entropy(&self) -> Vec<f64> {
        let max = (self.k() as f64).ln();
        self.entropy.iter().map(|u| (u / max).clamp(0.0, 1.0)).collect()
    }
}

/// `-sum p ln p` with `0 ln 0 = 0`.
pub fn entropy(row: &[f64]) -> f64 {
    -row.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Softmax over negative squared distances divided by the model temperature.
pub fn soft_assign(model: &ExplainerModel, data: &Matrix) -> Result<Assignment> {
    if data.cols() != model.c() {
        return Err(Error::Dimension {
            expected: model.c(),
            actual: data.cols(),
            context: "feature columns vs centroid dimension",
        });
    }
    let k = model.k();
    let mut probs = Matrix::zeros(data.rows(), k);
    let mut labels = Vec::with_capacity(data.rows());
    let mut ent = Vec::with_capacity(data.rows());
    let mut logits = vec![0.0; k];
    for (t, x) in data.iter_rows().enumerate() {
        for (j, c) in model.centroids.iter_rows().enumerate() {
            logits[j] = -sq_dist(x, c) / model.tau;
        }
        let (mut arg, mut max) = (0, f64::NEG_INFINITY);
        for (j, &l) in logits.iter().enumerate() {
            if l > max {
                arg = j;
                max = l;
            }
        }
        if !max.is_finite() {
            return Err(Error::Numeric(format!("non-finite distance at row {t}")));
        }
        let row = probs.row_mut(t);
        let mut z = 0.0;
        for (p, &l) in row.iter_mut().zip(&logits) {
            *p = (l - max).exp();
            z += *p;
        }
        row.iter_mut().for_each(|p| *p /= z);
        labels.push(arg);
        ent.push(entropy(row).clamp(0.0, (k as f64).ln()));
    }
    Ok(Assignment {
        probs,
        labels,
        entropy: ent,
    })
}
