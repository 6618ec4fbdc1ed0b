//! Run configuration: one JSON file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tlx_core::analytics::{AblationConfig, CvConfig, FrequencyConfig};
use tlx_core::cluster::Temperature;
use tlx_core::explain::ExplainerConfig;
use tlx_core::net::{ChannelMerge, ContrastConfig, ReferenceArch};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub bundle: Option<PathBuf>,
    pub explainer: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    /// Milliseconds before and after each R peak in the stacked-beat plot.
    pub window_ms: (f64, f64),
    /// Cluster colours; empty selects the built-in 20-colour palette.
    pub colormap: Vec<String>,
    /// Fade bands by normalized entropy; otherwise bands are opaque.
    pub opacity_from_entropy: bool,
    /// Lead drawn as the foreground trace.
    pub lead: usize,
}

impl Default for PlotConfig {
    fn default() -> Self {
        PlotConfig {
            window_ms: (250.0, 450.0),
            colormap: Vec::new(),
            opacity_from_entropy: true,
            lead: tlx_core::signal::LEAD_II,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_records: usize,
    pub fs: f64,
    pub noise_std_mv: f64,
    pub age_range: Option<(f64, f64)>,
    /// Architecture of the toy bundle written next to the corpus.
    pub arch: ReferenceArch,
    /// Ridge penalty of the closed-form head fit.
    pub ridge: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_records: 500,
            fs: 250.0,
            noise_std_mv: 0.02,
            age_range: Some((20.0, 80.0)),
            arch: ReferenceArch::compact(),
            ridge: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcamConfig {
    /// Head output to explain; defaults to the record's top-scoring output.
    pub target: Option<usize>,
    /// Layer to take gradients at; defaults to the first tap.
    pub tap: Option<String>,
    pub merge: ChannelMerge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub alpha: f64,
    /// Names for the head outputs; missing names become `y<i>`.
    pub label_names: Vec<String>,
    /// Cluster groups whose summed proportion is regressed on the target.
    pub age_groups: Vec<Vec<usize>>,
    /// Compare Grad-CAM maps with uncertainty by phase.
    pub gradcam: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            alpha: 0.05,
            label_names: Vec::new(),
            age_groups: Vec::new(),
            gradcam: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. When set it replaces every component seed.
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub paths: Paths,
    /// Shorthands over `explainer`.
    pub taps: Vec<String>,
    pub k: Option<usize>,
    pub tau: Option<f64>,
    pub include_probs: bool,
    pub explainer: ExplainerConfig,
    pub frequency: FrequencyConfig,
    pub contrast: ContrastConfig,
    pub cv: CvConfig,
    pub ablation: AblationConfig,
    pub synth: SynthConfig,
    pub gradcam: GradcamConfig,
    pub analysis: AnalysisConfig,
    pub plot: PlotConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            jobs: None,
            paths: Paths::default(),
            taps: Vec::new(),
            k: None,
            tau: None,
            include_probs: true,
            explainer: ExplainerConfig::default(),
            frequency: FrequencyConfig::default(),
            contrast: ContrastConfig::default(),
            cv: CvConfig::default(),
            ablation: AblationConfig::default(),
            synth: SynthConfig::default(),
            gradcam: GradcamConfig::default(),
            analysis: AnalysisConfig::default(),
            plot: PlotConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Folds the shorthands and the master seed into the component configs,
    /// then checks the result.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if let Some(k) = self.k {
            self.explainer.k = k;
            self.ablation.k_for_sizes = k;
        }
        if !self.taps.is_empty() {
            self.explainer.taps = self.taps.clone();
            self.ablation.explainer.taps = self.taps.clone();
        }
        if let Some(tau) = self.tau {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(CliError::Config(format!("tau must be positive and finite, got {tau}")));
            }
            self.explainer.temperature = Temperature::Fixed(tau);
            self.ablation.explainer.temperature = Temperature::Fixed(tau);
        }
        if let Some(seed) = self.seed {
            self.explainer.seed = seed;
            self.ablation.explainer.seed = seed;
            self.ablation.cv.seed = seed;
            self.ablation.seed = seed;
            self.cv.seed = seed;
            self.synth.seed = seed;
        }
        if self.explainer.k < 2 {
            return Err(CliError::Config(format!("K must be at least 2, got {}", self.explainer.k)));
        }
        if self.jobs == Some(0) {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        if !(self.analysis.alpha > 0.0 && self.analysis.alpha < 1.0) {
            return Err(CliError::Config(format!("alpha must lie in (0, 1), got {}", self.analysis.alpha)));
        }
        let (before, after) = self.plot.window_ms;
        if !(before >= 0.0 && after > 0.0) {
            return Err(CliError::Config("plot window must be non-negative before and positive after".into()));
        }
        if self.plot.lead >= tlx_core::signal::N_LEADS {
            return Err(CliError::Config(format!("plot lead {} out of range", self.plot.lead)));
        }
        Ok(self)
    }

    pub fn label_name(&self, i: usize) -> String {
        self.analysis.label_names.get(i).cloned().unwrap_or_else(|| format!("y{i}"))
    }
}

/// Returns the flag value, else the config value, and checks that it exists.
pub fn existing(flag: Option<PathBuf>, config: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    let path = flag
        .or_else(|| config.clone())
        .ok_or_else(|| CliError::Config(format!("no {what} path given")))?;
    if !path.exists() {
        return Err(CliError::Config(format!("{what} path {} does not exist", path.display())));
    }
    Ok(path)
}

pub fn out_dir(flag: Option<PathBuf>, config: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    let path = flag
        .or_else(|| config.clone())
        .ok_or_else(|| CliError::Config("no output directory given (--out)".into()))?;
    std::fs::create_dir_all(&path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    Ok(path)
}
