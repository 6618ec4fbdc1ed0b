//! 1D Grad-CAM and the log-standardize-sigmoid contrast transform.

use serde::{Deserialize, Serialize};

use super::engine::{sigmoid, Network};
use crate::signal::EcgRecord;
use crate::Result;

/// How per-channel weighted maps are merged into one saliency trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMerge {
    /// Elementwise maximum over channels.
    #[default]
    Max,
    /// Classic Grad-CAM weighted sum.
    Sum,
}

/// Channel weights are the time-averaged gradients of logit `target`; the
/// weighted activation maps are merged over channels and rectified.
pub fn gradcam(net: &Network, ecg: &EcgRecord, target: usize, tap: &str, merge: ChannelMerge) -> Result<Vec<f64>> {
    let (act, grad) = net.tap_gradient(ecg, tap, target)?;
    let (d, c) = (act.d(), act.c());
    let weights: Vec<f64> = (0..c)
        .map(|ch| (0..d).map(|t| grad.get(t, ch)).sum::<f64>() / d as f64)
        .collect();
    Ok((0..d)
        .map(|t| {
            let row = act.data.row(t).iter().zip(&weights).map(|(a, w)| a * w);
            let merged = match merge {
                ChannelMerge::Max => row.fold(f64::NEG_INFINITY, f64::max),
                ChannelMerge::Sum => row.sum(),
            };
            merged.max(0.0)
        })
        .collect())
}

/// Floor applied before the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureOrientation {
    /// `sigmoid(z * temperature)`.
    #[default]
    Sharpen,
    /// `sigmoid(z / temperature)`.
    Flatten,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastConfig {
    pub temperature: f64,
    pub orientation: TemperatureOrientation,
}

impl Default for ContrastConfig {
    fn default() -> Self {
        ContrastConfig {
            temperature: 10.0,
            orientation: TemperatureOrientation::Sharpen,
        }
    }
}

/// `sigmoid(standardize(log(max(map, floor))) * T^{+-1})`. A map with zero
/// spread after the log maps to a constant 0.5.
pub fn contrast_transform(map: &[f64], cfg: &ContrastConfig) -> Vec<f64> {
    if map.is_empty() {
        return Vec::new();
    }
    let logs: Vec<f64> = map.iter().map(|&v| v.max(LOG_FLOOR).ln()).collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 1e-12 * mean.abs().max(1.0)) {
        return vec![0.5; map.len()];
    }
    let gain = match cfg.orientation {
        TemperatureOrientation::Sharpen => cfg.temperature,
        TemperatureOrientation::Flatten => 1.0 / cfg.temperature,
    };
    logs.iter().map(|v| sigmoid((v - mean) / sd * gain)).collect()
}
