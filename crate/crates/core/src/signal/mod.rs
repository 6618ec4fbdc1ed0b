//! ECG data model, file ingestion, synthetic generation, R-peak detection and
//! wave delineation.

mod beats;
mod delineate;
mod detect;
mod io;
mod synth;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use beats::{stack_beats, BeatWindow};
pub use delineate::delineate;
pub use detect::detect_rpeaks;
pub use io::{load_ecg, save_ecg, EcgFormat};
pub use synth::{synth_corpus, synth_ecg, CorpusSpec, MorphologyClass, SynthSpec, WaveParams};
pub(crate) use synth::splitmix;

/// Number of ECG leads every record carries.
pub const N_LEADS: usize = 12;

/// Index of lead II, used for detection and delineation.
pub const LEAD_II: usize = 1;

/// A 12-lead recording of `L` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub id: String,
    samples: Vec<f32>,
    fs: f64,
    valid: Range<usize>,
    labels: Option<Vec<u8>>,
    target: Option<f64>,
}

impl EcgRecord {
    /// `samples` is `L x 12`, row-major, in millivolts.
    pub fn new(id: impl Into<String>, samples: Vec<f32>, fs: f64) -> Result<Self> {
        if samples.is_empty() || samples.len() % N_LEADS != 0 {
            return Err(Error::invalid(format!(
                "sample buffer of {} values is not a non-empty multiple of {N_LEADS}",
                samples.len()
            )));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::invalid(format!("sampling rate {fs} must be positive")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite sample at t={}, ch={}",
                i / N_LEADS,
                i % N_LEADS
            )));
        }
        let len = samples.len() / N_LEADS;
        Ok(EcgRecord {
            id: id.into(),
            samples,
            fs,
            valid: 0..len,
            labels: None,
            target: None,
        })
    }

    pub fn with_valid_range(mut self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::invalid(format!(
                "valid range {range:?} is not a non-empty sub-range of 0..{}",
                self.len()
            )));
        }
        self.valid = range;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_target(mut self, target: f64) -> Result<Self> {
        if !target.is_finite() {
            return Err(Error::invalid("target must be finite"));
        }
        self.target = Some(target);
        Ok(self)
    }

    /// Number of timesteps `L`.
    pub fn len(&self) -> usize {
        self.samples.len() / N_LEADS
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample(&self, t: usize, lead: usize) -> f32 {
        self.samples[t * N_LEADS + lead]
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.samples[t * N_LEADS..(t + 1) * N_LEADS]
    }

    /// One lead as `f64`.
    pub fn lead(&self, lead: usize) -> Vec<f64> {
        self.samples
            .iter()
            .skip(lead)
            .step_by(N_LEADS)
            .map(|&v| f64::from(v))
            .collect()
    }

    pub fn valid_range(&self) -> Range<usize> {
        self.valid.clone()
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn target(&self) -> Option<f64> {
        self.target
    }

    pub fn ms_to_samples(&self, ms: f64) -> usize {
        (ms * self.fs / 1000.0).round() as usize
    }

    /// Returns a copy with every sample multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> EcgRecord {
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|v| *v *= factor);
        out
    }
}

/// Fiducial points of one beat, as sample indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Beat {
    pub p_on: Option<usize>,
    pub p_peak: Option<usize>,
    pub p_off: Option<usize>,
    pub qrs_on: Option<usize>,
    pub r_peak: usize,
    pub qrs_off: Option<usize>,
    pub t_on: Option<usize>,
    pub t_peak: Option<usize>,
    pub t_off: Option<usize>,
}

impl Beat {
    /// Present points in temporal order.
    pub fn ordered(&self) -> Vec<usize> {
        [
            self.p_on,
            self.p_peak,
            self.p_off,
            self.qrs_on,
            Some(self.r_peak),
            self.qrs_off,
            self.t_on,
            self.t_peak,
            self.t_off,
        ]
        .into_iter()
        .flatten()
        .collect()
    }

    pub fn get(&self, kp: Keypoint) -> Option<usize> {
        match kp {
            Keypoint::POn => self.p_on,
            Keypoint::PPeak => self.p_peak,
            Keypoint::POff => self.p_off,
            Keypoint::QrsOn => self.qrs_on,
            Keypoint::RPeak => Some(self.r_peak),
            Keypoint::QrsOff => self.qrs_off,
            Keypoint::TOn => self.t_on,
            Keypoint::TPeak => self.t_peak,
            Keypoint::TOff => self.t_off,
            Keypoint::Tp => None,
        }
    }
}

/// Point-like and interval keypoints used by the frequency analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keypoint {
    POn,
    PPeak,
    POff,
    QrsOn,
    RPeak,
    QrsOff,
    TOn,
    TPeak,
    TOff,
    Tp,
}

impl Keypoint {
    pub const ALL: [Keypoint; 10] = [
        Keypoint::POn,
        Keypoint::PPeak,
        Keypoint::POff,
        Keypoint::QrsOn,
        Keypoint::RPeak,
        Keypoint::QrsOff,
        Keypoint::TOn,
        Keypoint::TPeak,
        Keypoint::TOff,
        Keypoint::Tp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Keypoint::POn => "p_on",
            Keypoint::PPeak => "p_peak",
            Keypoint::POff => "p_off",
            Keypoint::QrsOn => "qrs_on",
            Keypoint::RPeak => "r_peak",
            Keypoint::QrsOff => "qrs_off",
            Keypoint::TOn => "t_on",
            Keypoint::TPeak => "t_peak",
            Keypoint::TOff => "t_off",
            Keypoint::Tp => "TP",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeypointSet {
    pub r_peaks: Vec<usize>,
    pub beats: Vec<Beat>,
    /// `[start, end)` ranges from a beat's T offset to the next beat's P onset.
    pub tp_intervals: Vec<(usize, usize)>,
}

impl KeypointSet {
    /// Checks ordering, bounds and disjointness; returns a description of the
    /// first violation.
    pub fn check(&self, len: usize) -> std::result::Result<(), String> {
        for (i, beat) in self.beats.iter().enumerate() {
            let pts = beat.ordered();
            if pts.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("beat {i} points not strictly increasing: {pts:?}"));
            }
            if pts.iter().any(|&p| p >= len) {
                return Err(format!("beat {i} has a point outside 0..{len}"));
            }
        }
        for w in self.tp_intervals.windows(2) {
            if w[0].1 > w[1].0 {
                return Err(format!("tp intervals overlap: {:?} {:?}", w[0], w[1]));
            }
        }
        if self
            .tp_intervals
            .iter()
            .any(|&(a, b)| a >= b || b > len)
        {
            return Err("empty or out-of-range tp interval".into());
        }
        Ok(())
    }

    /// Sample indices of one point keypoint over all beats.
    pub fn occurrences(&self, kp: Keypoint) -> Vec<usize> {
        self.beats.iter().filter_map(|b| b.get(kp)).collect()
    }

    pub(crate) fn assemble_tp(beats: &[Beat]) -> Vec<(usize, usize)> {
        beats
            .windows(2)
            .filter_map(|w| match (w[0].t_off, w[1].p_on) {
                (Some(a), Some(b)) if a < b => Some((a, b)),
                _ => None,
            })
            .collect()
    }
}
