use super::{EcgRecord, N_LEADS};

/// A fixed-length window of all leads around one R peak.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatWindow {
    pub r_peak: usize,
    /// First sample index of the window in the record.
    pub start: usize,
    /// `len x 12`, row-major.
    pub samples: Vec<f32>,
}

impl BeatWindow {
    pub fn len(&self) -> usize {
        self.samples.len() / N_LEADS
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Window length in samples for `(before_ms, after_ms)`.
pub fn window_len(fs: f64, window_ms: (f64, f64)) -> usize {
    ((window_ms.0 + window_ms.1) * fs / 1000.0).round() as usize
}

/// Cuts `[r - before, r - before + len)` around each peak; windows that would
/// cross the record edges are dropped.
pub fn stack_beats(ecg: &EcgRecord, r_peaks: &[usize], window_ms: (f64, f64)) -> Vec<BeatWindow> {
    let before = (window_ms.0 * ecg.fs() / 1000.0).round() as usize;
    let len = window_len(ecg.fs(), window_ms);
    r_peaks
        .iter()
        .filter(|&&r| r >= before && r - before + len <= ecg.len())
        .map(|&r| {
            let start = r - before;
            BeatWindow {
                r_peak: r,
                start,
                samples: ecg.samples()[start * N_LEADS..(start + len) * N_LEADS].to_vec(),
            }
        })
        .collect()
}
