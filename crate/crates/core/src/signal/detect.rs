//! Pan-Tompkins style R-peak detection on lead II.

use super::{EcgRecord, LEAD_II};

const REFRACTORY_MS: f64 = 200.0;
const MIN_SIGNAL_MS: f64 = 500.0;

/// Centred moving average with an odd window, edges handled by shrinking.
pub(crate) fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let half = width.max(1) / 2;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix[prefix.len() - 1] + v);
    }
    (0..x.len())
        .map(|i| {
            let a = i.saturating_sub(half);
            let b = (i + half + 1).min(x.len());
            (prefix[b] - prefix[a]) / (b - a) as f64
        })
        .collect()
}

fn odd(n: f64) -> usize {
    let n = n.round().max(1.0) as usize;
    n | 1
}

/// Band-pass (about 5-15 Hz) from cascaded moving averages.
pub(crate) fn bandpass(x: &[f64], fs: f64) -> Vec<f64> {
    let lp_w = odd(fs / 30.0);
    let lp = moving_average(&moving_average(x, lp_w), lp_w);
    let trend = moving_average(&lp, odd(fs / 5.0));
    lp.iter().zip(&trend).map(|(a, b)| a - b).collect()
}

/// Five-point derivative, in units per second.
pub(crate) fn derivative(x: &[f64], fs: f64) -> Vec<f64> {
    let n = x.len();
    let at = |i: isize| x[i.clamp(0, n as isize - 1) as usize];
    (0..n as isize)
        .map(|i| (-at(i - 2) - 2.0 * at(i - 1) + 2.0 * at(i + 1) + at(i + 2)) * fs / 8.0)
        .collect()
}

/// Returns sorted R-peak sample indices inside the record's valid range.
pub fn detect_rpeaks(ecg: &EcgRecord) -> Vec<usize> {
    let fs = ecg.fs();
    let valid = ecg.valid_range();
    let lead = ecg.lead(LEAD_II);
    let x = &lead[valid.clone()];
    if (x.len() as f64) < MIN_SIGNAL_MS * fs / 1000.0 {
        return Vec::new();
    }

    let band = bandpass(x, fs);
    let energy: Vec<f64> = derivative(&band, fs).iter().map(|d| d * d).collect();
    let mwi = moving_average(&energy, odd(0.150 * fs));
    let global_max = mwi.iter().cloned().fold(0.0, f64::max);
    if !(global_max > 1e-12) {
        return Vec::new();
    }

    let candidates: Vec<usize> = (1..mwi.len().saturating_sub(1))
        .filter(|&i| mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1] && mwi[i] > 1e-3 * global_max)
        .collect();

    let refractory = (REFRACTORY_MS * fs / 1000.0).round() as usize;
    let learn = (2.0 * fs) as usize;
    let head_max = mwi[..learn.min(mwi.len())].iter().cloned().fold(0.0, f64::max);
    let mut spki = 0.25 * head_max;
    let mut npki = 0.5 * mwi[..learn.min(mwi.len())].iter().sum::<f64>() / learn.min(mwi.len()) as f64;
    let mut peaks: Vec<usize> = Vec::new();
    let mut rejected: Vec<usize> = Vec::new();
    for &c in &candidates {
        let threshold = npki + 0.25 * (spki - npki);
        let v = mwi[c];
        if v > threshold {
            match peaks.last() {
                Some(&last) if c - last < refractory => {
                    if v > mwi[last] {
                        *peaks.last_mut().unwrap() = c;
                    }
                }
                _ => peaks.push(c),
            }
            spki = 0.125 * v + 0.875 * spki;
        } else {
            npki = 0.125 * v + 0.875 * npki;
            rejected.push(c);
        }

        // Search back over a long gap for the largest rejected candidate.
        if peaks.len() >= 3 {
            let rr: Vec<usize> = peaks.windows(2).map(|w| w[1] - w[0]).collect();
            let mean_rr = rr.iter().sum::<usize>() as f64 / rr.len() as f64;
            let (a, b) = (peaks[peaks.len() - 2], peaks[peaks.len() - 1]);
            if (b - a) as f64 > 1.66 * mean_rr {
                let th2 = 0.5 * (npki + 0.25 * (spki - npki));
                if let Some(&best) = rejected
                    .iter()
                    .filter(|&&r| r > a + refractory && r + refractory < b && mwi[r] > th2)
                    .max_by(|&&p, &&q| mwi[p].total_cmp(&mwi[q]))
                {
                    let n = peaks.len();
                    peaks.insert(n - 1, best);
                }
            }
        }
    }

    // Refine to the lead II maximum near each energy peak.
    let search = (0.075 * fs).round() as usize;
    let mut refined: Vec<usize> = peaks
        .iter()
        .map(|&p| {
            let a = p.saturating_sub(search);
            let b = (p + search + 1).min(x.len());
            let local = (a..b).max_by(|&i, &j| x[i].total_cmp(&x[j])).unwrap_or(p);
            local + valid.start
        })
        .collect();
    refined.sort_unstable();
    let mut out: Vec<usize> = Vec::with_capacity(refined.len());
    for r in refined {
        match out.last() {
            Some(&last) if r - last < refractory => {
                if lead[r] > lead[last] {
                    *out.last_mut().unwrap() = r;
                }
            }
            _ => out.push(r),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synth_ecg, SynthSpec, N_LEADS};

    #[test]
    fn eight_beats_are_found_within_20ms() {
        let spec = SynthSpec::default();
        let (rec, kp) = synth_ecg(&spec).unwrap();
        let peaks = detect_rpeaks(&rec);
        assert_eq!(peaks.len(), 8, "{peaks:?}");
        let tol = rec.ms_to_samples(20.0) as i64;
        for (p, t) in peaks.iter().zip(&kp.r_peaks) {
            assert!((*p as i64 - *t as i64).abs() <= tol);
        }
    }

    #[test]
    fn zero_signal_has_no_peaks() {
        let rec = EcgRecord::new("z", vec![0.0; 5000 * N_LEADS], 500.0).unwrap();
        assert!(detect_rpeaks(&rec).is_empty());
    }

    #[test]
    fn short_signal_returns_empty() {
        let rec = EcgRecord::new("s", vec![0.5; 100 * N_LEADS], 500.0).unwrap();
        assert!(detect_rpeaks(&rec).is_empty());
    }

    #[test]
    fn single_beat_gives_one_peak() {
        let (rec, _) = synth_ecg(&SynthSpec { n_beats: 1, ..SynthSpec::default() }).unwrap();
        assert_eq!(detect_rpeaks(&rec).len(), 1);
    }

    #[test]
    fn peaks_stay_inside_valid_range_with_padding() {
        let spec = SynthSpec { pad_ms: 300.0, noise_std_mv: 0.03, seed: 3, ..SynthSpec::default() };
        let (rec, kp) = synth_ecg(&spec).unwrap();
        let peaks = detect_rpeaks(&rec);
        assert_eq!(peaks.len(), kp.r_peaks.len());
        assert!(peaks.iter().all(|p| rec.valid_range().contains(p)));
    }
}
