//! Rule-based wave delineation on lead II in fixed windows around each R peak.
//!
//! P and T: the largest interior local extremum of the baseline-corrected
//! signal in the wave's window is the peak; onset and offset are where the
//! signal falls to 10% of the peak height. QRS onset and offset are the
//! outermost points within +-100 ms where the slope exceeds 5% of the
//! largest slope in that window.

use super::detect::derivative;
use super::{Beat, EcgRecord, KeypointSet, LEAD_II};

const P_WINDOW_MS: (f64, f64) = (-250.0, -60.0);
const T_WINDOW_MS: (f64, f64) = (80.0, 450.0);
const QRS_HALF_WINDOW_MS: f64 = 100.0;
const EDGE_SEARCH_MS: f64 = 120.0;
const MIN_WAVE_MV: f64 = 0.04;
const LEVEL: f64 = 0.10;
const SLOPE_LEVEL: f64 = 0.05;

struct Ctx<'a> {
    x: &'a [f64],
    slope: Vec<f64>,
    fs: f64,
    lo: usize,
    hi: usize,
}

impl Ctx<'_> {
    fn offset(&self, r: usize, ms: f64) -> Option<usize> {
        let v = r as f64 + ms * self.fs / 1000.0;
        let v = v.round();
        (v >= self.lo as f64 && v < self.hi as f64).then_some(v as usize)
    }

    fn span(&self, ms: f64) -> usize {
        (ms * self.fs / 1000.0).round() as usize
    }

    fn baseline(&self, r: usize) -> f64 {
        let a = r.saturating_sub(self.span(400.0)).max(self.lo);
        let b = (r + self.span(600.0)).min(self.hi);
        let mut v: Vec<f64> = self.x[a..b].to_vec();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    /// Peak, onset and offset of a P or T wave between `a` and `b`.
    fn wave(&self, a: usize, b: usize, base: f64) -> Option<(usize, usize, usize)> {
        if b < a + 3 {
            return None;
        }
        let y = |i: usize| self.x[i] - base;
        let peak = (a + 1..b - 1)
            .filter(|&i| {
                let (l, c, r) = (y(i - 1), y(i), y(i + 1));
                (c > l && c >= r) || (c < l && c <= r)
            })
            .max_by(|&i, &j| y(i).abs().total_cmp(&y(j).abs()))?;
        let height = y(peak);
        if height.abs() < MIN_WAVE_MV {
            return None;
        }
        let level = LEVEL * height.abs();
        let reach = self.span(EDGE_SEARCH_MS);
        let below = |i: usize| y(i) * height.signum() < level;
        let on = (peak.saturating_sub(reach).max(self.lo)..peak).rev().find(|&i| below(i))?;
        let off = (peak + 1..(peak + reach + 1).min(self.hi)).find(|&i| below(i))?;
        Some((on, peak, off))
    }

    fn qrs(&self, r: usize) -> (Option<usize>, Option<usize>) {
        let a = r.saturating_sub(self.span(QRS_HALF_WINDOW_MS)).max(self.lo);
        let b = (r + self.span(QRS_HALF_WINDOW_MS) + 1).min(self.hi);
        let max_slope = self.slope[a..b].iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if max_slope == 0.0 {
            return (None, None);
        }
        let th = SLOPE_LEVEL * max_slope;
        let on = (a..r).find(|&i| self.slope[i].abs() > th).filter(|&i| i > a);
        let off = (r + 1..b).rev().find(|&i| self.slope[i].abs() > th).filter(|&i| i + 1 < b);
        (on, off)
    }
}

pub fn delineate(ecg: &EcgRecord, r_peaks: &[usize]) -> KeypointSet {
    let x = ecg.lead(LEAD_II);
    let valid = ecg.valid_range();
    let ctx = Ctx {
        slope: derivative(&x, ecg.fs()),
        x: &x,
        fs: ecg.fs(),
        lo: valid.start,
        hi: valid.end,
    };

    let mut beats = Vec::with_capacity(r_peaks.len());
    for (k, &r) in r_peaks.iter().enumerate() {
        let base = ctx.baseline(r);
        let mut beat = Beat {
            r_peak: r,
            ..Beat::default()
        };

        let (qrs_on, qrs_off) = ctx.qrs(r);
        beat.qrs_on = qrs_on;
        beat.qrs_off = qrs_off;

        // Keep the search windows clear of the neighbouring beats' QRS.
        let prev_limit = k.checked_sub(1).map(|j| r_peaks[j] + ctx.span(QRS_HALF_WINDOW_MS));
        let next_limit = r_peaks.get(k + 1).map(|&n| n.saturating_sub(ctx.span(250.0)));

        if let (Some(a), Some(b)) = (ctx.offset(r, P_WINDOW_MS.0), ctx.offset(r, P_WINDOW_MS.1)) {
            let a = prev_limit.map_or(a, |p| a.max(p));
            let b = qrs_on.map_or(b, |q| b.min(q));
            if let Some((on, peak, off)) = ctx.wave(a, b, base) {
                beat.p_on = Some(on);
                beat.p_peak = Some(peak);
                beat.p_off = Some(off);
            }
        }
        let t_a = ctx.offset(r, T_WINDOW_MS.0);
        let t_b = ctx.offset(r, T_WINDOW_MS.1).or(Some(ctx.hi - 1));
        if let (Some(a), Some(b)) = (t_a, t_b) {
            let a = qrs_off.map_or(a, |q| a.max(q));
            let b = next_limit.map_or(b, |n| b.min(n));
            if let Some((on, peak, off)) = ctx.wave(a, b, base) {
                beat.t_on = Some(on);
                beat.t_peak = Some(peak);
                beat.t_off = Some(off);
            }
        }
        enforce_order(&mut beat);
        beats.push(beat);
    }

    KeypointSet {
        r_peaks: r_peaks.to_vec(),
        tp_intervals: KeypointSet::assemble_tp(&beats),
        beats,
    }
}

/// Drops points that would break the strict temporal order.
fn enforce_order(b: &mut Beat) {
    if !matches!((b.p_on, b.p_peak, b.p_off), (Some(x), Some(y), Some(z)) if x < y && y < z) {
        (b.p_on, b.p_peak, b.p_off) = (None, None, None);
    }
    if b.qrs_on.is_some_and(|q| q >= b.r_peak) {
        b.qrs_on = None;
    }
    if b.qrs_off.is_some_and(|q| q <= b.r_peak) {
        b.qrs_off = None;
    }
    let qrs_start = b.qrs_on.unwrap_or(b.r_peak);
    if b.p_off.is_some_and(|p| p >= qrs_start) {
        (b.p_on, b.p_peak, b.p_off) = (None, None, None);
    }
    if !matches!((b.t_on, b.t_peak, b.t_off), (Some(x), Some(y), Some(z)) if x < y && y < z) {
        (b.t_on, b.t_peak, b.t_off) = (None, None, None);
    }
    let qrs_end = b.qrs_off.unwrap_or(b.r_peak);
    if b.t_on.is_some_and(|t| t <= qrs_end) {
        (b.t_on, b.t_peak, b.t_off) = (None, None, None);
    }
}
