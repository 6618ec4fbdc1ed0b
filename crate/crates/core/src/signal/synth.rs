//! Sum-of-Gaussians synthetic ECG generator.
//!
//! Each beat is five Gaussian bumps (P, Q, R, S, T) on every lead, scaled by a
//! per-lead gain. Morphology classes perturb the bump parameters. Keypoints are
//! returned from the generator parameters: peaks at bump centres, onsets and
//! offsets where a bump falls to 10% of its height.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Beat, EcgRecord, KeypointSet, N_LEADS};
use crate::{par, Error, Result};

/// `sqrt(2 ln 10)`: a Gaussian is at 10% of its peak this many sigmas out.
const TEN_PERCENT_WIDTH: f64 = 2.145_966_026_289_347;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorphologyClass {
    Baseline = 0,
    WideQrs = 1,
    ElevatedSt = 2,
    InvertedT = 3,
}

impl MorphologyClass {
    pub const COUNT: usize = 4;

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Self::Baseline),
            1 => Ok(Self::WideQrs),
            2 => Ok(Self::ElevatedSt),
            3 => Ok(Self::InvertedT),
            _ => Err(Error::invalid(format!("unknown morphology class {i}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::WideQrs => "wide_qrs",
            Self::ElevatedSt => "elevated_st",
            Self::InvertedT => "inverted_t",
        }
    }
}

/// One Gaussian bump: centre relative to the R peak, width and height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub offset_ms: f64,
    pub sigma_ms: f64,
    pub amp_mv: f64,
}

impl Bump {
    const fn new(offset_ms: f64, sigma_ms: f64, amp_mv: f64) -> Self {
        Bump {
            offset_ms,
            sigma_ms,
            amp_mv,
        }
    }

    fn value(&self, dt_ms: f64) -> f64 {
        let u = (dt_ms - self.offset_ms) / self.sigma_ms;
        self.amp_mv * (-0.5 * u * u).exp()
    }

    fn onset_ms(&self) -> f64 {
        self.offset_ms - TEN_PERCENT_WIDTH * self.sigma_ms
    }

    fn offset_end_ms(&self) -> f64 {
        self.offset_ms + TEN_PERCENT_WIDTH * self.sigma_ms
    }
}

/// Bump parameters of the reference lead (lead II).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveParams {
    pub p: Bump,
    pub q: Bump,
    pub r: Bump,
    pub s: Bump,
    pub t: Bump,
}

impl WaveParams {
    pub fn for_class(class: MorphologyClass) -> Self {
        let base = WaveParams {
            p: Bump::new(-200.0, 22.0, 0.15),
            q: Bump::new(-28.0, 8.0, -0.12),
            r: Bump::new(0.0, 9.0, 1.1),
            s: Bump::new(28.0, 9.0, -0.3),
            t: Bump::new(300.0, 45.0, 0.32),
        };
        match class {
            MorphologyClass::Baseline => base,
            MorphologyClass::WideQrs => WaveParams {
                q: Bump::new(-50.0, 16.0, -0.12),
                r: Bump::new(0.0, 18.0, 0.95),
                s: Bump::new(50.0, 18.0, -0.3),
                ..base
            },
            MorphologyClass::ElevatedSt => WaveParams {
                t: Bump::new(260.0, 60.0, 0.7),
                ..base
            },
            MorphologyClass::InvertedT => WaveParams {
                t: Bump::new(300.0, 45.0, -0.3),
                ..base
            },
        }
    }

    fn bumps(&self) -> [(Bump, Wave); 5] {
        [
            (self.p, Wave::P),
            (self.q, Wave::Qrs),
            (self.r, Wave::Qrs),
            (self.s, Wave::Qrs),
            (self.t, Wave::T),
        ]
    }

    /// Noise-free lead values at `dt_ms` from an R peak.
    pub fn lead_values(&self, dt_ms: f64) -> [f64; N_LEADS] {
        let mut out = [0.0; N_LEADS];
        for (bump, wave) in self.bumps() {
            let v = bump.value(dt_ms);
            for (lead, o) in out.iter_mut().enumerate() {
                *o += v * LEAD_GAINS[lead][wave as usize];
            }
        }
        out
    }

    fn jittered(&self, rng: &mut ChaCha8Rng, amount: f64) -> Self {
        if amount == 0.0 {
            return *self;
        }
        let mut jit = |b: Bump| {
            let n: [f64; 3] = [
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            ];
            Bump {
                offset_ms: b.offset_ms + amount * 10.0 * n[0],
                sigma_ms: b.sigma_ms * (1.0 + 0.5 * amount * n[1]).clamp(0.7, 1.3),
                amp_mv: b.amp_mv * (1.0 + amount * n[2]).clamp(0.6, 1.4),
            }
        };
        WaveParams {
            p: jit(self.p),
            q: jit(self.q),
            r: jit(self.r),
            s: jit(self.s),
            t: jit(self.t),
        }
    }

    fn with_age(mut self, age: f64) -> Self {
        let a = (age - 50.0) / 50.0;
        self.r.amp_mv *= 1.0 - 0.25 * a;
        self.p.offset_ms -= 20.0 * a;
        self.t.amp_mv *= 1.0 - 0.3 * a;
        self
    }
}

#[derive(Clone, Copy)]
enum Wave {
    P = 0,
    Qrs = 1,
    T = 2,
}

/// Lead gains for (P, QRS, T), leads I, II, III, aVR, aVL, aVF, V1..V6.
const LEAD_GAINS: [[f64; 3]; N_LEADS] = [
    [0.6, 0.7, 0.6],
    [1.0, 1.0, 1.0],
    [0.4, 0.3, 0.4],
    [-0.8, -0.85, -0.8],
    [0.1, 0.2, 0.1],
    [0.7, 0.65, 0.7],
    [0.3, -0.5, -0.2],
    [0.3, -0.3, 0.6],
    [0.3, 0.4, 0.8],
    [0.3, 1.2, 0.9],
    [0.3, 1.1, 0.8],
    [0.3, 0.9, 0.6],
];

/// Parameters of one synthetic record.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub fs: f64,
    pub n_beats: usize,
    pub rr_ms: f64,
    pub class_id: usize,
    pub seed: u64,
    /// Standard deviation of beat-to-beat RR variation.
    pub rr_jitter_ms: f64,
    /// Relative per-record jitter of bump parameters.
    pub variability: f64,
    pub noise_std_mv: f64,
    /// Amplitude of a sinusoidal baseline wander.
    pub wander_mv: f64,
    /// Multiplier on the P-wave height; 0 removes P waves.
    pub p_scale: f64,
    /// Position of the first R peak after the leading padding.
    pub first_beat_ms: f64,
    /// Zero padding added at both ends; recorded in `valid_range`.
    pub pad_ms: f64,
    /// Fixed total length in samples; beats past the end are dropped.
    pub length: Option<usize>,
    /// Age-like target. Shifts R height, PR interval and T height.
    pub age: Option<f64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            fs: 500.0,
            n_beats: 8,
            rr_ms: 800.0,
            class_id: 0,
            seed: 0,
            rr_jitter_ms: 0.0,
            variability: 0.0,
            noise_std_mv: 0.0,
            wander_mv: 0.0,
            p_scale: 1.0,
            first_beat_ms: 400.0,
            pad_ms: 0.0,
            length: None,
            age: None,
        }
    }
}

impl SynthSpec {
    /// Beat parameters after class, age and variability perturbations.
    pub fn wave_params(&self) -> Result<WaveParams> {
        let class = MorphologyClass::from_index(self.class_id)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut params = WaveParams::for_class(class);
        if let Some(age) = self.age {
            params = params.with_age(age);
        }
        params = params.jittered(&mut rng, self.variability);
        params.p.amp_mv *= self.p_scale;
        Ok(params)
    }
}

pub fn synth_ecg(spec: &SynthSpec) -> Result<(EcgRecord, KeypointSet)> {
    if spec.fs < 100.0 {
        return Err(Error::invalid(format!("fs {} must be at least 100 Hz", spec.fs)));
    }
    if spec.n_beats == 0 {
        return Err(Error::invalid("n_beats must be at least 1"));
    }
    if !(spec.rr_ms > 0.0) {
        return Err(Error::invalid("rr_ms must be positive"));
    }
    let params = spec.wave_params()?;
    // Separate stream from the one the parameter jitter consumed.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);

    let ms = 1000.0 / spec.fs;
    let to_idx = |t_ms: f64| (t_ms / ms).round();
    let pad = to_idx(spec.pad_ms) as usize;

    let mut r_times = Vec::with_capacity(spec.n_beats);
    let mut t = spec.pad_ms + spec.first_beat_ms;
    for _ in 0..spec.n_beats {
        r_times.push(t);
        let jitter: f64 = if spec.rr_jitter_ms > 0.0 {
            Normal::new(0.0, spec.rr_jitter_ms).unwrap().sample(&mut rng)
        } else {
            0.0
        };
        t += (spec.rr_ms + jitter).max(300.0);
    }
    let natural_len = to_idx(r_times[r_times.len() - 1] + 600.0 + spec.pad_ms) as usize;
    let len = spec.length.unwrap_or(natural_len).max(1);
    let valid_end = len.saturating_sub(pad).max(pad + 1).min(len);
    let valid = pad.min(len - 1)..valid_end;

    let wander_phase = rng.random::<f64>() * std::f64::consts::TAU;
    let noise = Normal::new(0.0, spec.noise_std_mv.max(0.0)).unwrap();
    let mut samples = vec![0.0f32; len * N_LEADS];
    let reach_ms = 5.0 * params.t.sigma_ms.max(params.p.sigma_ms) + 350.0;
    for i in valid.clone() {
        let t_ms = i as f64 * ms;
        let mut row = [0.0f64; N_LEADS];
        for &r in &r_times {
            let dt = t_ms - r;
            if dt.abs() > reach_ms + 400.0 {
                continue;
            }
            let v = params.lead_values(dt);
            row.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
        let wander = spec.wander_mv * (std::f64::consts::TAU * 0.3 * t_ms / 1000.0 + wander_phase).sin();
        for (lead, v) in row.iter().enumerate() {
            let n = if spec.noise_std_mv > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            samples[i * N_LEADS + lead] = (v + wander + n) as f32;
        }
    }

    let in_valid = |t_ms: f64| {
        let idx = to_idx(t_ms);
        (idx >= valid.start as f64 && idx < valid.end as f64).then_some(idx as usize)
    };
    let mut beats = Vec::new();
    for &r in &r_times {
        let Some(r_peak) = in_valid(r) else { continue };
        beats.push(Beat {
            p_on: in_valid(r + params.p.onset_ms()).filter(|_| params.p.amp_mv != 0.0),
            p_peak: in_valid(r + params.p.offset_ms).filter(|_| params.p.amp_mv != 0.0),
            p_off: in_valid(r + params.p.offset_end_ms()).filter(|_| params.p.amp_mv != 0.0),
            qrs_on: in_valid(r + params.q.onset_ms()),
            r_peak,
            qrs_off: in_valid(r + params.s.offset_end_ms()),
            t_on: in_valid(r + params.t.onset_ms()),
            t_peak: in_valid(r + params.t.offset_ms),
            t_off: in_valid(r + params.t.offset_end_ms()),
        });
    }
    let keypoints = KeypointSet {
        r_peaks: beats.iter().map(|b| b.r_peak).collect(),
        tp_intervals: KeypointSet::assemble_tp(&beats),
        beats,
    };

    let class = spec.class_id;
    let mut labels = vec![0u8; MorphologyClass::COUNT];
    labels[class] = 1;
    let mut record = EcgRecord::new(format!("synth-c{class}-s{}", spec.seed), samples, spec.fs)?
        .with_valid_range(valid)?
        .with_labels(labels)?;
    if let Some(age) = spec.age {
        record = record.with_target(age)?;
    }
    Ok((record, keypoints))
}

/// A seeded, class-balanced synthetic corpus of fixed-length records.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub n_records: usize,
    pub fs: f64,
    pub length: usize,
    pub n_classes: usize,
    pub rr_range_ms: (f64, f64),
    pub rr_jitter_ms: f64,
    pub variability: f64,
    pub noise_std_mv: f64,
    pub wander_mv: f64,
    pub pad_ms: f64,
    /// Draw an age target uniformly from this range.
    pub age_range: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_records: 100,
            fs: 250.0,
            length: 2048,
            n_classes: MorphologyClass::COUNT,
            rr_range_ms: (800.0, 1200.0),
            rr_jitter_ms: 20.0,
            variability: 0.1,
            noise_std_mv: 0.02,
            wander_mv: 0.05,
            pad_ms: 0.0,
            age_range: None,
            seed: 0,
        }
    }
}

pub(crate) fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl CorpusSpec {
    /// Per-record generator settings; record `i` has class `i % n_classes`.
    pub fn record_spec(&self, i: usize) -> SynthSpec {
        let seed = splitmix(self.seed.wrapping_mul(0x1000_0000_01b3) ^ i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = self.rr_range_ms;
        let rr = lo + (hi - lo) * rng.random::<f64>();
        let first = 150.0 + rr * rng.random::<f64>();
        let duration = self.length as f64 * 1000.0 / self.fs - 2.0 * self.pad_ms;
        let n_beats = (((duration - first) / rr).floor() as usize + 1).max(1);
        let age = self
            .age_range
            .map(|(a, b)| a + (b - a) * rng.random::<f64>());
        SynthSpec {
            fs: self.fs,
            n_beats,
            rr_ms: rr,
            class_id: i % self.n_classes.clamp(1, MorphologyClass::COUNT),
            seed,
            rr_jitter_ms: self.rr_jitter_ms,
            variability: self.variability,
            noise_std_mv: self.noise_std_mv,
            wander_mv: self.wander_mv,
            p_scale: 1.0,
            first_beat_ms: first,
            pad_ms: self.pad_ms,
            length: Some(self.length),
            age,
        }
    }
}

pub fn synth_corpus(spec: &CorpusSpec) -> Result<Vec<(EcgRecord, KeypointSet)>> {
    let specs: Vec<SynthSpec> = (0..spec.n_records).map(|i| spec.record_spec(i)).collect();
    let mut out = par::try_map(&specs, synth_ecg)?;
    for (i, (rec, _)) in out.iter_mut().enumerate() {
        rec.id = format!("rec{i:05}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = SynthSpec {
            seed: 7,
            noise_std_mv: 0.05,
            wander_mv: 0.1,
            variability: 0.1,
            rr_jitter_ms: 30.0,
            ..SynthSpec::default()
        };
        let (a, ka) = synth_ecg(&spec).unwrap();
        let (b, kb) = synth_ecg(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ka, kb);
        assert_eq!(ka.r_peaks.len(), 8);
    }

    #[test]
    fn wide_qrs_is_wider_than_baseline() {
        for seed in 0..10 {
            let base = SynthSpec { seed, variability: 0.1, ..SynthSpec::default() };
            let wide = SynthSpec { class_id: 1, ..base.clone() };
            let (_, kb) = synth_ecg(&base).unwrap();
            let (_, kw) = synth_ecg(&wide).unwrap();
            let width = |k: &KeypointSet| {
                let b = &k.beats[2];
                b.qrs_off.unwrap() - b.qrs_on.unwrap()
            };
            assert!(width(&kw) > width(&kb), "seed {seed}");
        }
    }

    #[test]
    fn single_beat_has_one_r_peak() {
        let (rec, kp) = synth_ecg(&SynthSpec { n_beats: 1, ..SynthSpec::default() }).unwrap();
        assert_eq!(kp.r_peaks.len(), 1);
        assert!(kp.tp_intervals.is_empty());
        assert_eq!(rec.len(), 500);
    }

    #[test]
    fn padding_is_zero_and_recorded() {
        let spec = SynthSpec { pad_ms: 200.0, wander_mv: 0.1, ..SynthSpec::default() };
        let (rec, kp) = synth_ecg(&spec).unwrap();
        assert_eq!(rec.valid_range().start, 100);
        assert_eq!(rec.valid_range().end, rec.len() - 100);
        assert!(rec.samples()[..100 * N_LEADS].iter().all(|&v| v == 0.0));
        assert!(kp.r_peaks.iter().all(|r| rec.valid_range().contains(r)));
    }

    #[test]
    fn keypoints_are_ordered() {
        for class_id in 0..4 {
            let (rec, kp) = synth_ecg(&SynthSpec { class_id, ..SynthSpec::default() }).unwrap();
            kp.check(rec.len()).unwrap();
        }
    }

    #[test]
    fn corpus_is_balanced_and_fixed_length() {
        let spec = CorpusSpec { n_records: 8, ..CorpusSpec::default() };
        let corpus = synth_corpus(&spec).unwrap();
        let mut counts = [0; 4];
        for (rec, kp) in &corpus {
            assert_eq!(rec.len(), 2048);
            kp.check(rec.len()).unwrap();
            let l = rec.labels().unwrap();
            counts[l.iter().position(|&v| v == 1).unwrap()] += 1;
        }
        assert_eq!(counts, [2, 2, 2, 2]);
    }
}
