use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cluster::FitMeta;
use crate::net::{random_bundle, Activation, Head, Layer, Meta, ReferenceArch};
use crate::signal::N_LEADS;

fn act(name: &str, d: usize, c: usize, f: impl Fn(usize, usize) -> f64) -> Activation {
    let mut m = Matrix::zeros(d, c);
    for t in 0..d {
        for ch in 0..c {
            m.set(t, ch, f(t, ch));
        }
    }
    Activation {
        layer_name: name.into(),
        data: m,
    }
}

fn record(len: usize, seed: u64) -> EcgRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..len * N_LEADS).map(|_| rng.random_range(-1.0..1.0)).collect();
    EcgRecord::new(format!("r{seed}"), samples, 100.0).unwrap()
}

fn small_net(seed: u64) -> Network {
    let arch = ReferenceArch {
        input_length: 128,
        kernel: 5,
        stem_channels: 4,
        block_channels: vec![4, 6, 6, 8],
        n_outputs: 2,
        head: Head::Sigmoid,
        global_pool: true,
    };
    Network::new(&arch.build(seed).unwrap()).unwrap()
}

#[test]
fn upsample_cases() {
    let ramp = act("a", 3, 1, |t, _| t as f64);
    let up = linear_upsample(&ramp, 5).unwrap();
    assert_eq!(up.as_slice(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
    assert_eq!(linear_upsample(&ramp, 3).unwrap(), ramp.data);
    let k = act("k", 4, 2, |_, c| c as f64 + 0.25);
    let up = linear_upsample(&k, 37).unwrap();
    assert!(up.iter_rows().all(|r| r == [0.25, 1.25]));
    assert!(linear_upsample(&ramp, 2).is_err());
    let single = act("s", 1, 1, |_, _| 7.0);
    assert!(linear_upsample(&single, 4).unwrap().as_slice().iter().all(|&v| v == 7.0));
}

#[test]
fn collate_layout_and_norms() {
    let acts = [
        act("b3", 64, 32, |t, c| ((t * 7 + c) % 5) as f64 - 1.5),
        act("b4", 32, 64, |t, c| ((t + c) as f64).sin()),
        act("b5", 16, 64, |t, c| if t == 3 { 0.0 } else { (t * c) as f64 + 1.0 }),
    ];
    let f = collate(&acts, 64).unwrap();
    assert_eq!((f.d(), f.c()), (64, 160));
    let cols: Vec<_> = f.layout.iter().map(|l| l.columns.clone()).collect();
    assert_eq!(cols, [0..32, 32..96, 96..160]);
    for l in &f.layout {
        for t in 0..64 {
            let seg = &f.data.row(t)[l.columns.clone()];
            let n = seg.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(seg.iter().all(|v| v.is_finite()));
            if n > 0.0 {
                assert!((n - 1.0 / (1.0 + l.d as f64)).abs() < 1e-6);
            }
        }
    }
    // Row 3 of the last tap upsamples to zeros only at exactly cell 12.6, so it
    // blends with neighbours; a fully zero tap stays zero.
    let z = collate(&[act("z", 4, 3, |_, _| 0.0)], 4).unwrap();
    assert!(z.data.as_slice().iter().all(|&v| v == 0.0));
    assert!(collate(&acts, 32).is_err());
    assert!(collate(&[], 4).is_err());
}

#[test]
fn fit_pools_all_rows_and_is_deterministic() {
    let net = small_net(1);
    let corpus: Vec<EcgRecord> = (0..6).map(|i| record(128, i)).collect();
    let cfg = ExplainerConfig {
        k: 5,
        seed: 3,
        ..ExplainerConfig::default()
    };
    let m = fit_explainer(&net, &corpus, &cfg).unwrap();
    let d = features(&net, &corpus[0], &[]).unwrap().d();
    assert_eq!(d, 32);
    assert_eq!(m.fit_meta.n_samples, 6 * d);
    assert_eq!(m.fit_meta.taps, ["block2", "block3", "block4"]);
    let m2 = fit_explainer(&net, &corpus, &cfg).unwrap();
    let bits = |m: &crate::cluster::ExplainerModel| -> Vec<u64> {
        m.centroids().as_slice().iter().map(|v| v.to_bits()).collect()
    };
    assert_eq!(bits(&m), bits(&m2));
    assert!(fit_explainer(&net, &[], &cfg).is_err());
}

#[test]
fn explanation_shape_timeline_and_lookup() {
    let net = small_net(2);
    let corpus: Vec<EcgRecord> = (0..4).map(|i| record(128, i)).collect();
    let cfg = ExplainerConfig {
        k: 4,
        ..ExplainerConfig::default()
    };
    let m = fit_explainer(&net, &corpus, &cfg).unwrap();
    let e = explain(&net, &m, &corpus[1]).unwrap();
    assert_eq!(e.d(), 32);
    assert_eq!(e.l, 128);
    let mut next = 0;
    for j in 0..e.d() {
        let r = e.timeline(j);
        assert_eq!(r.start, next);
        next = r.end;
        for s in r {
            assert_eq!(e.cell_of(s).unwrap(), j);
        }
    }
    assert_eq!(next, 128);
    assert_eq!(e.cell_of(0).unwrap(), 0);
    assert_eq!(e.cell_of(127).unwrap(), 31);
    assert_eq!(e.cell_of(64).unwrap(), 16);
    assert!(e.segment_at(128).is_err());
    assert_eq!(e.segment_at(64).unwrap(), (e.labels()[16], e.entropy()[16]));
    assert_eq!(e.labels_per_sample().len(), 128);
    let again = explain(&net, &m, &corpus[1].clone()).unwrap();
    assert_eq!(again, e);
}

#[test]
fn uneven_timeline_partitions() {
    for (d, l) in [(7usize, 100usize), (3, 3), (5, 4), (13, 4096)] {
        let e = Explanation {
            ecg_id: "x".into(),
            l,
            assignment: crate::cluster::Assignment {
                probs: Matrix::zeros(d, 2),
                labels: vec![0; d],
                entropy: vec![0.0; d],
            },
        };
        let mut covered = vec![0; l];
        for j in 0..d {
            for s in e.timeline(j) {
                covered[s] += 1;
                assert_eq!(e.cell_of(s).unwrap(), j);
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
    }
}

#[test]
fn layout_mismatch_is_reported() {
    let net = small_net(3);
    let model = crate::cluster::ExplainerModel::new(
        Matrix::zeros(3, 5),
        1.0,
        0.0,
        FitMeta {
            taps: vec!["block4".into()],
            ..FitMeta::default()
        },
    )
    .unwrap();
    match explain(&net, &model, &record(128, 0)) {
        Err(Error::Dimension { expected: 5, actual: 8, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
}

/// Independent float64 pipeline with plain loops.
fn naive(net: &Network, model: &crate::cluster::ExplainerModel, ecg: &EcgRecord) -> (Vec<usize>, Vec<Vec<f64>>) {
    let out = net.forward(ecg, &model.fit_meta.taps).unwrap();
    let big_d = out.acts[0].d();
    let mut rows = vec![Vec::new(); big_d];
    for a in &out.acts {
        let (d, c) = (a.d(), a.c());
        for (j, row) in rows.iter_mut().enumerate() {
            let x = if big_d == 1 { 0.0 } else { j as f64 * (d - 1) as f64 / (big_d - 1) as f64 };
            let lo = x.floor() as usize;
            let hi = if lo + 1 < d { lo + 1 } else { lo };
            let frac = x - lo as f64;
            let v: Vec<f64> = (0..c)
                .map(|ch| a.data.get(lo, ch) + (a.data.get(hi, ch) - a.data.get(lo, ch)) * frac)
                .collect();
            let n = v.iter().map(|q| q * q).sum::<f64>().sqrt();
            for q in v {
                row.push(if n == 0.0 { 0.0 } else { q / n / (1.0 + d as f64) });
            }
        }
    }
    let mut labels = Vec::new();
    let mut probs = Vec::new();
    for r in &rows {
        let dist: Vec<f64> = model
            .centroids()
            .iter_rows()
            .map(|c| c.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect();
        let w: Vec<f64> = dist.iter().map(|d| (-d / model.tau()).exp()).collect();
        let z: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|v| v / z).collect();
        let mut best = 0;
        for k in 1..dist.len() {
            if dist[k] < dist[best] {
                best = k;
            }
        }
        labels.push(best);
        probs.push(p);
    }
    (labels, probs)
}

#[test]
fn matches_naive_reimplementation() {
    let net = small_net(4);
    let corpus: Vec<EcgRecord> = (0..5).map(|i| record(128, 10 + i)).collect();
    let m = fit_explainer(&net, &corpus, &ExplainerConfig { k: 6, ..Default::default() }).unwrap();
    for ecg in &corpus {
        let e = explain(&net, &m, ecg).unwrap();
        let (labels, probs) = naive(&net, &m, ecg);
        assert_eq!(e.labels(), labels.as_slice());
        for (t, p) in probs.iter().enumerate() {
            for (k, &v) in p.iter().enumerate() {
                assert!((e.assignment.probs.get(t, k) - v).abs() <= 1e-5);
            }
        }
    }
}

fn homogeneous_bundle(len: usize, stride: usize) -> Network {
    let arch = vec![
        Layer::Conv1d {
            name: "c1".into(),
            in_ch: N_LEADS,
            out_ch: 3,
            kernel: 3,
            stride,
            pad: 1,
            bias: false,
        },
        Layer::Relu { name: "r1".into() },
        Layer::Conv1d {
            name: "c2".into(),
            in_ch: 3,
            out_ch: 4,
            kernel: 3,
            stride: 2,
            pad: 1,
            bias: false,
        },
        Layer::Relu { name: "r2".into() },
        Layer::Flatten { name: "flat".into() },
        Layer::Dense {
            name: "out".into(),
            in_features: 4 * len.div_ceil(stride).div_ceil(2),
            out_features: 1,
        },
    ];
    let meta = Meta {
        input_length: len,
        input_channels: N_LEADS,
        tap_names: vec!["r1".into(), "r2".into()],
        head: Head::Linear,
    };
    Network::new(&random_bundle(arch, meta, 5).unwrap()).unwrap()
}

#[test]
fn collated_rows_are_scale_invariant_for_homogeneous_taps() {
    let net = homogeneous_bundle(64, 1);
    let ecg = record(64, 2);
    let a = features(&net, &ecg, &[]).unwrap();
    let b = features(&net, &ecg.scaled(2.0), &[]).unwrap();
    for (x, y) in a.data.as_slice().iter().zip(b.data.as_slice()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn impulse_translation_moves_segmentation_by_one_cell() {
    let len = 64;
    let arch = vec![
        Layer::Conv1d {
            name: "c1".into(),
            in_ch: N_LEADS,
            out_ch: 2,
            kernel: 3,
            stride: 2,
            pad: 1,
            bias: false,
        },
        Layer::Flatten { name: "flat".into() },
        Layer::Dense {
            name: "out".into(),
            in_features: 2 * len / 2,
            out_features: 1,
        },
    ];
    let meta = Meta {
        input_length: len,
        input_channels: N_LEADS,
        tap_names: vec!["c1".into()],
        head: Head::Linear,
    };
    let mut b = random_bundle(arch, meta, 8).unwrap();
    for v in b.params.get_mut("c1.weight").unwrap().data_mut() {
        *v = v.abs() + 0.1;
    }
    let net = Network::new(&b).unwrap();
    let model = crate::cluster::ExplainerModel::new(
        Matrix::from_rows(&[[0.0, 0.0], [0.02, 0.02]]).unwrap(),
        1e-3,
        0.0,
        FitMeta {
            taps: vec!["c1".into()],
            ..FitMeta::default()
        },
    )
    .unwrap();
    let seg = |pos: usize| {
        let mut s = vec![0.0f32; len * N_LEADS];
        s[pos * N_LEADS..(pos + 1) * N_LEADS].fill(1.0);
        explain(&net, &model, &EcgRecord::new("i", s, 100.0).unwrap()).unwrap().labels().to_vec()
    };
    let cell = len / 32;
    for pos in (10..40).step_by(cell) {
        let a = seg(pos);
        let b = seg(pos + cell);
        assert!(a.contains(&1));
        assert_eq!(&b[1..], &a[..a.len() - 1], "impulse at {pos}");
    }
}

#[test]
fn json_round_trip() {
    let net = small_net(6);
    let corpus: Vec<EcgRecord> = (0..3).map(|i| record(128, i)).collect();
    let m = fit_explainer(&net, &corpus, &ExplainerConfig { k: 3, ..Default::default() }).unwrap();
    let e = explain(&net, &m, &corpus[0]).unwrap();
    let full = Explanation::from_json(&e.to_json(true).unwrap()).unwrap();
    assert_eq!(full, e);
    let text = e.to_json(false).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["ecg_id", "D", "L", "K", "labels", "entropy"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(v.get("probs").is_none());
    let lean = Explanation::from_json(&text).unwrap();
    assert_eq!(lean.labels(), e.labels());
    assert!(Explanation::from_json("{\"ecg_id\":\"a\",\"D\":2,\"L\":4,\"K\":2,\"labels\":[0,5],\"entropy\":[0,0]}").is_err());
}

#[test]
fn cell_mask_follows_midpoints() {
    let e = Explanation {
        ecg_id: "m".into(),
        l: 16,
        assignment: crate::cluster::Assignment {
            probs: Matrix::zeros(4, 2),
            labels: vec![0; 4],
            entropy: vec![0.0; 4],
        },
    };
    assert_eq!(e.cell_mask(&(4..12)), [false, true, true, false]);
    assert_eq!(e.cell_mask(&(0..16)), [true; 4]);
}
