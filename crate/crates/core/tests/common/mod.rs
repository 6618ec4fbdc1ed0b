//! Shared helpers for integration tests: fixture loading and a naive
//! channel-major float64 reimplementation of the forward pass and the
//! explanation pipeline, written independently of the library internals.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde::Deserialize;
use tlx_core::net::{Head, Layer, WeightsBundle};
use tlx_core::signal::{load_ecg, EcgFormat, EcgRecord, N_LEADS};

pub const FIXTURES: [&str; 3] = ["maxpool_skip", "identity_skip", "linear_head"];

#[derive(Debug, Deserialize)]
pub struct ExpectedTap {
    pub name: String,
    pub d: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Deserialize)]
pub struct Expected {
    pub output: Vec<f64>,
    pub logits: Vec<f64>,
    pub taps: Vec<ExpectedTap>,
}

pub struct Fixture {
    pub name: &'static str,
    pub bundle: WeightsBundle,
    pub record: EcgRecord,
    pub expected: Expected,
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn load_fixtures() -> Vec<Fixture> {
    let dir = fixture_dir();
    FIXTURES
        .iter()
        .map(|&name| {
            let bundle = WeightsBundle::load(&dir.join(format!("{name}.tlxw"))).expect("fixture bundle");
            let record = load_ecg(&dir.join(format!("{name}.input.tlxe")), EcgFormat::Bin).expect("fixture record");
            let json = std::fs::read(dir.join(format!("{name}.expected.json"))).expect("fixture json");
            let expected = serde_json::from_slice(&json).expect("fixture json parses");
            Fixture {
                name,
                bundle,
                record,
                expected,
            }
        })
        .collect()
}

/// `[channel][time]` activations.
pub type Seq = Vec<Vec<f64>>;

enum Value {
    Seq(Seq),
    Flat(Vec<f64>),
}

fn param(b: &WeightsBundle, name: &str, suffix: &str) -> Vec<f64> {
    b.param(&format!("{name}.{suffix}"))
        .expect("parameter present")
        .data()
        .iter()
        .map(|&v| f64::from(v))
        .collect()
}

fn layer(b: &WeightsBundle, l: &Layer, x: Value) -> Value {
    match (l, x) {
        (
            Layer::Conv1d {
                name,
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
                bias,
            },
            Value::Seq(x),
        ) => {
            let w = param(b, name, "weight");
            let bias = if *bias { param(b, name, "bias") } else { vec![0.0; *out_ch] };
            let d = x[0].len();
            let d_out = (d + 2 * pad - kernel) / stride + 1;
            let mut y = vec![vec![0.0; d_out]; *out_ch];
            for o in 0..*out_ch {
                for t in 0..d_out {
                    let mut s = bias[o];
                    for i in 0..*in_ch {
                        for k in 0..*kernel {
                            let src = (t * stride + k) as isize - *pad as isize;
                            if src >= 0 && (src as usize) < d {
                                s += w[(o * in_ch + i) * kernel + k] * x[i][src as usize];
                            }
                        }
                    }
                    y[o][t] = s;
                }
            }
            Value::Seq(y)
        }
        (Layer::BatchNorm { name, eps, .. }, Value::Seq(mut x)) => {
            let (g, bt) = (param(b, name, "weight"), param(b, name, "bias"));
            let (m, v) = (param(b, name, "running_mean"), param(b, name, "running_var"));
            for (c, row) in x.iter_mut().enumerate() {
                for e in row.iter_mut() {
                    *e = (*e - m[c]) / (v[c] + eps).sqrt() * g[c] + bt[c];
                }
            }
            Value::Seq(x)
        }
        (Layer::Relu { .. }, Value::Seq(mut x)) => {
            x.iter_mut().flatten().for_each(|e| *e = e.max(0.0));
            Value::Seq(x)
        }
        (Layer::Relu { .. }, Value::Flat(mut x)) => {
            x.iter_mut().for_each(|e| *e = e.max(0.0));
            Value::Flat(x)
        }
        (Layer::MaxPool { kernel, stride, .. }, Value::Seq(x)) => {
            let d_out = (x[0].len() - kernel) / stride + 1;
            Value::Seq(
                x.iter()
                    .map(|row| {
                        (0..d_out)
                            .map(|t| row[t * stride..t * stride + kernel].iter().cloned().fold(f64::MIN, f64::max))
                            .collect()
                    })
                    .collect(),
            )
        }
        (Layer::ResidualBlock { inner, skip, post, .. }, Value::Seq(x)) => {
            let run = |ls: &[Layer], v: Seq| match ls.iter().fold(Value::Seq(v), |v, l| layer(b, l, v)) {
                Value::Seq(s) => s,
                Value::Flat(_) => panic!("residual paths stay sequences"),
            };
            let a = run(inner, x.clone());
            let s = run(skip, x);
            let sum: Seq = a
                .iter()
                .zip(&s)
                .map(|(p, q)| p.iter().zip(q).map(|(u, v)| u + v).collect())
                .collect();
            Value::Seq(run(post, sum))
        }
        (Layer::Flatten { .. }, Value::Seq(x)) => {
            Value::Flat(x.concat())
        }
        (
            Layer::Dense {
                name,
                in_features,
                out_features,
            },
            Value::Flat(x),
        ) => {
            let w = param(b, name, "weight");
            let bias = param(b, name, "bias");
            Value::Flat(
                (0..*out_features)
                    .map(|o| bias[o] + (0..*in_features).map(|i| w[o * in_features + i] * x[i]).sum::<f64>())
                    .collect(),
            )
        }
        (l, _) => panic!("layer {} got an input of the wrong kind", l.name()),
    }
}

fn input(record: &EcgRecord) -> Seq {
    (0..N_LEADS)
        .map(|c| (0..record.len()).map(|t| f64::from(record.sample(t, c))).collect())
        .collect()
}

/// Naive forward: returns the head output and the requested top-level
/// activations in tap order.
pub fn naive_forward(b: &WeightsBundle, record: &EcgRecord, taps: &[String]) -> (Vec<f64>, Vec<Seq>) {
    let mut x = Value::Seq(input(record));
    let mut found: Vec<(String, Seq)> = Vec::new();
    for l in &b.arch {
        x = layer(b, l, x);
        if let Value::Seq(s) = &x {
            if taps.iter().any(|t| t == l.name()) {
                found.push((l.name().to_string(), s.clone()));
            }
        }
    }
    let logits = match x {
        Value::Flat(v) => v,
        Value::Seq(_) => panic!("network must end in a flat output"),
    };
    let out = match b.meta.head {
        Head::Sigmoid => logits.iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect(),
        Head::Linear => logits,
    };
    let acts = taps
        .iter()
        .map(|t| found.iter().find(|(n, _)| n == t).expect("tap found").1.clone())
        .collect();
    (out, acts)
}

/// Builds the `D x C` feature rows from `[channel][time]` activations.
pub fn naive_features(acts: &[Seq]) -> Vec<Vec<f64>> {
    let big_d = acts[0][0].len();
    let mut rows = vec![Vec::new(); big_d];
    for a in acts {
        let d = a[0].len();
        for (j, row) in rows.iter_mut().enumerate() {
            let seg: Vec<f64> = a
                .iter()
                .map(|ch| {
                    if d == big_d {
                        return ch[j];
                    }
                    let pos = j as f64 * (d - 1) as f64 / (big_d - 1) as f64;
                    let lo = pos.floor() as usize;
                    let hi = (lo + 1).min(d - 1);
                    let f = pos - lo as f64;
                    ch[lo] + f * (ch[hi] - ch[lo])
                })
                .collect();
            let norm = seg.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in seg {
                row.push(if norm == 0.0 { 0.0 } else { v / norm / (1.0 + d as f64) });
            }
        }
    }
    rows
}

/// Naive soft assignment: `(labels, probs)` per row.
pub fn naive_assign(rows: &[Vec<f64>], centroids: &[Vec<f64>], tau: f64) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut labels = Vec::new();
    let mut probs = Vec::new();
    for x in rows {
        let d2: Vec<f64> = centroids
            .iter()
            .map(|c| c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect();
        let best = d2.iter().cloned().fold(f64::INFINITY, f64::min);
        let e: Vec<f64> = d2.iter().map(|v| (-(v - best) / tau).exp()).collect();
        let z: f64 = e.iter().sum();
        probs.push(e.iter().map(|v| v / z).collect());
        labels.push(d2.iter().position(|&v| v == best).unwrap());
    }
    (labels, probs)
}
