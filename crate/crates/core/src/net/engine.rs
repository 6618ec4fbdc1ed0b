//! Compiled network: f64 weights, batch-norm folded to a per-channel affine map.

use std::collections::HashSet;

use super::bundle::{Head, Layer, WeightsBundle};
use crate::signal::{EcgRecord, N_LEADS};
use crate::{Error, Matrix, Result};

/// Hidden activation at a tapped layer, `d x c` with time along rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub layer_name: String,
    pub data: Matrix,
}

impl Activation {
    pub fn d(&self) -> usize {
        self.data.rows()
    }

    pub fn c(&self) -> usize {
        self.data.cols()
    }
}

/// Value flowing between layers. Sequences are channel-major.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Value {
    Seq { c: usize, d: usize, data: Vec<f64> },
    Flat(Vec<f64>),
}

impl Value {
    pub(crate) fn from_record(ecg: &EcgRecord) -> Value {
        let d = ecg.len();
        let mut data = vec![0.0; N_LEADS * d];
        for (t, row) in ecg.samples().chunks_exact(N_LEADS).enumerate() {
            for (ch, &v) in row.iter().enumerate() {
                data[ch * d + t] = f64::from(v);
            }
        }
        Value::Seq { c: N_LEADS, d, data }
    }

    pub(crate) fn from_activation(act: &Activation) -> Value {
        let (d, c) = (act.d(), act.c());
        let mut data = vec![0.0; c * d];
        for t in 0..d {
            for ch in 0..c {
                data[ch * d + t] = act.data.get(t, ch);
            }
        }
        Value::Seq { c, d, data }
    }

    pub(crate) fn to_activation(&self, name: &str) -> Result<Activation> {
        match self {
            Value::Seq { c, d, data } => {
                let mut m = Matrix::zeros(*d, *c);
                for ch in 0..*c {
                    for t in 0..*d {
                        m.set(t, ch, data[ch * d + t]);
                    }
                }
                Ok(Activation {
                    layer_name: name.to_string(),
                    data: m,
                })
            }
            Value::Flat(_) => Err(Error::invalid(format!(
                "layer `{name}` produces a flat vector and cannot be tapped"
            ))),
        }
    }

    pub(crate) fn data(&self) -> &[f64] {
        match self {
            Value::Seq { data, .. } | Value::Flat(data) => data,
        }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        match self {
            Value::Seq { data, .. } | Value::Flat(data) => data,
        }
    }

    pub(crate) fn zeros_like(&self) -> Value {
        match self {
            Value::Seq { c, d, data } => Value::Seq {
                c: *c,
                d: *d,
                data: vec![0.0; data.len()],
            },
            Value::Flat(v) => Value::Flat(vec![0.0; v.len()]),
        }
    }

    fn seq(&self) -> (usize, usize, &[f64]) {
        match self {
            Value::Seq { c, d, data } => (*c, *d, data),
            Value::Flat(_) => unreachable!("shape inference guarantees a sequence here"),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Conv {
        name: String,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        /// `[out][in][k]`
        w: Vec<f64>,
        b: Vec<f64>,
    },
    Affine {
        name: String,
        scale: Vec<f64>,
        shift: Vec<f64>,
    },
    Relu {
        name: String,
    },
    MaxPool {
        name: String,
        k: usize,
        stride: usize,
    },
    Block {
        name: String,
        inner: Vec<Op>,
        skip: Vec<Op>,
        post: Vec<Op>,
    },
    Flatten {
        name: String,
    },
    Dense {
        name: String,
        n_in: usize,
        n_out: usize,
        w: Vec<f64>,
        b: Vec<f64>,
    },
}

impl Op {
    pub(crate) fn name(&self) -> &str {
        match self {
            Op::Conv { name, .. }
            | Op::Affine { name, .. }
            | Op::Relu { name }
            | Op::MaxPool { name, .. }
            | Op::Block { name, .. }
            | Op::Flatten { name }
            | Op::Dense { name, .. } => name,
        }
    }

    fn compile(layer: &Layer, bundle: &WeightsBundle) -> Result<Op> {
        let p = |suffix: &str| -> Result<Vec<f64>> {
            Ok(bundle.param(&format!("{}.{suffix}", layer.name()))?.to_f64())
        };
        Ok(match layer {
            Layer::Conv1d {
                name,
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
                bias,
            } => Op::Conv {
                name: name.clone(),
                in_ch: *in_ch,
                out_ch: *out_ch,
                k: *kernel,
                stride: *stride,
                pad: *pad,
                w: p("weight")?,
                b: if *bias { p("bias")? } else { vec![0.0; *out_ch] },
            },
            Layer::BatchNorm { name, eps, .. } => {
                let (gamma, beta) = (p("weight")?, p("bias")?);
                let (mean, var) = (p("running_mean")?, p("running_var")?);
                let scale: Vec<f64> = gamma
                    .iter()
                    .zip(&var)
                    .map(|(g, v)| g / (v + eps).sqrt())
                    .collect();
                let shift = beta
                    .iter()
                    .zip(&mean)
                    .zip(&scale)
                    .map(|((b, m), s)| b - m * s)
                    .collect();
                Op::Affine {
                    name: name.clone(),
                    scale,
                    shift,
                }
            }
            Layer::Relu { name } => Op::Relu { name: name.clone() },
            Layer::MaxPool {
                name,
                kernel,
                stride,
            } => Op::MaxPool {
                name: name.clone(),
                k: *kernel,
                stride: *stride,
            },
            Layer::ResidualBlock {
                name,
                inner,
                skip,
                post,
            } => {
                let c = |ls: &[Layer]| ls.iter().map(|l| Op::compile(l, bundle)).collect::<Result<Vec<_>>>();
                Op::Block {
                    name: name.clone(),
                    inner: c(inner)?,
                    skip: c(skip)?,
                    post: c(post)?,
                }
            }
            Layer::Flatten { name } => Op::Flatten { name: name.clone() },
            Layer::Dense {
                name,
                in_features,
                out_features,
            } => Op::Dense {
                name: name.clone(),
                n_in: *in_features,
                n_out: *out_features,
                w: p("weight")?,
                b: p("bias")?,
            },
        })
    }

    pub(crate) fn forward(&self, x: &Value, taps: &mut dyn FnMut(&str, &Value)) -> Value {
        let y = match self {
            Op::Conv {
                in_ch,
                out_ch,
                k,
                stride,
                pad,
                w,
                b,
                ..
            } => {
                let (c, d, data) = x.seq();
                debug_assert_eq!(c, *in_ch);
                let d_out = (d + 2 * pad - k) / stride + 1;
                let mut out = vec![0.0; out_ch * d_out];
                for o in 0..*out_ch {
                    let row = &mut out[o * d_out..(o + 1) * d_out];
                    row.fill(b[o]);
                    for i in 0..*in_ch {
                        let src = &data[i * d..(i + 1) * d];
                        for kk in 0..*k {
                            let wv = w[(o * in_ch + i) * k + kk];
                            let (t0, t1) = valid_taps(d, d_out, kk, *stride, *pad);
                            if *stride == 1 {
                                let s0 = t0 + kk - pad;
                                for (r, s) in row[t0..t1].iter_mut().zip(&src[s0..s0 + (t1 - t0)]) {
                                    *r += wv * s;
                                }
                            } else {
                                for t in t0..t1 {
                                    row[t] += wv * src[t * stride + kk - pad];
                                }
                            }
                        }
                    }
                }
                Value::Seq {
                    c: *out_ch,
                    d: d_out,
                    data: out,
                }
            }
            Op::Affine { scale, shift, .. } => {
                let (c, d, data) = x.seq();
                let mut out = data.to_vec();
                for ch in 0..c {
                    for v in &mut out[ch * d..(ch + 1) * d] {
                        *v = *v * scale[ch] + shift[ch];
                    }
                }
                Value::Seq { c, d, data: out }
            }
            Op::Relu { .. } => {
                let mut y = x.clone();
                y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                y
            }
            Op::MaxPool { k, stride, .. } => {
                let (c, d, data) = x.seq();
                let d_out = (d - k) / stride + 1;
                let mut out = vec![0.0; c * d_out];
                for ch in 0..c {
                    for t in 0..d_out {
                        let w = &data[ch * d + t * stride..ch * d + t * stride + k];
                        out[ch * d_out + t] = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    }
                }
                Value::Seq { c, d: d_out, data: out }
            }
            Op::Block {
                inner, skip, post, ..
            } => {
                let a = run_ops(inner, x.clone(), taps);
                let s = run_ops(skip, x.clone(), taps);
                let mut sum = a;
                sum.data_mut()
                    .iter_mut()
                    .zip(s.data())
                    .for_each(|(p, q)| *p += q);
                run_ops(post, sum, taps)
            }
            Op::Flatten { .. } => Value::Flat(x.data().to_vec()),
            Op::Dense {
                n_in, n_out, w, b, ..
            } => {
                let v = x.data();
                Value::Flat(
                    (0..*n_out)
                        .map(|o| {
                            b[o] + w[o * n_in..(o + 1) * n_in]
                                .iter()
                                .zip(v)
                                .map(|(a, b)| a * b)
                                .sum::<f64>()
                        })
                        .collect(),
                )
            }
        };
        taps(self.name(), &y);
        y
    }
}

/// Output positions `[t0, t1)` for which input index `t*stride + kk - pad`
/// falls inside `0..d`.
pub(crate) fn valid_taps(d: usize, d_out: usize, kk: usize, stride: usize, pad: usize) -> (usize, usize) {
    let t0 = if pad > kk { (pad - kk).div_ceil(stride) } else { 0 };
    let t1 = if d + pad > kk {
        ((d - 1 + pad - kk) / stride + 1).min(d_out)
    } else {
        0
    };
    (t0.min(t1), t1)
}

pub(crate) fn run_ops(ops: &[Op], mut x: Value, taps: &mut dyn FnMut(&str, &Value)) -> Value {
    for op in ops {
        x = op.forward(&x, taps);
    }
    x
}

/// A bundle prepared for repeated evaluation. Immutable and `Sync`.
#[derive(Debug, Clone)]
pub struct Network {
    pub(crate) ops: Vec<Op>,
    pub(crate) head: Head,
    input_length: usize,
    default_taps: Vec<String>,
    layer_names: HashSet<String>,
    top_level: Vec<String>,
}

/// Result of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Head output: sigmoid probabilities or linear values.
    pub output: Vec<f64>,
    /// Pre-activation head values.
    pub logits: Vec<f64>,
    /// One entry per requested tap, in network order.
    pub acts: Vec<Activation>,
}

impl Network {
    pub fn new(bundle: &WeightsBundle) -> Result<Self> {
        bundle.infer_shapes()?;
        let ops = bundle
            .arch
            .iter()
            .map(|l| Op::compile(l, bundle))
            .collect::<Result<Vec<_>>>()?;
        let mut layer_names = HashSet::new();
        super::bundle::walk(&bundle.arch, &mut |l| {
            layer_names.insert(l.name().to_string());
        });
        Ok(Network {
            top_level: ops.iter().map(|o| o.name().to_string()).collect(),
            ops,
            head: bundle.meta.head,
            input_length: bundle.meta.input_length,
            default_taps: bundle.meta.tap_names.clone(),
            layer_names,
        })
    }

    pub fn input_length(&self) -> usize {
        self.input_length
    }

    /// Tap names declared by the bundle.
    pub fn default_taps(&self) -> &[String] {
        &self.default_taps
    }

    pub(crate) fn top_level_index(&self, name: &str) -> Option<usize> {
        self.top_level.iter().position(|n| n == name)
    }

    pub(crate) fn apply_head(&self, logits: &[f64]) -> Vec<f64> {
        match self.head {
            Head::Linear => logits.to_vec(),
            Head::Sigmoid => logits.iter().map(|&z| sigmoid(z)).collect(),
        }
    }

    pub fn forward(&self, ecg: &EcgRecord, taps: &[impl AsRef<str>]) -> Result<ForwardOutput> {
        if ecg.len() != self.input_length {
            return Err(Error::Dimension {
                expected: self.input_length,
                actual: ecg.len(),
                context: "record length vs bundle input_length",
            });
        }
        let wanted: HashSet<&str> = taps.iter().map(|t| t.as_ref()).collect();
        if let Some(bad) = wanted.iter().find(|t| !self.layer_names.contains(**t)) {
            return Err(Error::invalid(format!("unknown tap layer `{bad}`")));
        }
        let mut acts = Vec::new();
        let mut tap_err = None;
        let mut record = |name: &str, v: &Value| {
            if wanted.contains(name) {
                match v.to_activation(name) {
                    Ok(a) => acts.push(a),
                    Err(e) => tap_err = Some(e),
                }
            }
        };
        let out = run_ops(&self.ops, Value::from_record(ecg), &mut record);
        if let Some(e) = tap_err {
            return Err(e);
        }
        let logits = out.data().to_vec();
        if logits.iter().any(|v| !v.is_finite()) || acts.iter().any(|a| !a.data.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value in forward pass of `{}`", ecg.id)));
        }
        Ok(ForwardOutput {
            output: self.apply_head(&logits),
            logits,
            acts,
        })
    }

    /// Runs the layers after top-level layer `tap` on a substituted activation
    /// and returns the head logits.
    pub fn logits_from_tap(&self, tap: &str, act: &Activation) -> Result<Vec<f64>> {
        let idx = self.top_level_index(tap).ok_or_else(|| {
            Error::invalid(format!("`{tap}` is not a top-level layer"))
        })?;
        let out = run_ops(&self.ops[idx + 1..], Value::from_activation(act), &mut |_, _| {});
        Ok(out.data().to_vec())
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Compiles `bundle` and runs one forward pass.
pub fn forward(bundle: &WeightsBundle, ecg: &EcgRecord, taps: &[impl AsRef<str>]) -> Result<ForwardOutput> {
    Network::new(bundle)?.forward(ecg, taps)
}
