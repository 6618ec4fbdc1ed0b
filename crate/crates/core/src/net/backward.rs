//! Reverse mode for the layer vocabulary. Only input gradients are needed.

use super::engine::{run_ops, valid_taps, Activation, Network, Op, Value};
use crate::signal::EcgRecord;
use crate::{Error, Matrix, Result};

enum Cache {
    Conv { d_in: usize },
    Affine,
    Relu { active: Vec<bool> },
    Pool { argmax: Vec<usize>, d_in: usize },
    Block { inner: Vec<Cache>, skip: Vec<Cache>, post: Vec<Cache> },
    Flatten { c: usize, d: usize },
    Dense,
}

impl Cache {
    fn pattern(&self, out: &mut Vec<usize>) {
        match self {
            Cache::Relu { active } => out.extend(active.iter().map(|&a| a as usize)),
            Cache::Pool { argmax, .. } => out.extend_from_slice(argmax),
            Cache::Block { inner, skip, post } => {
                inner.iter().chain(skip).chain(post).for_each(|c| c.pattern(out))
            }
            _ => {}
        }
    }
}

fn forward_cached(op: &Op, x: &Value) -> (Value, Cache) {
    let mut noop = |_: &str, _: &Value| {};
    match op {
        Op::Conv { .. } => {
            let d_in = match x {
                Value::Seq { d, .. } => *d,
                Value::Flat(_) => unreachable!(),
            };
            (op.forward(x, &mut noop), Cache::Conv { d_in })
        }
        Op::Affine { .. } => (op.forward(x, &mut noop), Cache::Affine),
        Op::Relu { .. } => {
            let active = x.data().iter().map(|&v| v > 0.0).collect();
            (op.forward(x, &mut noop), Cache::Relu { active })
        }
        Op::MaxPool { k, stride, .. } => {
            let Value::Seq { c, d, data } = x else { unreachable!() };
            let d_out = (d - k) / stride + 1;
            let mut out = vec![0.0; c * d_out];
            let mut argmax = vec![0; c * d_out];
            for ch in 0..*c {
                for t in 0..d_out {
                    let base = ch * d + t * stride;
                    let mut best = base;
                    for j in base + 1..base + k {
                        if data[j] > data[best] {
                            best = j;
                        }
                    }
                    out[ch * d_out + t] = data[best];
                    argmax[ch * d_out + t] = best;
                }
            }
            (
                Value::Seq { c: *c, d: d_out, data: out },
                Cache::Pool { argmax, d_in: *d },
            )
        }
        Op::Block { inner, skip, post, .. } => {
            let run = |ops: &[Op], v: Value| {
                let mut caches = Vec::with_capacity(ops.len());
                let mut v = v;
                for o in ops {
                    let (y, c) = forward_cached(o, &v);
                    caches.push(c);
                    v = y;
                }
                (v, caches)
            };
            let (a, ci) = run(inner, x.clone());
            let (s, cs) = run(skip, x.clone());
            let mut sum = a;
            sum.data_mut().iter_mut().zip(s.data()).for_each(|(p, q)| *p += q);
            let (y, cp) = run(post, sum);
            (y, Cache::Block { inner: ci, skip: cs, post: cp })
        }
        Op::Flatten { .. } => {
            let Value::Seq { c, d, .. } = x else { unreachable!() };
            (op.forward(x, &mut noop), Cache::Flatten { c: *c, d: *d })
        }
        Op::Dense { .. } => (op.forward(x, &mut noop), Cache::Dense),
    }
}

fn backward(op: &Op, cache: &Cache, g: Value) -> Value {
    match (op, cache) {
        (
            Op::Conv {
                in_ch,
                out_ch,
                k,
                stride,
                pad,
                w,
                ..
            },
            Cache::Conv { d_in },
        ) => {
            let Value::Seq { d: d_out, data: gy, .. } = g else { unreachable!() };
            let d = *d_in;
            let mut gx = vec![0.0; in_ch * d];
            for o in 0..*out_ch {
                let grow = &gy[o * d_out..(o + 1) * d_out];
                for i in 0..*in_ch {
                    let dst = &mut gx[i * d..(i + 1) * d];
                    for kk in 0..*k {
                        let wv = w[(o * in_ch + i) * k + kk];
                        let (t0, t1) = valid_taps(d, d_out, kk, *stride, *pad);
                        for t in t0..t1 {
                            dst[t * stride + kk - pad] += wv * grow[t];
                        }
                    }
                }
            }
            Value::Seq { c: *in_ch, d, data: gx }
        }
        (Op::Affine { scale, .. }, Cache::Affine) => {
            let Value::Seq { c, d, mut data } = g else { unreachable!() };
            for ch in 0..c {
                data[ch * d..(ch + 1) * d].iter_mut().for_each(|v| *v *= scale[ch]);
            }
            Value::Seq { c, d, data }
        }
        (Op::Relu { .. }, Cache::Relu { active }) => {
            let mut g = g;
            g.data_mut()
                .iter_mut()
                .zip(active)
                .for_each(|(v, &a)| if !a { *v = 0.0 });
            g
        }
        (Op::MaxPool { .. }, Cache::Pool { argmax, d_in }) => {
            let Value::Seq { c, data, .. } = g else { unreachable!() };
            let mut gx = vec![0.0; c * d_in];
            for (gv, &src) in data.iter().zip(argmax) {
                gx[src] += gv;
            }
            Value::Seq { c, d: *d_in, data: gx }
        }
        (Op::Block { inner, skip, post, .. }, Cache::Block { inner: ci, skip: cs, post: cp }) => {
            let back = |ops: &[Op], caches: &[Cache], g: Value| {
                ops.iter().zip(caches).rev().fold(g, |g, (o, c)| backward(o, c, g))
            };
            let g_sum = back(post, cp, g);
            let mut gx = back(inner, ci, g_sum.clone());
            let gs = back(skip, cs, g_sum);
            gx.data_mut().iter_mut().zip(gs.data()).for_each(|(a, b)| *a += b);
            gx
        }
        (Op::Flatten { .. }, Cache::Flatten { c, d }) => Value::Seq {
            c: *c,
            d: *d,
            data: g.data().to_vec(),
        },
        (Op::Dense { n_in, n_out, w, .. }, Cache::Dense) => {
            let gy = g.data();
            let mut gx = vec![0.0; *n_in];
            for o in 0..*n_out {
                for (j, gxj) in gx.iter_mut().enumerate() {
                    *gxj += w[o * n_in + j] * gy[o];
                }
            }
            Value::Flat(gx)
        }
        _ => unreachable!("cache does not match op"),
    }
}

impl Network {
    /// Activation at top-level layer `tap` and the gradient of head logit
    /// `target` with respect to it, both `d x c`.
    pub fn tap_gradient(&self, ecg: &EcgRecord, tap: &str, target: usize) -> Result<(Activation, Matrix)> {
        if ecg.len() != self.input_length() {
            return Err(Error::Dimension {
                expected: self.input_length(),
                actual: ecg.len(),
                context: "record length vs bundle input_length",
            });
        }
        let idx = self.top_level_index(tap).ok_or_else(|| {
            Error::invalid(format!("`{tap}` is not a top-level layer of the network"))
        })?;
        let head = run_ops(&self.ops[..=idx], Value::from_record(ecg), &mut |_, _| {});
        if !matches!(head, Value::Seq { .. }) {
            return Err(Error::invalid(format!(
                "tap `{tap}` lies after the flatten; gradients need a sequence layer"
            )));
        }
        let act = head.to_activation(tap)?;
        let grad = self.grad_from_value(idx, &head, target)?;
        Ok((act, grad))
    }

    /// Gradient of logit `target` with respect to a substituted activation at
    /// top-level layer `tap`.
    pub fn gradient_from_tap(&self, tap: &str, act: &Activation, target: usize) -> Result<Matrix> {
        let idx = self.top_level_index(tap).ok_or_else(|| {
            Error::invalid(format!("`{tap}` is not a top-level layer of the network"))
        })?;
        self.grad_from_value(idx, &Value::from_activation(act), target)
    }

    /// ReLU masks and max-pool winners of the layers after top-level layer
    /// `tap`. The logits are affine in the activation wherever this pattern
    /// stays constant, which lets finite-difference checks skip kinks.
    pub fn kink_pattern(&self, tap: &str, act: &Activation) -> Result<Vec<usize>> {
        let idx = self.top_level_index(tap).ok_or_else(|| {
            Error::invalid(format!("`{tap}` is not a top-level layer of the network"))
        })?;
        let mut v = Value::from_activation(act);
        let mut out = Vec::new();
        for op in &self.ops[idx + 1..] {
            let (y, c) = forward_cached(op, &v);
            c.pattern(&mut out);
            v = y;
        }
        Ok(out)
    }

    fn grad_from_value(&self, idx: usize, start: &Value, target: usize) -> Result<Matrix> {
        let rest = &self.ops[idx + 1..];
        let mut caches = Vec::with_capacity(rest.len());
        let mut v = start.clone();
        for op in rest {
            let (y, c) = forward_cached(op, &v);
            caches.push(c);
            v = y;
        }
        let n_out = v.data().len();
        if target >= n_out {
            return Err(Error::invalid(format!(
                "target index {target} out of range for {n_out} outputs"
            )));
        }
        let mut g = v.zeros_like();
        g.data_mut()[target] = 1.0;
        for (op, cache) in rest.iter().zip(&caches).rev() {
            g = backward(op, cache, g);
        }
        if g.data().iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        Ok(g.to_activation("grad")?.data)
    }
}
