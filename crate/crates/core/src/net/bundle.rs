//! Architecture description, parameter tensors and the `TLXW` container.
//!
//! Layout: magic `TLXW`, u32 version, u32 header length, a UTF-8 JSON header
//! (`arch`, `meta`, `tensors` directory), zero padding to a 64-byte boundary,
//! then raw little-endian `f32` tensors. Each directory entry carries the
//! tensor's name, shape and byte offset from the start of the data section;
//! offsets are multiples of 64.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{read_file, to_u32, write_file, Reader, Writer};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"TLXW";
const VERSION: u32 = 1;
const ALIGN: usize = 64;

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_eps() -> f64 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Conv1d {
        name: String,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    BatchNorm {
        name: String,
        ch: usize,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Relu {
        name: String,
    },
    MaxPool {
        name: String,
        kernel: usize,
        stride: usize,
    },
    /// `post(inner(x) + skip(x))`; an empty `skip` is the identity.
    ResidualBlock {
        name: String,
        inner: Vec<Layer>,
        #[serde(default)]
        skip: Vec<Layer>,
        #[serde(default)]
        post: Vec<Layer>,
    },
    Flatten {
        name: String,
    },
    Dense {
        name: String,
        in_features: usize,
        out_features: usize,
    },
}

impl Layer {
    pub fn name(&self) -> &str {
        match self {
            Layer::Conv1d { name, .. }
            | Layer::BatchNorm { name, .. }
            | Layer::Relu { name }
            | Layer::MaxPool { name, .. }
            | Layer::ResidualBlock { name, .. }
            | Layer::Flatten { name }
            | Layer::Dense { name, .. } => name,
        }
    }

    /// Parameter names and expected shapes owned directly by this layer.
    pub fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        match self {
            Layer::Conv1d {
                name,
                in_ch,
                out_ch,
                kernel,
                bias,
                ..
            } => {
                let mut v = vec![(format!("{name}.weight"), vec![*out_ch, *in_ch, *kernel])];
                if *bias {
                    v.push((format!("{name}.bias"), vec![*out_ch]));
                }
                v
            }
            Layer::BatchNorm { name, ch, .. } => ["weight", "bias", "running_mean", "running_var"]
                .iter()
                .map(|p| (format!("{name}.{p}"), vec![*ch]))
                .collect(),
            Layer::Dense {
                name,
                in_features,
                out_features,
            } => vec![
                (format!("{name}.weight"), vec![*out_features, *in_features]),
                (format!("{name}.bias"), vec![*out_features]),
            ],
            _ => Vec::new(),
        }
    }

    pub(crate) fn children(&self) -> impl Iterator<Item = &Layer> {
        let lists: [&[Layer]; 3] = match self {
            Layer::ResidualBlock {
                inner, skip, post, ..
            } => [inner, skip, post],
            _ => [&[], &[], &[]],
        };
        lists.into_iter().flatten()
    }
}

/// Visits every layer depth-first, parents before children.
pub(crate) fn walk<'a>(layers: &'a [Layer], f: &mut impl FnMut(&'a Layer)) {
    for l in layers {
        f(l);
        let kids: Vec<&Layer> = l.children().collect();
        for k in kids {
            walk(std::slice::from_ref(k), f);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Sigmoid,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub input_length: usize,
    pub input_channels: usize,
    /// Default taps for explanations.
    pub tap_names: Vec<String>,
    pub head: Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension {
                expected: n,
                actual: data.len(),
                context: "tensor element count",
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub(crate) fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }
}

/// Shape of a value flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// `channels x time`.
    Seq { c: usize, d: usize },
    Flat(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightsBundle {
    pub arch: Vec<Layer>,
    pub meta: Meta,
    pub params: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: Vec<Layer>,
    meta: Meta,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

fn shape_err(layer: &str, message: impl Into<String>) -> Error {
    Error::Shape {
        layer: layer.to_string(),
        message: message.into(),
    }
}

impl WeightsBundle {
    pub fn new(arch: Vec<Layer>, meta: Meta, params: BTreeMap<String, Tensor>) -> Result<Self> {
        let b = WeightsBundle { arch, meta, params };
        b.infer_shapes()?;
        Ok(b)
    }

    /// All parameter specs in architecture order.
    pub fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        walk(&self.arch, &mut |l| out.extend(l.param_specs()));
        out
    }

    pub fn param(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| shape_err(name.rsplit_once('.').map_or(name, |p| p.0), format!("missing tensor `{name}`")))
    }

    /// Propagates shapes from `input_channels x input_length` and checks every
    /// parameter tensor. Returns the output shape of every top-level layer.
    pub fn infer_shapes(&self) -> Result<Vec<(String, Shape)>> {
        let mut names = std::collections::HashSet::new();
        let mut dup = None;
        walk(&self.arch, &mut |l| {
            if !names.insert(l.name().to_string()) && dup.is_none() {
                dup = Some(l.name().to_string());
            }
        });
        if let Some(d) = dup {
            return Err(shape_err(&d, "duplicate layer name"));
        }
        let expected: BTreeMap<String, Vec<usize>> = self.param_specs().into_iter().collect();
        for (name, shape) in &expected {
            let t = self.param(name)?;
            if t.shape() != shape.as_slice() {
                let layer = name.rsplit_once('.').map_or(name.as_str(), |p| p.0);
                return Err(shape_err(
                    layer,
                    format!("tensor `{name}` has shape {:?}, expected {shape:?}", t.shape()),
                ));
            }
        }
        if let Some(extra) = self.params.keys().find(|k| !expected.contains_key(*k)) {
            return Err(shape_err(
                extra.rsplit_once('.').map_or(extra.as_str(), |p| p.0),
                format!("tensor `{extra}` does not belong to any layer"),
            ));
        }

        let mut shape = Shape::Seq {
            c: self.meta.input_channels,
            d: self.meta.input_length,
        };
        let mut out = Vec::with_capacity(self.arch.len());
        for layer in &self.arch {
            shape = infer_layer(layer, shape)?;
            out.push((layer.name().to_string(), shape));
        }
        if !matches!(shape, Shape::Flat(_)) {
            return Err(shape_err(
                self.arch.last().map_or("<empty>", |l| l.name()),
                "network must end in a dense layer",
            ));
        }
        for tap in &self.meta.tap_names {
            if !names.contains(tap) {
                return Err(shape_err(tap, "tap references an unknown layer"));
            }
        }
        Ok(out)
    }

    pub fn output_len(&self) -> Result<usize> {
        match self.infer_shapes()?.last() {
            Some((_, Shape::Flat(n))) => Ok(*n),
            _ => Err(Error::invalid("network has no dense output")),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?, path)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.infer_shapes()?;
        let mut entries = Vec::new();
        let mut offset = 0;
        for (name, shape) in self.param_specs() {
            entries.push(TensorEntry {
                name,
                shape: shape.clone(),
                offset,
            });
            let bytes = shape.iter().product::<usize>() * 4;
            offset += bytes.div_ceil(ALIGN) * ALIGN;
        }
        let header = serde_json::to_vec(&Header {
            arch: self.arch.clone(),
            meta: self.meta.clone(),
            tensors: entries,
        })?;
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u32(to_u32(header.len(), "header length")?);
        w.bytes(&header);
        w.pad_to(ALIGN);
        for (name, _) in self.param_specs() {
            w.f32s(self.params[&name].data());
            w.pad_to(ALIGN);
        }
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(bytes, path);
        r.magic(MAGIC)?;
        let at = r.pos();
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.error(at, format!("unsupported version {version}")));
        }
        let header_len = r.u32()? as usize;
        let at = r.pos();
        let header: Header = serde_json::from_slice(r.bytes(header_len)?)
            .map_err(|e| r.error(at, format!("bad header: {e}")))?;
        let data_start = r.pos().div_ceil(ALIGN) * ALIGN;
        let mut params = BTreeMap::new();
        for e in &header.tensors {
            if e.offset % ALIGN != 0 {
                return Err(r.error(at, format!("tensor `{}` offset {} is not 64-byte aligned", e.name, e.offset)));
            }
            r.seek(data_start + e.offset)?;
            let n = e.shape.iter().product();
            let data = r.f32s(n)?;
            params.insert(e.name.clone(), Tensor::new(e.shape.clone(), data)?);
        }
        WeightsBundle::new(header.arch, header.meta, params)
    }
}

fn infer_layer(layer: &Layer, input: Shape) -> Result<Shape> {
    let name = layer.name();
    let seq = |s: Shape| match s {
        Shape::Seq { c, d } => Ok((c, d)),
        Shape::Flat(_) => Err(shape_err(name, "expects a sequence input, got a flat vector")),
    };
    match layer {
        Layer::Conv1d {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            ..
        } => {
            let (c, d) = seq(input)?;
            if c != *in_ch {
                return Err(shape_err(name, format!("expects {in_ch} input channels, got {c}")));
            }
            if *stride == 0 || *kernel == 0 {
                return Err(shape_err(name, "kernel and stride must be positive"));
            }
            let span = d + 2 * pad;
            if span < *kernel {
                return Err(shape_err(name, format!("input length {d} shorter than kernel {kernel}")));
            }
            Ok(Shape::Seq {
                c: *out_ch,
                d: (span - kernel) / stride + 1,
            })
        }
        Layer::BatchNorm { ch, .. } => {
            let (c, d) = seq(input)?;
            if c != *ch {
                return Err(shape_err(name, format!("expects {ch} channels, got {c}")));
            }
            Ok(Shape::Seq { c, d })
        }
        Layer::Relu { .. } => Ok(input),
        Layer::MaxPool { kernel, stride, .. } => {
            let (c, d) = seq(input)?;
            if *stride == 0 || *kernel == 0 || d < *kernel {
                return Err(shape_err(name, format!("cannot pool length {d} with kernel {kernel}")));
            }
            Ok(Shape::Seq {
                c,
                d: (d - kernel) / stride + 1,
            })
        }
        Layer::ResidualBlock {
            inner, skip, post, ..
        } => {
            let mut a = input;
            for l in inner {
                a = infer_layer(l, a)?;
            }
            let mut b = input;
            for l in skip {
                b = infer_layer(l, b)?;
            }
            if a != b {
                return Err(shape_err(
                    name,
                    format!("inner path yields {a:?} but skip path yields {b:?}"),
                ));
            }
            for l in post {
                a = infer_layer(l, a)?;
            }
            Ok(a)
        }
        Layer::Flatten { .. } => {
            let (c, d) = seq(input)?;
            Ok(Shape::Flat(c * d))
        }
        Layer::Dense {
            in_features,
            out_features,
            ..
        } => match input {
            Shape::Flat(n) if n == *in_features => Ok(Shape::Flat(*out_features)),
            Shape::Flat(n) => Err(shape_err(name, format!("expects {in_features} features, got {n}"))),
            Shape::Seq { .. } => Err(shape_err(name, "dense layer needs a flatten before it")),
        },
    }
}
