//! Reference residual architecture and seeded random initialisation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::bundle::{walk, Head, Layer, Meta, Tensor, WeightsBundle};
use crate::signal::N_LEADS;
use crate::Result;

/// Stem convolution followed by residual blocks that each halve time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceArch {
    pub input_length: usize,
    pub kernel: usize,
    pub stem_channels: usize,
    pub block_channels: Vec<usize>,
    pub n_outputs: usize,
    pub head: Head,
    /// Max-pool over the whole remaining time axis before the dense head,
    /// which makes the head shift-invariant.
    pub global_pool: bool,
}

impl Default for ReferenceArch {
    fn default() -> Self {
        ReferenceArch {
            input_length: 4096,
            kernel: 17,
            stem_channels: 16,
            block_channels: vec![16, 32, 32, 64, 64],
            n_outputs: 4,
            head: Head::Sigmoid,
            global_pool: false,
        }
    }
}

impl ReferenceArch {
    /// Name of the stem convolution, the Grad-CAM tap.
    pub const STEM_CONV: &'static str = "l0.conv";

    /// A smaller variant for 250 Hz records of 2048 samples that runs
    /// quickly on a single core.
    pub fn compact() -> Self {
        ReferenceArch {
            input_length: 2048,
            kernel: 9,
            stem_channels: 8,
            block_channels: vec![8, 16, 16, 32, 32],
            global_pool: true,
            ..Self::default()
        }
    }

    pub fn block_name(i: usize) -> String {
        format!("block{}", i + 1)
    }

    /// The last three blocks (or all of them if there are fewer).
    pub fn default_taps(&self) -> Vec<String> {
        let n = self.block_channels.len();
        (n.saturating_sub(3)..n).map(Self::block_name).collect()
    }

    pub fn layers(&self) -> Vec<Layer> {
        let k = self.kernel;
        let conv = |name: String, i: usize, o: usize, kernel: usize, stride: usize| Layer::Conv1d {
            name,
            in_ch: i,
            out_ch: o,
            kernel,
            stride,
            pad: kernel / 2,
            bias: true,
        };
        let bn = |name: String, ch: usize| Layer::BatchNorm { name, ch, eps: 1e-5 };
        let mut arch = vec![
            conv(Self::STEM_CONV.into(), N_LEADS, self.stem_channels, k, 1),
            bn("l0.bn".into(), self.stem_channels),
            Layer::Relu { name: "l0.relu".into() },
        ];
        let mut c_in = self.stem_channels;
        let mut d = self.input_length;
        for (i, &c_out) in self.block_channels.iter().enumerate() {
            let b = Self::block_name(i);
            let mut skip = vec![Layer::MaxPool {
                name: format!("{b}.pool"),
                kernel: 2,
                stride: 2,
            }];
            if c_in != c_out {
                skip.push(conv(format!("{b}.proj"), c_in, c_out, 1, 1));
            }
            arch.push(Layer::ResidualBlock {
                name: b.clone(),
                inner: vec![
                    conv(format!("{b}.conv1"), c_in, c_out, k, 1),
                    bn(format!("{b}.bn1"), c_out),
                    Layer::Relu { name: format!("{b}.relu1") },
                    conv(format!("{b}.conv2"), c_out, c_out, k, 2),
                ],
                skip,
                post: vec![bn(format!("{b}.bn2"), c_out), Layer::Relu { name: format!("{b}.relu2") }],
            });
            c_in = c_out;
            d /= 2;
        }
        if self.global_pool && d > 1 {
            arch.push(Layer::MaxPool {
                name: "gpool".into(),
                kernel: d,
                stride: d,
            });
            d = 1;
        }
        arch.push(Layer::Flatten { name: "flatten".into() });
        arch.push(Layer::Dense {
            name: "dense".into(),
            in_features: c_in * d,
            out_features: self.n_outputs,
        });
        arch
    }

    pub fn meta(&self) -> Meta {
        Meta {
            input_length: self.input_length,
            input_channels: N_LEADS,
            tap_names: self.default_taps(),
            head: self.head,
        }
    }

    /// Seeded random weights; fails if the length does not survive the blocks.
    pub fn build(&self, seed: u64) -> Result<WeightsBundle> {
        random_bundle(self.layers(), self.meta(), seed)
    }
}

/// He-normal convolution and dense weights, uniform biases in `[-0.1, 0.1]`,
/// identity batch norm.
pub fn random_bundle(arch: Vec<Layer>, meta: Meta, seed: u64) -> Result<WeightsBundle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = BTreeMap::new();
    let mut specs = Vec::new();
    walk(&arch, &mut |l| specs.push(l.clone()));
    for layer in &specs {
        for (name, shape) in layer.param_specs() {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = if name.ends_with(".weight") && !matches!(layer, Layer::BatchNorm { .. }) {
                let fan_in: usize = shape[1..].iter().product();
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                (0..n).map(|_| normal.sample(&mut rng) as f32).collect()
            } else if name.ends_with(".bias") && !matches!(layer, Layer::BatchNorm { .. }) {
                (0..n).map(|_| rng.random_range(-0.1..0.1) as f32).collect()
            } else if name.ends_with(".weight") || name.ends_with(".running_var") {
                vec![1.0; n]
            } else {
                vec![0.0; n]
            };
            params.insert(name, Tensor::new(shape, data)?);
        }
    }
    WeightsBundle::new(arch, meta, params)
}
