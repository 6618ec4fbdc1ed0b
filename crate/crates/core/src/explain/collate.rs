use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::net::Activation;
use crate::{Error, Matrix, Result};

/// Linear interpolation along time with both endpoints preserved.
pub fn linear_upsample(act: &Activation, d_out: usize) -> Result<Matrix> {
    let (d, c) = (act.d(), act.c());
    if d_out < d {
        return Err(Error::invalid(format!(
            "cannot upsample `{}` from {d} to fewer steps ({d_out})",
            act.layer_name
        )));
    }
    if d_out == d {
        return Ok(act.data.clone());
    }
    let mut out = Matrix::zeros(d_out, c);
    for j in 0..d_out {
        let pos = if d_out == 1 { 0.0 } else { (j * (d - 1)) as f64 / (d_out - 1) as f64 };
        let i0 = (pos.floor() as usize).min(d - 1);
        let i1 = (i0 + 1).min(d - 1);
        let w = pos - i0 as f64;
        for ch in 0..c {
            let v = act.data.get(i0, ch) * (1.0 - w) + act.data.get(i1, ch) * w;
            out.set(j, ch, v);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapLayout {
    pub layer_name: String,
    /// Length before upsampling.
    pub d: usize,
    pub c: usize,
    pub columns: Range<usize>,
}

/// Collated `D x C` activation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Matrix,
    pub layout: Vec<TapLayout>,
}

impl FeatureMatrix {
    pub fn d(&self) -> usize {
        self.data.rows()
    }

    pub fn c(&self) -> usize {
        self.data.cols()
    }
}

/// Upsamples every tap to `d`, unit-normalises each row segment, divides it
/// by `1 + d_i` and concatenates along channels.
pub fn collate(acts: &[Activation], d: usize) -> Result<FeatureMatrix> {
    let first = acts
        .first()
        .ok_or_else(|| Error::invalid("collation needs at least one tapped activation"))?;
    if first.d() != d {
        return Err(Error::Dimension {
            expected: first.d(),
            actual: d,
            context: "common length must equal the first tap's length",
        });
    }
    let c_total: usize = acts.iter().map(|a| a.c()).sum();
    let mut data = Matrix::zeros(d, c_total);
    let mut layout = Vec::with_capacity(acts.len());
    let mut col = 0;
    for act in acts {
        let up = linear_upsample(act, d)?;
        let weight = 1.0 / (1.0 + act.d() as f64);
        for t in 0..d {
            let src = up.row(t);
            let norm = src.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dst = &mut data.row_mut(t)[col..col + act.c()];
            if norm > 0.0 {
                for (o, v) in dst.iter_mut().zip(src) {
                    *o = v / norm * weight;
                }
            }
        }
        layout.push(TapLayout {
            layer_name: act.layer_name.clone(),
            d: act.d(),
            c: act.c(),
            columns: col..col + act.c(),
        });
        col += act.c();
    }
    Ok(FeatureMatrix { data, layout })
}
