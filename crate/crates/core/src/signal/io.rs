use std::fmt::Write as _;
use std::path::Path;

use super::{EcgRecord, N_LEADS};
use crate::codec::{read_file, to_u32, write_file, Reader, Writer};
use crate::error::Location;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"TLXE";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EcgFormat {
    /// Header `t,ch0..ch11`, one row per sample.
    Csv,
    /// `TLXE` binary container.
    Bin,
}

impl EcgFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(EcgFormat::Csv),
            "tlxe" | "bin" => Some(EcgFormat::Bin),
            _ => None,
        }
    }
}

fn record_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn load_ecg(path: &Path, format: EcgFormat) -> Result<EcgRecord> {
    let bytes = read_file(path)?;
    match format {
        EcgFormat::Csv => parse_csv(&bytes, path),
        EcgFormat::Bin => parse_bin(&bytes, path),
    }
}

pub fn save_ecg(record: &EcgRecord, path: &Path, format: EcgFormat) -> Result<()> {
    let bytes = match format {
        EcgFormat::Csv => to_csv(record).into_bytes(),
        EcgFormat::Bin => to_bin(record)?,
    };
    write_file(path, &bytes)
}

fn line_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        location: Location::Line(line),
        message: message.into(),
    }
}

fn parse_csv(bytes: &[u8], path: &Path) -> Result<EcgRecord> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Ingest {
        path: path.to_path_buf(),
        location: Location::Byte(e.valid_up_to()),
        message: "invalid UTF-8".into(),
    })?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| line_err(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") {
        return Err(line_err(path, 1, "header must start with `t`"));
    }
    if cols.len() - 1 != N_LEADS {
        return Err(line_err(
            path,
            1,
            format!("expected {N_LEADS} channel columns, found {}", cols.len() - 1),
        ));
    }
    for (i, c) in cols[1..].iter().enumerate() {
        if *c != format!("ch{i}") {
            return Err(line_err(path, 1, format!("column {} should be `ch{i}`, found `{c}`", i + 1)));
        }
    }

    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != N_LEADS + 1 {
            return Err(line_err(
                path,
                lineno,
                format!("expected {} fields, found {}", N_LEADS + 1, fields.len()),
            ));
        }
        let t: f64 = fields[0]
            .parse()
            .map_err(|_| line_err(path, lineno, format!("bad time value `{}`", fields[0])))?;
        times.push(t);
        for (ch, f) in fields[1..].iter().enumerate() {
            let v: f32 = f
                .parse()
                .map_err(|_| line_err(path, lineno, format!("bad value `{f}` in ch{ch}")))?;
            if !v.is_finite() {
                return Err(line_err(path, lineno, format!("non-finite value in ch{ch}")));
            }
            samples.push(v);
        }
    }
    if times.len() < 2 {
        return Err(line_err(path, 2, "need at least two rows to infer the sampling rate"));
    }
    let span = times[times.len() - 1] - times[0];
    if !(span > 0.0) {
        return Err(line_err(path, 2, "time column must be increasing"));
    }
    let fs = (((times.len() - 1) as f64 / span) * 1000.0).round() / 1000.0;
    EcgRecord::new(record_id(path), samples, fs)
}

fn to_csv(record: &EcgRecord) -> String {
    let mut out = String::from("t");
    for i in 0..N_LEADS {
        let _ = write!(out, ",ch{i}");
    }
    out.push('\n');
    for t in 0..record.len() {
        let _ = write!(out, "{:.9}", t as f64 / record.fs());
        for v in record.row(t) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn parse_bin(bytes: &[u8], path: &Path) -> Result<EcgRecord> {
    let mut r = Reader::new(bytes, path);
    r.magic(MAGIC)?;
    let at = r.pos();
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.error(at, format!("unsupported version {version}")));
    }
    let at = r.pos();
    let len = r.u32()? as usize;
    if len == 0 {
        return Err(r.error(at, "record length must be positive"));
    }
    let at = r.pos();
    let n_channels = r.u32()? as usize;
    if n_channels != N_LEADS {
        return Err(r.error(at, format!("expected {N_LEADS} channels, found {n_channels}")));
    }
    let at = r.pos();
    let fs = r.f64()?;
    if !(fs.is_finite() && fs > 0.0) {
        return Err(r.error(at, format!("bad sampling rate {fs}")));
    }
    let at = r.pos();
    let samples = r.f32s(len * N_LEADS)?;
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(r.error(at + 4 * i, "non-finite sample"));
    }
    let at = r.pos();
    let start = r.u32()? as usize;
    let end = r.u32()? as usize;
    if !(start < end && end <= len) {
        return Err(r.error(at, format!("bad valid range {start}..{end} for length {len}")));
    }
    let n_labels = r.u8()? as usize;
    let at = r.pos();
    let labels = r.bytes(n_labels)?.to_vec();
    if labels.iter().any(|&l| l > 1) {
        return Err(r.error(at, "labels must be 0 or 1"));
    }
    let at = r.pos();
    let target = match r.u8()? {
        0 => None,
        1 => Some(r.f64()?),
        other => return Err(r.error(at, format!("has_target flag must be 0 or 1, found {other}"))),
    };
    r.finish()?;

    let mut rec = EcgRecord::new(record_id(path), samples, fs)?.with_valid_range(start..end)?;
    if n_labels > 0 {
        rec = rec.with_labels(labels)?;
    }
    if let Some(t) = target {
        rec = rec.with_target(t).map_err(|_| r.error(at + 1, "non-finite target"))?;
    }
    Ok(rec)
}

fn to_bin(record: &EcgRecord) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u32(to_u32(record.len(), "record length")?);
    w.u32(N_LEADS as u32);
    w.f64(record.fs());
    w.f32s(record.samples());
    let valid = record.valid_range();
    w.u32(valid.start as u32);
    w.u32(valid.end as u32);
    let labels = record.labels().unwrap_or(&[]);
    let n = u8::try_from(labels.len()).map_err(|_| Error::invalid("more than 255 labels"))?;
    w.u8(n);
    w.bytes(labels);
    match record.target() {
        Some(t) => {
            w.u8(1);
            w.f64(t);
        }
        None => w.u8(0),
    }
    Ok(w.buf)
}
