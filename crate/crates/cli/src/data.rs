//! Record discovery and keypoint sidecars.

use std::path::{Path, PathBuf};

use tlx_core::signal::{delineate, detect_rpeaks, load_ecg, EcgFormat, EcgRecord, KeypointSet};

use crate::error::{CliError, CliResult};

pub struct Loaded {
    pub path: PathBuf,
    pub record: EcgRecord,
    /// From a `<stem>.keypoints.json` sidecar, else detected.
    pub keypoints: KeypointSet,
}

pub fn sidecar(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.keypoints.json"))
}

/// Record files under `path`: the file itself, or every recognised record in
/// the directory in file-name order.
pub fn record_paths(path: &Path) -> CliResult<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| CliError::Io(format!("cannot list {}: {e}", path.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| CliError::Io(e.to_string()))?.path();
        if p.is_file() && EcgFormat::from_path(&p).is_some() {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("no records (.tlxe, .bin, .csv) in {}", path.display())));
    }
    Ok(files)
}

pub fn load_one(path: &Path, want_keypoints: bool) -> CliResult<Loaded> {
    let format = EcgFormat::from_path(path)
        .ok_or_else(|| CliError::Data(format!("{}: unknown record extension", path.display())))?;
    let record = load_ecg(path, format)?;
    let keypoints = if want_keypoints { keypoints_for(path, &record)? } else { KeypointSet::default() };
    Ok(Loaded {
        path: path.to_path_buf(),
        record,
        keypoints,
    })
}

pub fn load_all(path: &Path, want_keypoints: bool) -> CliResult<Vec<Loaded>> {
    let paths = record_paths(path)?;
    tlx_core::par::try_map(&paths, |p| load_one(p, want_keypoints))
}

fn keypoints_for(path: &Path, record: &EcgRecord) -> CliResult<KeypointSet> {
    let side = sidecar(path);
    if side.exists() {
        let text = std::fs::read_to_string(&side).map_err(|e| CliError::Io(format!("cannot read {}: {e}", side.display())))?;
        let kps: KeypointSet =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", side.display())))?;
        kps.check(record.len())
            .map_err(|m| CliError::Data(format!("{}: {m}", side.display())))?;
        return Ok(kps);
    }
    let peaks = detect_rpeaks(record);
    Ok(delineate(record, &peaks))
}

pub fn labels_of(loaded: &[Loaded]) -> CliResult<Vec<Vec<u8>>> {
    loaded
        .iter()
        .map(|l| {
            l.record
                .labels()
                .map(<[u8]>::to_vec)
                .ok_or_else(|| CliError::Data(format!("{} carries no labels", l.path.display())))
        })
        .collect()
}
