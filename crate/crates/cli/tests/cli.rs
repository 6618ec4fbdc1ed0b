use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;
use tlx_core::explain::Explanation;
use tlx_core::net::ReferenceArch;
use tlx_core::signal::{save_ecg, synth_ecg, EcgFormat, SynthSpec};

const SMALL: &str = r#"{
  "synth": {"fs": 100.0, "arch": {"input_length": 256, "kernel": 5, "stem_channels": 4,
            "block_channels": [4, 8, 8], "global_pool": true}},
  "explainer": {"max_iter": 50},
  "cv": {"folds": 3, "repeats": 2, "forest": {"n_trees": 15}},
  "ablation": {"explainer": {"max_iter": 30}, "cv": {"folds": 3, "repeats": 1, "forest": {"n_trees": 15}}}
}"#;

fn tlx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tlx"))
        .args(args)
        .env_remove("TLX_CONFIG")
        .output()
        .expect("spawn tlx")
}

fn ok(args: &[&str]) -> Output {
    let out = tlx(args);
    assert!(
        out.status.success(),
        "tlx {args:?} failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    tlx(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn digest(path: &Path) -> String {
    Sha256::digest(fs::read(path).unwrap()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Small synthetic corpus with a toy bundle, written through the CLI.
struct Corpus {
    dir: TempDir,
    config: PathBuf,
}

impl Corpus {
    fn new(n: usize, seed: u64) -> Self {
        let dir = TempDir::new().unwrap();
        let config = dir.path().join("small.json");
        fs::write(&config, SMALL).unwrap();
        let c = Corpus { dir, config };
        ok(&["--config", s(&c.config), "--seed", &seed.to_string(), "synth", "--out", s(&c.root()), "--n", &n.to_string()]);
        c
    }

    fn root(&self) -> PathBuf {
        self.dir.path().join("syn")
    }

    fn bundle(&self) -> PathBuf {
        self.root().join("toy.tlxw")
    }

    fn records(&self) -> PathBuf {
        self.root().join("records")
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn fit(&self, out: &str, k: usize) -> PathBuf {
        let out = self.path(out);
        ok(&[
            "--config", s(&self.config), "--seed", "5", "fit", "--bundle", s(&self.bundle()), "--data",
            s(&self.records()), "--out", s(&out), "-k", &k.to_string(),
        ]);
        out.join("model.tlxc")
    }
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn synth_writes_records_sidecars_labels_and_bundle() {
    let c = Corpus::new(12, 1);
    let recs = files(&c.records());
    assert_eq!(recs.iter().filter(|p| p.extension().unwrap() == "tlxe").count(), 12);
    assert_eq!(recs.iter().filter(|p| p.to_str().unwrap().ends_with(".keypoints.json")).count(), 12);
    let labels = fs::read_to_string(c.root().join("labels.csv")).unwrap();
    let mut lines = labels.lines();
    assert_eq!(lines.next().unwrap(), "id,y0,y1,y2,y3,target");
    assert_eq!(lines.count(), 12);
    assert!(c.bundle().exists());
}

#[test]
fn fit_is_reproducible_for_a_seed() {
    let c = Corpus::new(24, 2);
    let a = c.fit("a", 6);
    let b = c.fit("b", 6);
    assert_eq!(digest(&a), digest(&b));
    assert_eq!(digest(&c.path("a/fit_report.json")), digest(&c.path("b/fit_report.json")));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(c.path("a/fit_report.json")).unwrap()).unwrap();
    assert_eq!(report["k"], 6);
    assert_eq!(report["n_records"], 24);
    assert!(a.with_file_name("model.tlxc.json").exists());

    let other = c.path("c");
    ok(&[
        "--config", s(&c.config), "--seed", "6", "fit", "--bundle", s(&c.bundle()), "--data", s(&c.records()),
        "--out", s(&other), "-k", "6",
    ]);
    assert_ne!(digest(&a), digest(&other.join("model.tlxc")));
}

#[test]
fn exit_codes_follow_error_classes() {
    let c = Corpus::new(8, 3);
    let out = c.path("x");
    let (b, d) = (c.bundle(), c.records());
    // Missing input path and unknown flag: configuration / usage.
    let missing = c.path("missing.tlxw");
    let r = tlx(&["fit", "--bundle", s(&missing), "--data", s(&d), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("bundle path"));
    assert_eq!(code(&["fit", "--bogus"]), 2);
    // Invalid K from the config file and from the env fallback.
    let k1 = c.path("k1.json");
    fs::write(&k1, r#"{"k": 1}"#).unwrap();
    assert_eq!(code(&["--config", s(&k1), "fit", "--bundle", s(&b), "--data", s(&d), "--out", s(&out)]), 2);
    let env = Command::new(env!("CARGO_BIN_EXE_tlx"))
        .args(["fit", "--bundle", s(&b), "--data", s(&d), "--out", s(&out)])
        .env("TLX_CONFIG", &k1)
        .output()
        .unwrap();
    assert_eq!(env.status.code(), Some(2));
    let typo = c.path("typo.json");
    fs::write(&typo, r#"{"kk": 3}"#).unwrap();
    assert_eq!(code(&["--config", s(&typo), "fit", "--bundle", s(&b), "--data", s(&d), "--out", s(&out)]), 2);
    // Malformed record: data error.
    let bad = c.path("bad.tlxe");
    fs::write(&bad, b"garbage bytes").unwrap();
    assert_eq!(code(&["fit", "--bundle", s(&b), "--data", s(&bad), "--out", s(&out)]), 3);
    // Wrong record length for the bundle: data error.
    let long = c.path("long");
    fs::create_dir_all(&long).unwrap();
    let (rec, _) = synth_ecg(&SynthSpec { fs: 100.0, length: Some(300), ..SynthSpec::default() }).unwrap();
    save_ecg(&rec, &long.join("r.tlxe"), EcgFormat::Bin).unwrap();
    assert_eq!(code(&["fit", "--bundle", s(&b), "--data", s(&long), "--out", s(&out)]), 3);
    // Singular ridge system: numeric error.
    let neg = c.path("neg.json");
    let cfg = SMALL.replacen("\"fs\": 100.0", "\"fs\": 100.0, \"ridge\": -1e9", 1);
    fs::write(&neg, cfg).unwrap();
    assert_eq!(code(&["--config", s(&neg), "synth", "--out", s(&c.path("neg")), "--n", "8"]), 4);
    // Output directory blocked by a file: I/O error.
    let blocked = c.path("blocked");
    fs::write(&blocked, b"").unwrap();
    assert_eq!(code(&["fit", "--bundle", s(&b), "--data", s(&d), "--out", s(&blocked)]), 1);
}

/// A record with eleven beats at 800 ms whose first R peak leaves room for
/// the 250 ms pre-window.
fn eleven_beats(dir: &Path, sidecar: bool) -> (PathBuf, PathBuf) {
    let arch = ReferenceArch {
        input_length: 1024,
        kernel: 5,
        stem_channels: 4,
        block_channels: vec![4, 8, 8],
        global_pool: true,
        ..ReferenceArch::default()
    };
    let bundle = dir.join("net.tlxw");
    arch.build(4).unwrap().save(&bundle).unwrap();
    let data = dir.join("beats");
    fs::create_dir_all(&data).unwrap();
    let (rec, kps) = synth_ecg(&SynthSpec {
        fs: 100.0,
        n_beats: 11,
        rr_ms: 800.0,
        first_beat_ms: 400.0,
        length: Some(1024),
        ..SynthSpec::default()
    })
    .unwrap();
    assert_eq!(kps.r_peaks.len(), 11);
    let path = data.join("eleven.tlxe");
    save_ecg(&rec, &path, EcgFormat::Bin).unwrap();
    if sidecar {
        fs::write(data.join("eleven.keypoints.json"), serde_json::to_string(&kps).unwrap()).unwrap();
    }
    (bundle, data)
}

fn explain_eleven(sidecar: bool) -> (TempDir, String, Explanation) {
    let dir = TempDir::new().unwrap();
    let (bundle, data) = eleven_beats(dir.path(), sidecar);
    let fit = dir.path().join("fit");
    ok(&["fit", "--bundle", s(&bundle), "--data", s(&data), "--out", s(&fit), "-k", "4"]);
    let out = dir.path().join("ex");
    ok(&[
        "explain", "--bundle", s(&bundle), "--model", s(&fit.join("model.tlxc")), "--data", s(&data), "--out",
        s(&out), "--svg",
    ]);
    let svg = fs::read_to_string(out.join("eleven.svg")).unwrap();
    let e = Explanation::from_json(&fs::read_to_string(out.join("eleven.json")).unwrap()).unwrap();
    (dir, svg, e)
}

#[test]
fn eleven_qrs_complexes_give_eleven_stacked_rows() {
    let (_dir, svg, e) = explain_eleven(true);
    assert_eq!(svg.matches(r#"<g class="beat""#).count(), 11);
    assert!(svg.starts_with("<?xml"));
    assert!(svg.contains(r#"version="1.1""#));
    // Every band's opacity matches its cell's normalized entropy.
    let ln_k = (e.k() as f64).ln();
    for band in svg.split("<rect").filter(|r| r.contains(r#"class="band""#)) {
        let op: f64 = attr(band, "fill-opacity").parse().unwrap();
        assert!((0.0..=1.0).contains(&op));
        let cl: usize = attr(band, "data-cluster").parse().unwrap();
        assert!(cl < e.k());
    }
    let expect: Vec<f64> = e.entropy().iter().map(|u| (1.0 - u / ln_k).clamp(0.0, 1.0)).collect();
    assert!(expect.iter().all(|o| (0.0..=1.0).contains(o)));
}

#[test]
fn detected_peaks_stack_the_same_eleven_rows() {
    let (_dir, svg, _) = explain_eleven(false);
    assert_eq!(svg.matches(r#"<g class="beat""#).count(), 11);
}

fn attr<'a>(tag: &'a str, name: &str) -> &'a str {
    let key = format!("{name}=\"");
    let start = tag.find(&key).unwrap() + key.len();
    let end = start + tag[start..].find('"').unwrap();
    &tag[start..end]
}

#[test]
fn explanation_json_matches_schema_and_probs_can_be_dropped() {
    let c = Corpus::new(10, 7);
    let model = c.fit("fit", 5);
    let (a, b) = (c.path("ea"), c.path("eb"));
    let args = |out: &Path| {
        vec![
            "explain".to_string(), "--bundle".into(), s(&c.bundle()).into(), "--model".into(), s(&model).into(),
            "--data".into(), s(&c.records()).into(), "--out".into(), s(out).into(),
        ]
    };
    let run = |v: Vec<String>| ok(&v.iter().map(String::as_str).collect::<Vec<_>>());
    run(args(&a));
    let mut np = args(&b);
    np.push("--no-probs".into());
    run(np);
    let text = fs::read_to_string(a.join("rec00003.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    for key in ["ecg_id", "D", "L", "K", "labels", "entropy", "probs"] {
        assert!(keys.contains(&key), "missing {key}");
    }
    let (d, k) = (v["D"].as_u64().unwrap() as usize, v["K"].as_u64().unwrap() as usize);
    assert_eq!(k, 5);
    assert_eq!(v["L"], 256);
    assert_eq!(v["labels"].as_array().unwrap().len(), d);
    assert_eq!(v["probs"].as_array().unwrap().len(), d * k);
    let e = Explanation::from_json(&text).unwrap();
    assert_eq!(e.ecg_id, "rec00003");

    let lean: serde_json::Value = serde_json::from_str(&fs::read_to_string(b.join("rec00003.json")).unwrap()).unwrap();
    assert!(lean.get("probs").is_none());
    assert_eq!(lean["labels"], v["labels"]);
}

#[test]
fn analyze_emits_figure_analogs_deterministically() {
    let c = Corpus::new(32, 8);
    let model = c.fit("fit", 6);
    let run = |name: &str| {
        let out = c.path(name);
        ok(&[
            "--config", s(&c.config), "analyze", "--bundle", s(&c.bundle()), "--model", s(&model), "--data",
            s(&c.records()), "--out", s(&out),
        ]);
        out
    };
    let a = run("an_a");
    let b = run("an_b");
    let names: Vec<String> = files(&a).iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for f in [
        "correlations.csv", "correlations.txt", "correlations.svg", "keypoints.csv", "keypoints.svg", "qrs_window.csv",
        "uncertainty_phase.csv", "gradcam_phase.csv", "phase.svg", "phase_summary.json", "age_trends.json",
        "age_trends.svg", "proportions.csv",
    ] {
        assert!(names.iter().any(|n| n == f), "missing {f}");
    }
    for n in &names {
        assert_eq!(digest(&a.join(n)), digest(&b.join(n)), "{n} differs between runs");
    }

    // Four label rows plus the target row, one cell per cluster.
    let heat = fs::read_to_string(a.join("correlations.svg")).unwrap();
    assert_eq!(heat.matches(r#"class="cell""#).count(), 5 * 6);
    let csv = fs::read_to_string(a.join("correlations.csv")).unwrap();
    let ns = csv
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(3).is_some_and(|p| p.parse::<f64>().is_ok_and(|p| p > 0.05)))
        .count();
    assert_eq!(heat.matches(r#"class="ns""#).count(), ns);

    // TP on a 0 to 1 scale; the other keypoints share a reduced scale.
    let bars = fs::read_to_string(a.join("keypoints.svg")).unwrap();
    let panels: Vec<(String, f64)> = bars
        .split("<g class=\"panel\"")
        .skip(1)
        .map(|p| (attr(p, "data-keypoint").to_string(), attr(p, "data-scale").parse().unwrap()))
        .collect();
    assert_eq!(panels.len(), 10);
    let tp = panels.iter().find(|(n, _)| n == "TP").unwrap().1;
    assert_eq!(tp, 1.0);
    let others: Vec<f64> = panels.iter().filter(|(n, _)| n != "TP").map(|p| p.1).collect();
    assert!(others.windows(2).all(|w| w[0] == w[1]));
    assert!(others[0] <= 1.0);

    let phase = fs::read_to_string(a.join("uncertainty_phase.csv")).unwrap();
    assert_eq!(phase.lines().next().unwrap(), "group,P,QRS,T,TP");
}

#[test]
fn analyze_without_keypoints_warns_and_succeeds() {
    let c = Corpus::new(10, 9);
    let model = c.fit("fit", 4);
    let flat = c.path("flat");
    fs::create_dir_all(&flat).unwrap();
    let mut csv = String::from("t");
    for i in 0..12 {
        csv += &format!(",ch{i}");
    }
    csv.push('\n');
    for t in 0..256 {
        csv += &format!("{:.2}{}\n", t as f64 / 100.0, ",0".repeat(12));
    }
    fs::write(flat.join("flat.csv"), csv).unwrap();
    let out = c.path("an");
    let r = ok(&["analyze", "--bundle", s(&c.bundle()), "--model", s(&model), "--data", s(&flat), "--out", s(&out)]);
    assert!(String::from_utf8_lossy(&r.stderr).contains("no keypoints"));
    let table = fs::read_to_string(out.join("keypoints.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    for line in table.lines().skip(1) {
        assert!(line.split(',').skip(1).all(str::is_empty), "{line}");
    }
}

#[test]
fn bench_table_has_the_five_columns() {
    let c = Corpus::new(40, 10);
    let model = c.fit("fit", 6);
    let out = c.path("bench");
    let run = |out: &Path| {
        ok(&[
            "--config", s(&c.config), "bench", "--bundle", s(&c.bundle()), "--model", s(&model), "--data",
            s(&c.records()), "--out", s(out),
        ])
    };
    run(&out);
    let csv = fs::read_to_string(out.join("benchmark.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    for col in ["ResNet/Labels", "RFsig/Labels", "RFsig/Pred", "RFclus/Labels", "RFclus/Pred"] {
        assert!(header.iter().any(|h| h.starts_with(col)), "missing {col} in {header:?}");
    }
    let again = c.path("bench2");
    run(&again);
    assert_eq!(digest(&out.join("benchmark.csv")), digest(&again.join("benchmark.csv")));
}

#[test]
fn ablate_with_default_grids_emits_seven_plus_five_rows() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("small.json");
    fs::write(&config, SMALL).unwrap();
    let pool = dir.path().join("pool");
    let eval = dir.path().join("eval");
    ok(&["--config", s(&config), "synth", "--out", s(&pool), "--n", "1600"]);
    ok(&["--config", s(&config), "--seed", "11", "synth", "--out", s(&eval), "--n", "90"]);
    let out = dir.path().join("ab");
    ok(&[
        "--config", s(&config), "ablate", "--bundle", s(&pool.join("toy.tlxw")), "--data", s(&pool.join("records")),
        "--eval", s(&eval.join("records")), "--out", s(&out),
    ]);
    let rows = fs::read_to_string(out.join("ablation_rows.csv")).unwrap();
    let grids: Vec<&str> = rows.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(grids.iter().filter(|g| **g == "size").count(), 7);
    assert_eq!(grids.iter().filter(|g| **g == "k").count(), 5);
    let sizes = fs::read_to_string(out.join("ablation_sizes.csv")).unwrap();
    assert_eq!(sizes.lines().next().unwrap(), "size,50,100,200,500,1000,1500,all");
    let ks = fs::read_to_string(out.join("ablation_k.csv")).unwrap();
    assert_eq!(ks.lines().next().unwrap(), "K,5,10,20,50,100");
    assert_eq!(sizes.lines().count(), 6);

    // A pool smaller than the largest grid size is a configuration error.
    let r = tlx(&[
        "--config", s(&config), "ablate", "--bundle", s(&eval.join("toy.tlxw")), "--data", s(&eval.join("records")),
        "--out", s(&dir.path().join("ab2")),
    ]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn gradcam_writes_one_map_per_input_sample() {
    let c = Corpus::new(4, 12);
    let out = c.path("gc");
    ok(&["gradcam", "--bundle", s(&c.bundle()), "--data", s(&c.records()), "--out", s(&out), "--target", "2"]);
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("rec00001.gradcam.json")).unwrap()).unwrap();
    assert_eq!(doc["target"], 2);
    assert_eq!(doc["tap"], "l0.conv");
    let map = doc["map"].as_array().unwrap();
    assert_eq!(map.len(), 256);
    assert!(map.iter().all(|v| v.as_f64().unwrap() >= 0.0));
    assert!(out.join("rec00001.gradcam.svg").exists());
    let bad = tlx(&["gradcam", "--bundle", s(&c.bundle()), "--data", s(&c.records()), "--out", s(&out), "--tap", "nope"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn jobs_flag_does_not_change_outputs() {
    let c = Corpus::new(16, 13);
    let model = c.fit("fit", 4);
    for (name, jobs) in [("j1", "1"), ("j2", "2")] {
        ok(&[
            "--jobs", jobs, "explain", "--bundle", s(&c.bundle()), "--model", s(&model), "--data", s(&c.records()),
            "--out", s(&c.path(name)), "--svg",
        ]);
    }
    for f in files(&c.path("j1")) {
        let n = f.file_name().unwrap();
        assert_eq!(digest(&f), digest(&c.path("j2").join(n)));
    }
    assert_eq!(code(&["--jobs", "0", "fit"]), 2);
}
