//! Subcommand implementations. Work is computed record-parallel; files are
//! written afterwards from a single thread.

use std::path::PathBuf;

use serde::Serialize;
use tlx_core::analytics::{
    ablation_grid, age_bin, age_bin_label, age_group_trends, benchmark, correlation_report, grid_csv,
    keypoint_frequencies, masked_proportions, phase_means, qrs_window_frequency, raw_matrix,
    uncertainty_by_phase, Annotated, PhaseInput, PhaseTable, MAX_RAW_FEATURES,
};
use tlx_core::cluster::ExplainerModel;
use tlx_core::explain::{explain_all, fit_explainer, Explanation};
use tlx_core::net::{gradcam as grad_cam, ChannelMerge, Head, Network, ReferenceArch, WeightsBundle};
use tlx_core::par;
use tlx_core::signal::{save_ecg, stack_beats, synth_corpus, CorpusSpec, EcgFormat, EcgRecord};
use tlx_core::study::fit_linear_head;
use tlx_core::{Error, Matrix};

use crate::config::{existing, out_dir, RunConfig};
use crate::data::{labels_of, load_all, Loaded};
use crate::error::{write, CliError, CliResult};
use crate::svg::{self, Colors};
use crate::Common;

fn json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Data(format!("serialization failed: {e}")))
}

fn load_bundle(cfg: &RunConfig, common: &Common) -> CliResult<(WeightsBundle, Network)> {
    let path = existing(common.bundle.clone(), &cfg.paths.bundle, "bundle")?;
    let bundle = WeightsBundle::load(&path)?;
    let net = Network::new(&bundle)?;
    Ok((bundle, net))
}

/// Taps must name top-level layers of the bundle.
fn check_taps(bundle: &WeightsBundle, taps: &[String]) -> CliResult<()> {
    for t in taps {
        if !bundle.arch.iter().any(|l| l.name() == t) {
            return Err(CliError::Config(format!("`{t}` is not a top-level layer of the bundle")));
        }
    }
    Ok(())
}

fn load_model(cfg: &RunConfig, flag: Option<PathBuf>) -> CliResult<ExplainerModel> {
    let path = existing(flag, &cfg.paths.explainer, "explainer model")?;
    Ok(ExplainerModel::load(&path)?)
}

fn data_path(cfg: &RunConfig, common: &Common) -> CliResult<PathBuf> {
    existing(common.data.clone(), &cfg.paths.data, "data")
}

fn records(loaded: &[Loaded]) -> Vec<EcgRecord> {
    loaded.iter().map(|l| l.record.clone()).collect()
}

fn outputs(net: &Network, recs: &[EcgRecord]) -> CliResult<Vec<Vec<f64>>> {
    let none: &[&str] = &[];
    Ok(par::try_map(recs, |r| net.forward(r, none).map(|o| o.output))?)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// A single linear output is treated as an age estimate and binned; any
/// other head groups by its top-scoring output.
fn phase_group(head: Head, output: &[f64]) -> i64 {
    match (head, output.len()) {
        (Head::Linear, 1) => age_bin(output[0]),
        _ => argmax(output) as i64,
    }
}

fn group_name(cfg: &RunConfig, head: Head, n_out: usize, g: i64) -> String {
    match (head, n_out) {
        (Head::Linear, 1) => age_bin_label(g),
        _ => cfg.label_name(g as usize),
    }
}

fn proportions_of(ex: &[Explanation], recs: &[EcgRecord]) -> CliResult<Vec<Vec<f64>>> {
    Ok(ex
        .iter()
        .zip(recs)
        .map(|(e, r)| masked_proportions(e, &r.valid_range()))
        .collect::<Result<Vec<_>, Error>>()?)
}

fn cluster_names(k: usize) -> Vec<String> {
    (0..k).map(|c| format!("c{c}")).collect()
}

pub fn synth(cfg: &RunConfig, out: Option<PathBuf>) -> CliResult<()> {
    let out = out_dir(out, &cfg.paths.out)?;
    let s = &cfg.synth;
    if s.n_records == 0 {
        return Err(CliError::Config("synth needs at least one record".into()));
    }
    let corpus = synth_corpus(&CorpusSpec {
        n_records: s.n_records,
        fs: s.fs,
        length: s.arch.input_length,
        noise_std_mv: s.noise_std_mv,
        age_range: s.age_range,
        seed: s.seed,
        ..CorpusSpec::default()
    })?;
    let recs: Vec<EcgRecord> = corpus.iter().map(|(r, _)| r.clone()).collect();
    let labels: Vec<Vec<u8>> = recs.iter().map(|r| r.labels().unwrap_or_default().to_vec()).collect();
    let mut bundle = s.arch.build(s.seed)?;
    fit_linear_head(&mut bundle, &recs, &labels, s.ridge)?;

    let dir = out.join("records");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let n_labels = labels.first().map_or(0, Vec::len);
    let mut csv = String::from("id");
    for i in 0..n_labels {
        csv += &format!(",{}", cfg.label_name(i));
    }
    csv += ",target\n";
    for (rec, kps) in &corpus {
        save_ecg(rec, &dir.join(format!("{}.tlxe", rec.id)), EcgFormat::Bin).map_err(io_from)?;
        write(&dir.join(format!("{}.keypoints.json", rec.id)), json(kps)?)?;
        let ys: Vec<String> = rec.labels().unwrap_or_default().iter().map(u8::to_string).collect();
        csv += &format!(
            "{},{},{}\n",
            rec.id,
            ys.join(","),
            rec.target().map_or(String::new(), |t| t.to_string())
        );
    }
    write(&out.join("labels.csv"), csv)?;
    bundle.save(&out.join("toy.tlxw")).map_err(io_from)?;
    log::info!("wrote {} records and toy.tlxw to {}", corpus.len(), out.display());
    Ok(())
}

/// Errors from writing outputs are I/O failures, not data errors.
fn io_from(e: Error) -> CliError {
    match e {
        Error::Io { .. } => CliError::Io(e.to_string()),
        other => other.into(),
    }
}

#[derive(Serialize)]
struct FitReport {
    n_records: usize,
    n_samples: usize,
    n_iters: usize,
    k: usize,
    c: usize,
    taps: Vec<String>,
    inertia: f64,
    tau: f64,
    seed: u64,
}

pub fn fit(cfg: &RunConfig, common: Common) -> CliResult<()> {
    let (bundle, net) = load_bundle(cfg, &common)?;
    check_taps(&bundle, &cfg.explainer.taps)?;
    let data = data_path(cfg, &common)?;
    let out = out_dir(common.out, &cfg.paths.out)?;
    let loaded = load_all(&data, false)?;
    let recs = records(&loaded);
    let model = fit_explainer(&net, &recs, &cfg.explainer)?;
    model.save(&out.join("model.tlxc")).map_err(io_from)?;
    let report = FitReport {
        n_records: recs.len(),
        n_samples: model.fit_meta.n_samples,
        n_iters: model.fit_meta.n_iters,
        k: model.k(),
        c: model.c(),
        taps: model.fit_meta.taps.clone(),
        inertia: model.inertia(),
        tau: model.tau(),
        seed: model.fit_meta.seed,
    };
    write(&out.join("fit_report.json"), json(&report)?)?;
    log::info!("fitted K={} on {} records", model.k(), recs.len());
    Ok(())
}

pub fn explain(cfg: &RunConfig, common: Common, model: Option<PathBuf>, with_svg: bool, probs: bool) -> CliResult<()> {
    let (_, net) = load_bundle(cfg, &common)?;
    let model = load_model(cfg, model)?;
    let data = data_path(cfg, &common)?;
    let out = out_dir(common.out, &cfg.paths.out)?;
    let loaded = load_all(&data, with_svg)?;
    let recs = records(&loaded);
    let ex = explain_all(&net, &model, &recs)?;
    let colors = Colors::new(&cfg.plot.colormap);
    for ((e, l), rec) in ex.iter().zip(&loaded).zip(&recs) {
        write(&out.join(format!("{}.json", e.ecg_id)), e.to_json(probs)? + "\n")?;
        if with_svg {
            let beats = stack_beats(rec, &l.keypoints.r_peaks, cfg.plot.window_ms);
            if beats.is_empty() {
                log::warn!("{}: no complete beats for the stacked plot", e.ecg_id);
            }
            let doc = svg::stacked_beats(e, &beats, cfg.plot.lead, &colors, cfg.plot.opacity_from_entropy);
            write(&out.join(format!("{}.svg", e.ecg_id)), doc)?;
        }
    }
    log::info!("explained {} records", ex.len());
    Ok(())
}

fn gradcam_tap(cfg: &RunConfig, bundle: &WeightsBundle, net: &Network) -> CliResult<String> {
    if let Some(t) = &cfg.gradcam.tap {
        check_taps(bundle, std::slice::from_ref(t))?;
        return Ok(t.clone());
    }
    if bundle.arch.iter().any(|l| l.name() == ReferenceArch::STEM_CONV) {
        return Ok(ReferenceArch::STEM_CONV.to_string());
    }
    net.default_taps()
        .first()
        .cloned()
        .ok_or_else(|| CliError::Config("no Grad-CAM tap configured and the bundle declares none".into()))
}

fn gradcam_maps(
    cfg: &RunConfig,
    net: &Network,
    tap: &str,
    recs: &[EcgRecord],
    outs: &[Vec<f64>],
) -> CliResult<Vec<(usize, Vec<f64>)>> {
    let items: Vec<(&EcgRecord, &Vec<f64>)> = recs.iter().zip(outs).collect();
    Ok(par::try_map(&items, |(r, o)| {
        let target = cfg.gradcam.target.unwrap_or_else(|| argmax(o));
        grad_cam(net, r, target, tap, cfg.gradcam.merge).map(|m| (target, m))
    })?)
}

#[derive(Serialize)]
struct PhaseSummary {
    phases: Vec<&'static str>,
    uncertainty: [Option<f64>; 4],
    gradcam: Option<[Option<f64>; 4]>,
}

pub fn analyze(cfg: &RunConfig, common: Common, model: Option<PathBuf>) -> CliResult<()> {
    let (bundle, net) = load_bundle(cfg, &common)?;
    let model = load_model(cfg, model)?;
    let data = data_path(cfg, &common)?;
    let out = out_dir(common.out, &cfg.paths.out)?;
    let loaded = load_all(&data, true)?;
    let recs = records(&loaded);
    let ex = explain_all(&net, &model, &recs)?;
    let outs = outputs(&net, &recs)?;
    let props = proportions_of(&ex, &recs)?;
    let k = model.k();
    let colors = Colors::new(&cfg.plot.colormap);
    let head = bundle.meta.head;
    let n_out = outs.first().map_or(0, Vec::len);

    let mut outcomes: Vec<(String, Vec<f64>)> = Vec::new();
    if let Ok(labels) = labels_of(&loaded) {
        let n = labels.first().map_or(0, Vec::len);
        for i in 0..n {
            outcomes.push((cfg.label_name(i), labels.iter().map(|y| f64::from(y[i])).collect()));
        }
    }
    let targets: Option<Vec<f64>> = recs.iter().map(EcgRecord::target).collect();
    if let Some(t) = &targets {
        outcomes.push(("target".into(), t.clone()));
    }
    if outcomes.is_empty() {
        log::warn!("records carry no labels or targets; skipping correlations");
    } else {
        let report = correlation_report(&props, &outcomes)?;
        write(&out.join("correlations.csv"), report.to_csv())?;
        write(&out.join("correlations.txt"), report.to_text(cfg.analysis.alpha))?;
        write(&out.join("correlations.svg"), svg::correlation_heatmap(&report, cfg.analysis.alpha))?;
    }

    let annotated: Vec<Annotated<'_>> = ex
        .iter()
        .zip(&loaded)
        .map(|(e, l)| Annotated {
            explanation: e,
            keypoints: &l.keypoints,
            fs: l.record.fs(),
        })
        .collect();
    let have_keypoints = loaded.iter().any(|l| !l.keypoints.r_peaks.is_empty());
    if !have_keypoints {
        log::warn!("no keypoints detected in any record; keypoint and phase values are absent");
    }
    let table = keypoint_frequencies(&annotated, &cfg.frequency)?;
    write(&out.join("keypoints.csv"), table.to_csv())?;
    write(&out.join("keypoints.svg"), svg::keypoint_bars(&table, &colors))?;
    let qrs = qrs_window_frequency(&annotated, cfg.frequency.window_ms)?;
    let mut qcsv = String::from("cluster,qrs_window\n");
    for (c, v) in qrs.iter().enumerate() {
        qcsv += &format!("{c},{}\n", v.map_or(String::new(), |x| x.to_string()));
    }
    write(&out.join("qrs_window.csv"), qcsv)?;

    let groups: Vec<i64> = outs.iter().map(|o| phase_group(head, o)).collect();
    let label = |g: i64| group_name(cfg, head, n_out, g);
    let ex_refs: Vec<&Explanation> = ex.iter().collect();
    let kp_refs: Vec<_> = loaded.iter().map(|l| &l.keypoints).collect();
    let unc = uncertainty_by_phase(&ex_refs, &kp_refs, &groups, &cfg.contrast)?;
    write(&out.join("uncertainty_phase.csv"), unc.to_csv(label))?;

    let mut phase_tables: Vec<(String, PhaseTable)> = vec![("uncertainty".into(), unc.clone())];
    let mut cam_pooled = None;
    if cfg.analysis.gradcam {
        let tap = gradcam_tap(cfg, &bundle, &net)?;
        let maps = gradcam_maps(cfg, &net, &tap, &recs, &outs)?;
        let inputs: Vec<PhaseInput<'_>> = maps
            .iter()
            .zip(&loaded)
            .zip(&groups)
            .map(|(((_, m), l), &g)| PhaseInput {
                values: m,
                len: l.record.len(),
                keypoints: &l.keypoints,
                group: g,
            })
            .collect();
        let cam = phase_means(&inputs, Some(&cfg.contrast))?;
        write(&out.join("gradcam_phase.csv"), cam.to_csv(label))?;
        cam_pooled = Some(cam.pooled());
        phase_tables.push((format!("gradcam ({tap})"), cam));
    }
    let blocks: Vec<(String, &PhaseTable, Vec<String>)> = phase_tables
        .iter()
        .map(|(t, tb)| (t.clone(), tb, tb.groups.iter().map(|&g| label(g)).collect()))
        .collect();
    write(&out.join("phase.svg"), svg::phase_heatmap(&blocks))?;
    let summary = PhaseSummary {
        phases: tlx_core::analytics::Phase::ALL.iter().map(|p| p.name()).collect(),
        uncertainty: unc.pooled(),
        gradcam: cam_pooled,
    };
    write(&out.join("phase_summary.json"), json(&summary)?)?;

    if let Some(t) = &targets {
        let groups: Vec<Vec<usize>> = if cfg.analysis.age_groups.is_empty() {
            (0..k).map(|c| vec![c]).collect()
        } else {
            cfg.analysis.age_groups.clone()
        };
        let trends = age_group_trends(&props, t, &groups)?;
        write(&out.join("age_trends.json"), json(&trends)?)?;
        write(&out.join("age_trends.svg"), svg::age_trends(&trends, &colors))?;
    }

    let prop_csv = {
        let mut s = format!("id,{}\n", cluster_names(k).join(","));
        for (e, p) in ex.iter().zip(&props) {
            let cells: Vec<String> = p.iter().map(f64::to_string).collect();
            s += &format!("{},{}\n", e.ecg_id, cells.join(","));
        }
        s
    };
    write(&out.join("proportions.csv"), prop_csv)?;
    log::info!("analysed {} records", ex.len());
    Ok(())
}

pub fn bench(cfg: &RunConfig, common: Common, model: Option<PathBuf>) -> CliResult<()> {
    let (_, net) = load_bundle(cfg, &common)?;
    let model = load_model(cfg, model)?;
    let data = data_path(cfg, &common)?;
    let out = out_dir(common.out, &cfg.paths.out)?;
    let loaded = load_all(&data, false)?;
    let labels = labels_of(&loaded)?;
    let recs = records(&loaded);
    let ex = explain_all(&net, &model, &recs)?;
    let scores = outputs(&net, &recs)?;
    let raw = raw_matrix(&recs, MAX_RAW_FEATURES)?;
    let props = Matrix::from_rows(&proportions_of(&ex, &recs)?)?;
    let table = benchmark(&labels, &scores, &raw, &props, &cfg.cv)?;
    write(&out.join("benchmark.csv"), table.to_csv())?;
    write(&out.join("benchmark.txt"), table.to_text())?;
    write(&out.join("benchmark.json"), json(&table)?)?;
    Ok(())
}

fn row_csv(tables: &tlx_core::analytics::AblationTables) -> String {
    use tlx_core::analytics::BinaryMetrics;
    let mut s = String::from("grid,label,n_fit,k");
    for m in BinaryMetrics::NAMES {
        s += &format!(",{m}_mean,{m}_std");
    }
    s.push('\n');
    for (grid, rows) in [("size", &tables.sizes), ("k", &tables.ks)] {
        for r in rows.iter() {
            s += &format!("{grid},{},{},{}", r.label, r.n_fit, r.k);
            for (m, d) in r.mean.values().iter().zip(r.std.values()) {
                let f = |v: &Option<f64>| v.map_or(String::new(), |x| x.to_string());
                s += &format!(",{},{}", f(m), f(&d));
            }
            s.push('\n');
        }
    }
    s
}

pub fn ablate(cfg: &RunConfig, common: Common, eval: Option<PathBuf>) -> CliResult<()> {
    let (bundle, net) = load_bundle(cfg, &common)?;
    check_taps(&bundle, &cfg.ablation.explainer.taps)?;
    let pool_path = data_path(cfg, &common)?;
    let out = out_dir(common.out, &cfg.paths.out)?;
    let pool = records(&load_all(&pool_path, false)?);
    let eval_loaded = match eval {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::Config(format!("eval path {} does not exist", p.display())));
            }
            load_all(&p, false)?
        }
        None => load_all(&pool_path, false)?,
    };
    let labels = labels_of(&eval_loaded)?;
    let tables = ablation_grid(&net, &pool, &records(&eval_loaded), &labels, &cfg.ablation)?;
    write(&out.join("ablation_sizes.csv"), grid_csv("size", &tables.sizes))?;
    write(&out.join("ablation_k.csv"), grid_csv("K", &tables.ks))?;
    write(&out.join("ablation_rows.csv"), row_csv(&tables))?;
    write(&out.join("ablation.json"), json(&tables)?)?;
    Ok(())
}

#[derive(Serialize)]
struct GradcamDoc<'a> {
    ecg_id: &'a str,
    tap: &'a str,
    target: usize,
    merge: ChannelMerge,
    map: &'a [f64],
}

pub fn gradcam(cfg: &RunConfig, common: Common) -> CliResult<()> {
    let (bundle, net) = load_bundle(cfg, &common)?;
    let data = data_path(cfg, &common)?;
    let out = out_dir(common.out, &cfg.paths.out)?;
    let recs = records(&load_all(&data, false)?);
    let outs = outputs(&net, &recs)?;
    let tap = gradcam_tap(cfg, &bundle, &net)?;
    let maps = gradcam_maps(cfg, &net, &tap, &recs, &outs)?;
    for (rec, (target, map)) in recs.iter().zip(&maps) {
        let doc = GradcamDoc {
            ecg_id: &rec.id,
            tap: &tap,
            target: *target,
            merge: cfg.gradcam.merge,
            map,
        };
        write(&out.join(format!("{}.gradcam.json", rec.id)), json(&doc)?)?;
        let title = format!("{} target {} at {}", rec.id, target, tap);
        write(
            &out.join(format!("{}.gradcam.svg", rec.id)),
            svg::saliency(&title, &rec.lead(cfg.plot.lead), map),
        )?;
    }
    Ok(())
}
