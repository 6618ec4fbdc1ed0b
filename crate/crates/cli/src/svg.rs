//! Minimal SVG 1.1 writer and the figure types emitted by the commands.
//!
//! Output contains no timestamps and all coordinates are printed with fixed
//! precision, so the same inputs give the same bytes.

use std::fmt::Write as _;

use tlx_core::analytics::{CorrelationReport, GroupTrend, KeypointTable, Phase, PhaseTable};
use tlx_core::explain::Explanation;
use tlx_core::signal::{BeatWindow, Keypoint, N_LEADS};

/// Qualitative 20-colour palette; cluster `i` uses entry `i mod 20`.
pub const PALETTE: [&str; 20] = [
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c", "#98df8a", "#d62728", "#ff9896", "#9467bd", "#c5b0d5",
    "#8c564b", "#c49c94", "#e377c2", "#f7b6d2", "#7f7f7f", "#c7c7c7", "#bcbd22", "#dbdb8d", "#17becf", "#9edae5",
];

pub struct Colors(Vec<String>);

impl Colors {
    pub fn new(custom: &[String]) -> Self {
        if custom.is_empty() {
            Colors(PALETTE.iter().map(|s| s.to_string()).collect())
        } else {
            Colors(custom.to_vec())
        }
    }

    pub fn get(&self, i: usize) -> &str {
        &self.0[i % self.0.len()]
    }
}

fn num(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Svg {
            body: String::new(),
            width,
            height,
        }
    }

    pub fn raw(&mut self, s: &str) {
        self.body.push_str(s);
        self.body.push('\n');
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, extra: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}"{extra}/>"#,
            num(x),
            num(y),
            num(w),
            num(h)
        );
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="1"/>"#,
            num(x1),
            num(y1),
            num(x2),
            num(y2)
        );
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str, class: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle class="{class}" cx="{}" cy="{}" r="{}" fill="{fill}"/>"#,
            num(cx),
            num(cy),
            num(r)
        );
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="{}" text-anchor="{anchor}">{}</text>"#,
            num(x),
            num(y),
            num(size),
            esc(s)
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64) {
        let mut p = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            if i > 0 {
                p.push(' ');
            }
            let _ = write!(p, "{},{}", num(*x), num(*y));
        }
        let _ = writeln!(
            self.body,
            r#"<polyline points="{p}" fill="none" stroke="{stroke}" stroke-width="{}"/>"#,
            num(width)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
             <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <!-- build: tlx {ver} -->\n\
             <rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n{body}</svg>\n",
            w = num(self.width),
            h = num(self.height),
            ver = env!("CARGO_PKG_VERSION"),
            body = self.body
        )
    }
}

/// Band opacity of an explanation cell: `1 - u / ln K`, clamped to `[0, 1]`.
pub fn band_opacity(entropy: f64, k: usize) -> f64 {
    if k < 2 {
        return 1.0;
    }
    (1.0 - entropy / (k as f64).ln()).clamp(0.0, 1.0)
}

const BEAT_W: f64 = 600.0;
const BEAT_H: f64 = 48.0;
const MARGIN: f64 = 20.0;

/// One row per beat: the lead trace over background bands coloured by
/// cluster, faded by uncertainty.
pub fn stacked_beats(
    e: &Explanation,
    beats: &[BeatWindow],
    lead: usize,
    colors: &Colors,
    opacity_from_entropy: bool,
) -> String {
    let height = 2.0 * MARGIN + BEAT_H * beats.len().max(1) as f64;
    let mut svg = Svg::new(BEAT_W + 2.0 * MARGIN, height);
    svg.text(MARGIN, MARGIN - 6.0, 11.0, "start", &format!("{} (K={})", e.ecg_id, e.k()));
    let scale = beats
        .iter()
        .flat_map(|b| b.samples.iter().skip(lead).step_by(N_LEADS))
        .fold(0.0f64, |m, &v| m.max(f64::from(v).abs()))
        .max(1e-9);
    let labels = e.labels();
    let entropy = e.entropy();
    for (row, b) in beats.iter().enumerate() {
        let len = b.len();
        let y0 = MARGIN + BEAT_H * row as f64;
        let px = BEAT_W / len.max(1) as f64;
        svg.raw(&format!(r#"<g class="beat" data-r-peak="{}">"#, b.r_peak));
        let mut s = 0;
        while s < len {
            let Ok(cell) = e.cell_of(b.start + s) else { break };
            let mut t = s + 1;
            while t < len && e.cell_of(b.start + t).ok() == Some(cell) {
                t += 1;
            }
            let op = if opacity_from_entropy { band_opacity(entropy[cell], e.k()) } else { 1.0 };
            svg.rect(
                MARGIN + s as f64 * px,
                y0,
                (t - s) as f64 * px,
                BEAT_H,
                colors.get(labels[cell]),
                &format!(r#" fill-opacity="{}" class="band" data-cluster="{}""#, num(op), labels[cell]),
            );
            s = t;
        }
        let pts: Vec<(f64, f64)> = (0..len)
            .map(|i| {
                let v = f64::from(b.samples[i * N_LEADS + lead]) / scale;
                (MARGIN + (i as f64 + 0.5) * px, y0 + BEAT_H * (0.5 - 0.45 * v))
            })
            .collect();
        svg.polyline(&pts, "#000000", 1.0);
        svg.raw("</g>");
    }
    svg.finish()
}

fn diverging(r: f64) -> String {
    let r = r.clamp(-1.0, 1.0);
    let fade = |a: f64| (255.0 * (1.0 - a.abs())).round() as u8;
    if r >= 0.0 {
        format!("rgb(255,{0},{0})", fade(r))
    } else {
        format!("rgb({0},{0},255)", fade(r))
    }
}

const CELL: f64 = 22.0;
const LABEL_W: f64 = 90.0;

/// Outcomes by clusters; a dot marks cells with `p > alpha`.
pub fn correlation_heatmap(report: &CorrelationReport, alpha: f64) -> String {
    let rows = report.outcomes.len();
    let w = LABEL_W + CELL * report.k as f64 + MARGIN;
    let h = 2.0 * MARGIN + CELL * rows as f64 + 14.0;
    let mut svg = Svg::new(w, h);
    for k in 0..report.k {
        svg.text(LABEL_W + CELL * (k as f64 + 0.5), MARGIN + 8.0, 9.0, "middle", &k.to_string());
    }
    let top = MARGIN + 14.0;
    for (i, (name, row)) in report.outcomes.iter().zip(&report.cells).enumerate() {
        let y = top + CELL * i as f64;
        svg.text(LABEL_W - 4.0, y + CELL * 0.65, 10.0, "end", name);
        for (k, c) in row.iter().enumerate() {
            let x = LABEL_W + CELL * k as f64;
            match c {
                Some(p) => {
                    svg.rect(x, y, CELL, CELL, &diverging(p.r), &format!(r#" class="cell" data-r="{}""#, num(p.r)));
                    if p.p > alpha {
                        svg.circle(x + CELL / 2.0, y + CELL / 2.0, 2.0, "#000000", "ns");
                    }
                }
                None => svg.rect(x, y, CELL, CELL, "#cccccc", r#" class="cell""#),
            }
        }
    }
    svg.finish()
}

const PANEL_H: f64 = 90.0;

/// One panel per keypoint with a bar per cluster. The TP interval panel is
/// on a 0 to 1 scale; the others share a reduced scale set by their maximum.
pub fn keypoint_bars(table: &KeypointTable, colors: &Colors) -> String {
    let k = table.k.max(1);
    let tp = Keypoint::ALL.iter().position(|&q| q == Keypoint::Tp);
    let others_max = table
        .freq
        .iter()
        .flat_map(|r| r.iter().enumerate().filter(|(q, _)| Some(*q) != tp).filter_map(|(_, v)| *v))
        .fold(0.0f64, f64::max);
    let reduced = if others_max > 0.0 { (others_max * 10.0).ceil() / 10.0 } else { 0.1 };
    let bar = 6.0;
    let panel_w = bar * k as f64 + 16.0;
    let cols = 5usize;
    let n = table.keypoints.len();
    let rows = n.div_ceil(cols).max(1);
    let mut svg = Svg::new(MARGIN * 2.0 + panel_w * cols as f64, MARGIN * 2.0 + (PANEL_H + 24.0) * rows as f64);
    for (q, name) in table.keypoints.iter().enumerate() {
        let top = if Some(q) == tp { 1.0 } else { reduced };
        let px = MARGIN + panel_w * (q % cols) as f64;
        let py = MARGIN + (PANEL_H + 24.0) * (q / cols) as f64;
        svg.raw(&format!(r#"<g class="panel" data-keypoint="{}" data-scale="{}">"#, esc(name), num(top)));
        svg.text(px, py + 10.0, 10.0, "start", &format!("{name} [0, {}]", num(top)));
        let base = py + 14.0 + PANEL_H;
        svg.line(px, base, px + bar * k as f64, base, "#000000");
        for (c, row) in table.freq.iter().enumerate() {
            if let Some(v) = row[q] {
                let bh = PANEL_H * (v / top).min(1.0);
                svg.rect(px + bar * c as f64, base - bh, bar - 1.0, bh, colors.get(c), r#" class="bar""#);
            }
        }
        svg.raw("</g>");
    }
    svg.finish()
}

fn sequential(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let ch = |a: f64, b: f64| (a + (b - a) * v).round() as u8;
    format!("rgb({},{},{})", ch(247.0, 8.0), ch(251.0, 48.0), ch(255.0, 107.0))
}

/// Groups by phases, one block per table.
pub fn phase_heatmap(tables: &[(String, &PhaseTable, Vec<String>)]) -> String {
    let rows: usize = tables.iter().map(|(_, t, _)| t.groups.len() + 1).sum();
    let w = LABEL_W + 4.0 * CELL * 2.0 + MARGIN;
    let h = 2.0 * MARGIN + CELL * rows as f64 + 14.0;
    let mut svg = Svg::new(w, h);
    for (p, phase) in Phase::ALL.iter().enumerate() {
        svg.text(LABEL_W + CELL * 2.0 * (p as f64 + 0.5), MARGIN + 8.0, 10.0, "middle", phase.name());
    }
    let mut y = MARGIN + 14.0;
    for (title, table, labels) in tables {
        svg.text(4.0, y + CELL * 0.65, 10.0, "start", title);
        y += CELL;
        for (g, row) in table.means.iter().enumerate() {
            svg.text(LABEL_W - 4.0, y + CELL * 0.65, 10.0, "end", &labels[g]);
            for (p, v) in row.iter().enumerate() {
                let x = LABEL_W + CELL * 2.0 * p as f64;
                match v {
                    Some(m) => {
                        svg.rect(x, y, CELL * 2.0, CELL, &sequential(*m), r#" class="cell""#);
                        svg.text(x + CELL, y + CELL * 0.65, 9.0, "middle", &format!("{m:.2}"));
                    }
                    None => svg.rect(x, y, CELL * 2.0, CELL, "#cccccc", r#" class="cell""#),
                }
            }
            y += CELL;
        }
    }
    svg.finish()
}

/// Summed group proportion against the target, with the least-squares line.
pub fn age_trends(trends: &[GroupTrend], colors: &Colors) -> String {
    let pw = 260.0;
    let ph = 160.0;
    let mut svg = Svg::new(MARGIN * 2.0 + pw, MARGIN * 2.0 + (ph + 30.0) * trends.len().max(1) as f64);
    for (i, t) in trends.iter().enumerate() {
        let (x0, x1) = t
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
        let span = if x1 > x0 { x1 - x0 } else { 1.0 };
        let top = MARGIN + (ph + 30.0) * i as f64 + 16.0;
        let sx = |x: f64| MARGIN + pw * (x - x0) / span;
        let sy = |y: f64| top + ph * (1.0 - y.clamp(0.0, 1.0));
        let names: Vec<String> = t.clusters.iter().map(|c| c.to_string()).collect();
        let r = t.pearson.map_or("-".to_string(), |p| format!("{:.3}", p.r));
        svg.text(MARGIN, top - 4.0, 10.0, "start", &format!("clusters {{{}}} r={r}", names.join(",")));
        svg.line(MARGIN, top + ph, MARGIN + pw, top + ph, "#000000");
        svg.line(MARGIN, top, MARGIN, top + ph, "#000000");
        let color = colors.get(t.clusters.first().copied().unwrap_or(0));
        for &(x, y) in &t.points {
            svg.circle(sx(x), sy(y), 1.5, color, "point");
        }
        let line = |x: f64| t.line.slope * x + t.line.intercept;
        svg.polyline(&[(sx(x0), sy(line(x0))), (sx(x0 + span), sy(line(x0 + span)))], "#000000", 1.5);
    }
    svg.finish()
}

/// Lead trace over a saliency strip.
pub fn saliency(title: &str, trace: &[f64], map: &[f64]) -> String {
    let w = BEAT_W * 2.0;
    let h = 140.0;
    let mut svg = Svg::new(w + 2.0 * MARGIN, h + 2.0 * MARGIN);
    svg.text(MARGIN, MARGIN - 6.0, 11.0, "start", title);
    let n = map.len().max(1);
    let hi = map.iter().cloned().fold(0.0f64, f64::max);
    let px = w / n as f64;
    for (i, &v) in map.iter().enumerate() {
        let a = if hi > 0.0 { (v / hi).clamp(0.0, 1.0) } else { 0.0 };
        if a > 0.0 {
            svg.rect(MARGIN + i as f64 * px, MARGIN, px, h, "#d62728", &format!(r#" fill-opacity="{}""#, num(a)));
        }
    }
    let scale = trace.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    let tx = w / trace.len().max(1) as f64;
    let pts: Vec<(f64, f64)> = trace
        .iter()
        .enumerate()
        .map(|(i, v)| (MARGIN + (i as f64 + 0.5) * tx, MARGIN + h * (0.5 - 0.45 * v / scale)))
        .collect();
    svg.polyline(&pts, "#000000", 1.0);
    svg.finish()
}
