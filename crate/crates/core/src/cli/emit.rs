//! CSV tables and a dependency-free SVG line chart.

use std::fmt::Write as _;

use crate::bertproxy::{CheckpointAnalysis, MatrixRecord, SweepCurve};
use crate::error::{domain, Result};

use super::report::CompareRow;

fn to_string(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("CSV is UTF-8")
}

/// Shortest round-trip representation, exponent form for large or small magnitudes.
fn num(v: f64) -> String {
    if v.is_finite() {
        serde_json::to_string(&v).expect("finite float")
    } else {
        v.to_string()
    }
}

fn head_field(h: Option<usize>) -> String {
    h.map(|h| h.to_string()).unwrap_or_default()
}

fn record_fields(r: &MatrixRecord) -> [String; 4] {
    [r.name(), r.layer.to_string(), r.kind.label().to_string(), head_field(r.head)]
}

/// Columns L, N, B_ours_raw, B_edelman_raw, B_ours_norm, B_edelman_norm.
pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["L", "N", "B_ours_raw", "B_edelman_raw", "B_ours_norm", "B_edelman_norm"]).expect("write");
    for r in rows {
        w.write_record([
            r.depth.to_string(),
            r.hidden.to_string(),
            num(r.b_ours_raw),
            num(r.b_edelman_raw),
            num(r.b_ours_norm),
            num(r.b_edelman_norm),
        ])
        .expect("write");
    }
    to_string(w)
}

/// One row per (matrix, p) with term(p)/term(0); undefined curves have an
/// empty ratio and `defined = false`.
pub fn sweep_csv(curves: &[SweepCurve], records: &[MatrixRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "layer", "kind", "head", "p", "ratio", "defined"]).expect("write");
    for (c, r) in curves.iter().zip(records) {
        for (i, p) in c.p.iter().enumerate() {
            let ratio = c.ratio.as_ref().map(|v| num(v[i])).unwrap_or_default();
            let [name, layer, kind, head] = record_fields(r);
            w.write_record([name, layer, kind, head, num(*p), ratio, c.ratio.is_some().to_string()]).expect("write");
        }
    }
    to_string(w)
}

/// One row per singular value; min(rows, cols) rows per matrix.
pub fn spectra_csv(a: &CheckpointAnalysis) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "layer", "kind", "head", "index", "sigma"]).expect("write");
    for r in &a.records {
        for (i, s) in r.spectrum.values().iter().enumerate() {
            let [name, layer, kind, head] = record_fields(r);
            w.write_record([name, layer, kind, head, (i + 1).to_string(), num(*s)]).expect("write");
        }
    }
    to_string(w)
}

/// Mixed, Frobenius and spectral norms of every matrix of every checkpoint.
pub fn norm_scaling_csv(analyses: &[CheckpointAnalysis]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["L", "N", "name", "layer", "kind", "head", "rows", "cols", "spectral", "frobenius", "mixed21", "mixed11"])
        .expect("write");
    for a in analyses {
        for r in &a.records {
            let [name, layer, kind, head] = record_fields(r);
            w.write_record([
                a.depth.to_string(),
                a.hidden.to_string(),
                name,
                layer,
                kind,
                head,
                r.rows.to_string(),
                r.cols.to_string(),
                num(r.spectral_norm),
                num(r.frobenius),
                num(r.mixed21),
                num(r.mixed11),
            ])
            .expect("write");
        }
    }
    to_string(w)
}

/// A labelled polyline.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Three significant digits, switching to exponent form outside [1e-3, 1e5).
fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        return format!("{v:.2e}");
    }
    let digits = (2 - a.log10().floor() as i32).max(0) as usize;
    let s = format!("{v:.digits$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// SVG 1.1 line chart on a fixed 800x600 viewport with optional log-scaled y.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_y: bool) -> Result<String> {
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if pts.is_empty() {
        return Err(domain("chart has no points"));
    }
    if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(domain("chart points must be finite"));
    }
    if log_y && pts.iter().any(|&(_, y)| y <= 0.0) {
        return Err(domain("log-scaled y axis needs positive values"));
    }
    let ty = |y: f64| if log_y { y.log10() } else { y };
    let (mut x0, mut x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut y0, mut y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(ty(p.1)), b.max(ty(p.1))));
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 == y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="30" font-size="18" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);

    let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for x in xs {
        let px = sx(x);
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 6.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, TOP + ph + 22.0, fmt_tick(x));
    }
    for k in 0..=5 {
        let t = y0 + (y1 - y0) * k as f64 / 5.0;
        let v = if log_y { 10f64.powf(t) } else { t };
        let py = sy(v);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#dddddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" font-size="12" text-anchor="end">{}</text>"#, LEFT - 8.0, py + 4.0, fmt_tick(v));
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 20.0,
        escape(x_label)
    );
    let ylab = if log_y { format!("{y_label} (log scale)") } else { y_label.to_string() };
    let _ = writeln!(
        s,
        r#"<text x="24" y="{}" font-size="14" text-anchor="middle" transform="rotate(-90 24 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&ylab)
    );

    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut p = ser.points.clone();
        p.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
        for &(x, y) in &p {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = TOP + 20.0 + 20.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, LEFT + 15.0, LEFT + 45.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="13">{}</text>"#, LEFT + 52.0, ly + 4.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two() -> Vec<Series> {
        vec![
            Series { label: "B_ours".into(), points: vec![(2.0, 1.0), (4.0, 1.8), (8.0, 3.2)] },
            Series { label: "B_Edelman".into(), points: vec![(2.0, 1.0), (4.0, 30.0), (8.0, 900.0)] },
        ]
    }

    #[test]
    fn chart_is_well_formed() {
        let svg = line_chart("t <&>", "L", "normalized", &two(), true).unwrap();
        assert!(svg.contains(r#"width="800" height="600""#));
        assert!(svg.contains("t &lt;&amp;&gt;"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 6);
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn log_axis_rejects_nonpositive() {
        let s = vec![Series { label: "a".into(), points: vec![(1.0, 0.0)] }];
        assert!(line_chart("t", "x", "y", &s, true).is_err());
        assert!(line_chart("t", "x", "y", &s, false).is_ok());
        assert!(line_chart("t", "x", "y", &[], false).is_err());
    }

    #[test]
    fn tick_format() {
        assert_eq!(fmt_tick(1.0), "1");
        assert_eq!(fmt_tick(12.345), "12.3");
        assert_eq!(fmt_tick(0.5), "0.5");
        assert_eq!(fmt_tick(123456.0), "1.23e5");
    }

    #[test]
    fn compare_header() {
        let csv = compare_csv(&[]);
        assert_eq!(csv, "L,N,B_ours_raw,B_edelman_raw,B_ours_norm,B_edelman_norm\n");
    }
}
