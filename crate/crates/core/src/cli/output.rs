//! Report emission: deterministic JSON, CSV tables and hand-written SVG.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::composition::RankReport;
use crate::genericity::MonteCarloSummary;
use crate::singularity::SingularCurve;

/// Serializes `value` as pretty JSON with sorted keys and every float
/// written with 17 significant digits. Non-finite floats become `null`.
pub fn to_json_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let tree = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &tree, 0);
    out.push('\n');
    Ok(out)
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            // Short numeric vectors stay on one line.
            if items.len() <= 8 && items.iter().all(|x| x.is_number()) {
                out.push('[');
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, item, depth + 1);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                indent(out, depth + 1);
                write_value(out, item, depth + 1);
                if k + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (k, key) in keys.iter().enumerate() {
                indent(out, depth + 1);
                out.push_str(&Value::String((*key).clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[key.as_str()], depth + 1);
                if k + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(out, depth);
            out.push('}');
        }
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

/// `d.dddddddddddddddde±x`, which is valid JSON and round-trips exactly.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

pub fn write_file(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, contents)
}

pub fn singular_curve_csv(curve: &SingularCurve) -> String {
    let mut out = String::from("x1,x2,class\n");
    for (p, class) in curve.vertices() {
        let _ = writeln!(out, "{},{},{}", format_float(p[0]), format_float(p[1]), class.as_str());
    }
    out
}

pub fn monte_carlo_csv(summary: &MonteCarloSummary) -> String {
    let mut out = String::from("trial,margin,verdict\n");
    for (k, (margin, verdict)) in summary.margins.iter().zip(&summary.verdicts).enumerate() {
        let _ = writeln!(out, "{k},{},{}", format_float(*margin), verdict.as_str());
    }
    out
}

pub fn sigma_grid_csv(report: &RankReport) -> String {
    let n = report.grid.len();
    let mut out = String::new();
    for j in 1..=n {
        let _ = write!(out, "t{j},");
    }
    out.push_str("sigma_min\n");
    for (q, s) in &report.grid_values {
        for v in q {
            let _ = write!(out, "{},", format_float(*v));
        }
        let _ = writeln!(out, "{}", format_float(*s));
    }
    out
}

const SVG_SIZE: f64 = 640.0;
const SVG_PAD: f64 = 24.0;

struct Frame {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Frame {
    fn px(&self, p: &[f64; 2]) -> (f64, f64) {
        let span = SVG_SIZE - 2.0 * SVG_PAD;
        let x = SVG_PAD + (p[0] - self.lo[0]) / (self.hi[0] - self.lo[0]) * span;
        let y = SVG_SIZE - SVG_PAD - (p[1] - self.lo[1]) / (self.hi[1] - self.lo[1]) * span;
        (x, y)
    }
}

fn svg_open(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#,
        s = SVG_SIZE
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
}

/// Singular curve inside its window: fold polylines, central points as
/// circles, cusps as crosses.
pub fn singular_curve_svg(curve: &SingularCurve) -> String {
    let frame = Frame {
        lo: curve.window.lo,
        hi: curve.window.hi,
    };
    let mut out = String::new();
    svg_open(&mut out);
    let (x0, y0) = frame.px(&curve.window.lo);
    let (x1, y1) = frame.px(&curve.window.hi);
    let _ = writeln!(
        out,
        r##"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="#bbbbbb"/>"##,
        x0,
        y1,
        x1 - x0,
        y0 - y1
    );
    for line in &curve.components {
        let mut pts = String::new();
        for p in &line.points {
            let (x, y) = frame.px(p);
            let _ = write!(pts, "{x:.3},{y:.3} ");
        }
        if line.closed {
            if let Some(p) = line.points.first() {
                let (x, y) = frame.px(p);
                let _ = write!(pts, "{x:.3},{y:.3}");
            }
        }
        let _ = writeln!(
            out,
            r##"<polyline class="fold" points="{}" fill="none" stroke="#1f4e9c" stroke-width="1.5"/>"##,
            pts.trim_end()
        );
    }
    for c in &curve.central_points {
        let (x, y) = frame.px(c);
        let _ = writeln!(
            out,
            r##"<circle class="central-point" cx="{x:.3}" cy="{y:.3}" r="4" fill="#2a9d3a"/>"##
        );
    }
    for c in &curve.cusps {
        let (x, y) = frame.px(c);
        let d = 6.0;
        let _ = writeln!(
            out,
            r##"<path class="cusp" d="M{:.3},{:.3} L{:.3},{:.3} M{:.3},{:.3} L{:.3},{:.3}" stroke="#c0392b" stroke-width="2"/>"##,
            x - d,
            y - d,
            x + d,
            y + d,
            x - d,
            y + d,
            x + d,
            y - d
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Histogram of `log10(margin)` over the trials.
pub fn margin_histogram_svg(summary: &MonteCarloSummary, bins: usize) -> String {
    let logs: Vec<f64> = summary
        .margins
        .iter()
        .filter(|m| m.is_finite() && **m > 0.0)
        .map(|m| m.log10())
        .collect();
    let mut out = String::new();
    svg_open(&mut out);
    if logs.is_empty() || bins == 0 {
        out.push_str("</svg>\n");
        return out;
    }
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil().max(lo + 1.0);
    let mut counts = vec![0usize; bins];
    for v in &logs {
        let k = (((v - lo) / (hi - lo)) * bins as f64) as usize;
        counts[k.min(bins - 1)] += 1;
    }
    let peak = *counts.iter().max().unwrap_or(&1) as f64;
    let span = SVG_SIZE - 2.0 * SVG_PAD;
    let width = span / bins as f64;
    for (k, &c) in counts.iter().enumerate() {
        let h = c as f64 / peak * span;
        let _ = writeln!(
            out,
            r##"<rect class="bin" x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#1f4e9c"/>"##,
            SVG_PAD + k as f64 * width,
            SVG_SIZE - SVG_PAD - h,
            (width - 1.0).max(0.5),
            h
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="{:.3}" y="{:.3}" font-size="12">log10 margin {lo} .. {hi}</text>"##,
        SVG_PAD,
        SVG_PAD - 6.0
    );
    out.push_str("</svg>\n");
    out
}
