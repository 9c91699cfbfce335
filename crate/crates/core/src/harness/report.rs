use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::eval::EvalReport;
use crate::Result;

/// One line per row: `method,psnr,ssim,msssim,auc_<column>...,auc_avg`.
pub fn to_csv(report: &EvalReport) -> String {
    let mut out = String::from("method,psnr,ssim,msssim");
    for c in &report.columns {
        let _ = write!(out, ",auc_{c}");
    }
    out.push_str(",auc_avg\n");
    for r in &report.rows {
        let _ = write!(out, "{},{:.6},{:.6},", r.method, r.psnr, r.ssim);
        if let Some(m) = r.msssim {
            let _ = write!(out, "{m:.6}");
        }
        for c in &r.auc {
            let _ = write!(out, ",{:.6}", c.auc);
        }
        let _ = writeln!(out, ",{:.6}", r.auc_avg);
    }
    out
}

pub fn to_json(report: &EvalReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Two stacked line panels over the report rows: mean PSNR and average AUC.
pub fn to_svg(report: &EvalReport, title: &str) -> String {
    let (w, panel_h, pad) = (640.0, 200.0, 50.0);
    let n = report.rows.len().max(1);
    let x_at = |i: usize| {
        if n == 1 {
            w / 2.0
        } else {
            pad + i as f64 * (w - 2.0 * pad) / (n - 1) as f64
        }
    };
    let mut svg = String::new();
    let total_h = 2.0 * panel_h + 3.0 * pad;
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{total_h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let panels: [(&str, Vec<f64>, f64, f64); 2] = [
        ("PSNR (dB)", report.rows.iter().map(|r| r.psnr).collect(), 0.0, 0.0),
        ("average AUC", report.rows.iter().map(|r| r.auc_avg).collect(), 0.0, 1.0),
    ];
    for (k, (name, vals, lo0, hi0)) in panels.iter().enumerate() {
        let top = pad + k as f64 * (panel_h + pad);
        let (mut lo, mut hi) = (*lo0, *hi0);
        if hi <= lo {
            lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(hi > lo) {
                lo -= 1.0;
                hi += 1.0;
            }
        }
        let y_at = |v: f64| top + panel_h - (v - lo) / (hi - lo) * panel_h;
        let _ = writeln!(
            svg,
            r##"<rect x="{pad}" y="{top}" width="{}" height="{panel_h}" fill="none" stroke="#999"/>"##,
            w - 2.0 * pad
        );
        let _ = writeln!(svg, r#"<text x="{pad}" y="{}">{name}</text>"#, top - 6.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{hi:.3}</text>"#, pad - 4.0, top + 10.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{lo:.3}</text>"#, pad - 4.0, top + panel_h);
        let pts: Vec<String> = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x_at(i), y_at(v)))
            .collect();
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
            pts.join(" ")
        );
        for (i, &v) in vals.iter().enumerate() {
            let _ = writeln!(svg, r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4"/>"##, x_at(i), y_at(v));
        }
    }
    let base = 2.0 * panel_h + 2.0 * pad + 16.0;
    for (i, r) in report.rows.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{base}" text-anchor="middle">{}</text>"#,
            x_at(i),
            escape(&r.method)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `<stem>.csv`, `<stem>.json` and `<stem>.svg` under `dir`.
pub fn write_reports(report: &EvalReport, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let files = [
        (dir.join(format!("{stem}.csv")), to_csv(report)),
        (dir.join(format!("{stem}.json")), to_json(report)?),
        (dir.join(format!("{stem}.svg")), to_svg(report, stem)),
    ];
    let mut out = Vec::new();
    for (path, body) in files {
        std::fs::write(&path, body)?;
        out.push(path);
    }
    Ok(out)
}

/// Re-renders the CSV and SVG from a saved JSON report.
pub fn render_from_json(json_path: &Path, dir: &Path) -> Result<Vec<PathBuf>> {
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(json_path)?)?;
    let stem = json_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    std::fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{stem}.csv"));
    let svg = dir.join(format!("{stem}.svg"));
    std::fs::write(&csv, to_csv(&report))?;
    std::fs::write(&svg, to_svg(&report, stem))?;
    Ok(vec![csv, svg])
}
