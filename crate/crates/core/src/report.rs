//! CSV formatting, SVG line plots and the run manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Scientific notation with 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_row(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(",")
}

/// One labelled polyline.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

/// Renders line series as a standalone SVG document with axes and a legend.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 50.0);
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" font-size="15" text-anchor="middle" font-family="sans-serif">{}</text>"#, w / 2.0, escape(title));
    let (px0, px1, py0, py1) = (sx(x0), sx(x1), sy(y0), sy(y1));
    let _ = writeln!(s, r#"<path d="M{px0:.2},{py1:.2} L{px0:.2},{py0:.2} L{px1:.2},{py0:.2}" stroke="black" fill="none"/>"#);
    for i in 0..=5 {
        let x = x0 + (x1 - x0) * i as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle" font-family="sans-serif">{:.2}</text>"#, sx(x), py0 + 16.0, x);
        let y = y0 + (y1 - y0) * i as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end" font-family="sans-serif">{:.2}</text>"#, px0 - 6.0, sy(y) + 4.0, y);
        let _ = writeln!(s, r##"<line x1="{px0:.2}" x2="{px1:.2}" y1="{0:.2}" y2="{0:.2}" stroke="#e0e0e0"/>"##, sy(y));
    }
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(s, r##"<line x1="{px0:.2}" x2="{px1:.2}" y1="{0:.2}" y2="{0:.2}" stroke="#888"/>"##, sy(0.0));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle" font-family="sans-serif">{}</text>"#, (px0 + px1) / 2.0, h - 12.0, escape(x_label));
    let _ = writeln!(s, r#"<text x="16" y="{:.2}" font-size="12" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 16 {:.2})">{}</text>"#, (py0 + py1) / 2.0, (py0 + py1) / 2.0, escape(y_label));
    for (i, ser) in series.iter().enumerate() {
        let coords: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#, coords.join(" "), ser.color);
        let ly = top + 14.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{:.2}" x2="{:.2}" y1="{ly:.2}" y2="{ly:.2}" stroke="{}" stroke-width="2"{dash}/>"#, px1 - 150.0, px1 - 125.0, ser.color);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="11" font-family="sans-serif">{}</text>"#, px1 - 120.0, ly + 4.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Everything needed to reproduce a CLI run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    /// The configuration in `key = value` form.
    pub config: String,
    pub grid_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub workers: Option<usize>,
    pub initial_law: String,
    pub certificate: Option<CertificateSummary>,
    pub notes: Vec<String>,
    pub timings_ms: Vec<(String, u128)>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateSummary {
    pub case: String,
    pub lambda: f64,
    pub min_eigenvalue: f64,
    pub passed: bool,
}

impl RunManifest {
    pub fn new(command: &str, config: String, grid_steps: usize, n_paths: usize, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config,
            grid_steps,
            n_paths,
            seed,
            workers: None,
            initial_law: "x0 deterministic when x0_var = 0, otherwise Gaussian(x0_mean, x0_var)".into(),
            certificate: None,
            notes: Vec::new(),
            timings_ms: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&mut self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join("manifest.json");
        self.outputs.push("manifest.json".into());
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}
