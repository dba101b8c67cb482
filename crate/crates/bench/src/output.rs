//! Artifact writers: `trace.csv`, `summary.csv`, `manifest.txt`, `curve.svg`.
//!
//! Every writer formats floats with the shortest round-trip representation,
//! so identical runs produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::harness::{describe, AggRow, RunResult, Setup};

pub const TRACE_HEADER: &str = "samples,excess_risk,stderr,outer_k,wall_time_s";

/// Trace rows; `unlabeled` adds a trailing column of unlabeled draws.
pub fn trace_csv(rows: &[AggRow], unlabeled: bool) -> String {
    let mut s = String::from(TRACE_HEADER);
    if unlabeled {
        s.push_str(",unlabeled");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{},{},{},{}", r.samples, r.excess_risk, r.stderr, r.outer_k, r.wall_time_s);
        if unlabeled {
            let _ = write!(s, ",{}", r.unlabeled);
        }
        s.push('\n');
    }
    s
}

/// `sha256` over git's blob framing `"blob <len>\0" ++ content`.
pub fn content_hash(content: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content.as_bytes());
    hex::encode(h.finalize())
}

/// Manifest text: resolved values as comment lines, then the config echo.
///
/// The comments are ignored by the config parser, so the manifest itself is a
/// valid config that reproduces the run.
pub fn manifest(cfg: &ExperimentConfig, setup: Option<&Setup>) -> String {
    let echo = cfg.to_toml();
    let mut s = String::from("# sada-bench manifest\n");
    let _ = writeln!(s, "# content_hash = sha256:{}", content_hash(&echo));
    let _ = writeln!(s, "# seed = {}", cfg.run.seed);
    let _ = writeln!(s, "# replicates = {}", cfg.run.replicates);
    if let Some(setup) = setup {
        for (k, v) in describe(setup) {
            let _ = writeln!(s, "# {k} = {v}");
        }
    }
    s.push('\n');
    s.push_str(&echo);
    s
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub axis: String,
    pub value: String,
    pub method: String,
    pub n: usize,
    pub result: Option<RunResult>,
    pub slope: Option<f64>,
}

pub const SUMMARY_HEADER: &str =
    "axis,value,method,n,initial_risk,final_excess_risk,stderr,threshold,samples_to_threshold,median_samples_to_threshold,diverged,loglog_slope";

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let slope = r.slope.map(|x| x.to_string()).unwrap_or_default();
        match &r.result {
            Some(res) => {
                let f = res.final_row();
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.axis,
                    r.value,
                    r.method,
                    r.n,
                    res.initial_risk(),
                    f.excess_risk,
                    f.stderr,
                    res.threshold,
                    opt(res.mean_samples_to()),
                    opt(res.median_samples_to()),
                    res.diverged.len(),
                    slope
                );
            }
            None => {
                let _ = writeln!(s, "{},{},{},{},,,,,,,failed,{}", r.axis, r.value, r.method, r.n, slope);
            }
        }
    }
    s
}

/// Log-log risk curves as a standalone SVG, one polyline per series.
pub fn curve_svg(series: &[(String, Vec<AggRow>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 60.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|(_, rows)| rows.iter().filter(|r| r.samples > 0 && r.excess_risk > 0.0).map(|r| ((r.samples as f64).log10(), r.excess_risk.log10())).collect())
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-9 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-9 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">samples (log10 {x0:.2} to {x1:.2})</text>"#, W / 2.0, H - 20.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">excess risk (log10 {y0:.2} to {y1:.2})</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (i, ((label, _), p)) in series.iter().zip(&pts).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let poly: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, poly.join(" "));
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" fill="{color}">{}</text>"#, W - PAD - 150.0, PAD + 16.0 * (i as f64 + 1.0), xml_escape(label));
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes the artifacts of one run into `dir`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, setup: &Setup, result: &RunResult, label: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let unlabeled = result.rows.iter().any(|r| r.unlabeled > 0) || matches!(cfg.method.name, crate::config::MethodName::SadaUd);
    std::fs::write(dir.join("trace.csv"), trace_csv(&result.rows, unlabeled))?;
    std::fs::write(dir.join("manifest.txt"), manifest(cfg, Some(setup)))?;
    if cfg.output.svg {
        std::fs::write(dir.join("curve.svg"), curve_svg(&[(label.to_string(), result.rows.clone())]))?;
    }
    Ok(())
}
