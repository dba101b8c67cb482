//! One-axis sweeps: each point is a full run in its own subdirectory, plus a
//! combined `summary.csv`, `curve.svg` and root manifest.

use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, MethodName, SweepAxis};
use crate::error::{BenchError, Result};
use crate::harness::{loglog_slope, prepare, run_experiment, AggRow};
use crate::output::{curve_svg, manifest, summary_csv, write_run, SummaryRow};

/// A single sweep point, already applied to its config.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub label: String,
    pub value: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SummaryRow>,
    /// `(label, message)` per point that failed.
    pub failures: Vec<(String, String)>,
    pub dir: PathBuf,
}

/// Expands the sweep section into per-point configs.
pub fn sweep_points(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    let s = cfg.sweep.as_ref().ok_or_else(|| BenchError::Config("sweep: section missing".into()))?;
    let mut base = cfg.clone();
    base.sweep = None;
    let point = |value: String, f: &dyn Fn(&mut ExperimentConfig)| {
        let mut c = base.clone();
        f(&mut c);
        SweepPoint { label: format!("{}_{value}", s.axis.as_str()), value, config: c }
    };
    let out = match s.axis {
        SweepAxis::N => s
            .n
            .iter()
            .map(|&n| {
                point(n.to_string(), &|c| {
                    c.run.n = n;
                    // the outer count follows the budget
                    if c.method.inner_t.is_some() {
                        c.method.outer_k = None;
                    }
                })
            })
            .collect(),
        SweepAxis::Kappa => s.kappa.iter().map(|&k| point(k.to_string(), &|c| c.instance.kappa = Some(k))).collect::<Vec<_>>(),
        SweepAxis::Method => s.methods.iter().map(|&m: &MethodName| point(m.as_str().to_string(), &|c| c.method.name = m)).collect(),
    };
    for p in &out {
        p.config.validate().map_err(|e| BenchError::Config(format!("sweep point {}: {e}", p.label)))?;
    }
    Ok(out)
}

/// Runs every point; a failing point is reported and skipped.
pub fn run_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<SweepOutcome> {
    let axis = cfg.sweep.as_ref().map(|s| s.axis).ok_or_else(|| BenchError::Config("sweep: section missing".into()))?;
    let points = sweep_points(cfg)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("manifest.txt"), manifest(cfg, None))?;
    if points.is_empty() {
        log::warn!("sweep over {} has no points; nothing to run", axis.as_str());
        std::fs::write(out.join("summary.csv"), summary_csv(&[]))?;
        return Ok(SweepOutcome { rows: Vec::new(), failures: Vec::new(), dir: out.to_path_buf() });
    }

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut series: Vec<(String, Vec<AggRow>)> = Vec::new();
    for p in points {
        let method = p.config.method.name.as_str().to_string();
        let n = p.config.run.n;
        let res = prepare(&p.config).and_then(|setup| {
            let r = run_experiment(&p.config, &setup)?;
            write_run(&out.join(&p.label), &p.config, &setup, &r, &p.label)?;
            Ok(r)
        });
        match res {
            Ok(r) => {
                series.push((p.label.clone(), r.rows.clone()));
                rows.push(SummaryRow { axis: axis.as_str().into(), value: p.value, method, n, result: Some(r), slope: None });
            }
            Err(e) => {
                log::warn!("sweep point {} failed: {e}", p.label);
                failures.push((p.label, e.to_string()));
                rows.push(SummaryRow { axis: axis.as_str().into(), value: p.value, method, n, result: None, slope: None });
            }
        }
    }
    if axis == SweepAxis::N {
        let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.result.as_ref().map(|res| (r.n as f64, res.final_row().excess_risk))).collect();
        let slope = loglog_slope(&pts);
        for r in &mut rows {
            r.slope = slope;
        }
    }
    std::fs::write(out.join("summary.csv"), summary_csv(&rows))?;
    if cfg.output.svg {
        std::fs::write(out.join("curve.svg"), curve_svg(&series))?;
    }
    Ok(SweepOutcome { rows, failures, dir: out.to_path_buf() })
}
