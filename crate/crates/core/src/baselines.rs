//! Tail-averaged constant-step SGD and batch empirical risk minimization.

use crate::error::{param, Error, Result};
use crate::linalg::{add_assign, all_finite, axpy, dot};
use crate::losses::LossModel;
use crate::solver::{minimize, EmpiricalObjective, SolverMethod};
use crate::stream::SampleSource;
use crate::trace::{Probe, RunTrace, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub step: f64,
    /// Fraction of the iterates averaged at each report.
    pub tail_fraction: f64,
    pub n: usize,
    /// Ratio between consecutive report points; `None` reports only at `n`.
    pub probe_ratio: Option<f64>,
}

impl SgdConfig {
    /// Step `1/(2R²)` with the last half averaged.
    pub fn default_for(r_sq: f64, n: usize) -> Self {
        Self { step: 0.5 / r_sq, tail_fraction: 0.5, n, probe_ratio: Some(1.1) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step >= 0.0 && self.step.is_finite()) {
            return Err(param("step", format!("must be nonnegative, got {}", self.step)));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(param("tail_fraction", format!("must lie in (0, 1], got {}", self.tail_fraction)));
        }
        if self.n < 2 {
            return Err(param("n", "need at least 2 samples"));
        }
        if let Some(r) = self.probe_ratio {
            if !(r > 1.0) {
                return Err(param("probe_ratio", format!("must exceed 1, got {r}")));
            }
        }
        Ok(())
    }

    /// Report points: geometric in `ratio` from 2, always ending at `n`.
    pub fn checkpoints(&self) -> Vec<usize> {
        let mut pts = Vec::new();
        if let Some(r) = self.probe_ratio {
            let mut v = 2.0f64;
            while (v as usize) < self.n {
                let p = v as usize;
                if pts.last() != Some(&p) {
                    pts.push(p);
                }
                v *= r;
            }
        }
        pts.push(self.n);
        pts
    }

    fn window(&self, checkpoint: usize) -> usize {
        ((self.tail_fraction * checkpoint as f64).ceil() as usize).clamp(1, checkpoint)
    }
}

/// `x_t = x_{t−1} − η ℓ′(a_tᵀx_{t−1}, b_t) a_t`, reporting at each checkpoint
/// `N` the mean of `x_{N−w+1..N}` with `w = ⌈fN⌉`. Overlapping windows keep
/// separate running sums, so memory is `O(d)` per open window.
pub fn run_sgd_tail_avg<S: SampleSource, P: Probe>(loss: &LossModel, cfg: &SgdConfig, x0: &[f64], source: &mut S, probe: &mut P) -> Result<RunTrace> {
    cfg.validate()?;
    let d = source.dim();
    if x0.len() != d {
        return Err(Error::Dimension { expected: d, got: x0.len() });
    }
    let checkpoints = cfg.checkpoints();
    let starts: Vec<usize> = checkpoints.iter().map(|&c| c - cfg.window(c) + 1).collect();
    let mut open: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut next_open = 0;
    let mut next_report = 0;

    let mut trace = RunTrace::default();
    let (r0, se0) = probe.measure(x0);
    trace.rows.push(TraceRow { samples: 0, unlabeled: 0, excess_risk: r0, stderr: se0, outer_k: 0 });

    let mut x = x0.to_vec();
    let mut a = vec![0.0; d];
    let mut ops = 0u64;
    for t in 1..=cfg.n {
        let b = source.next_labeled(&mut a)?;
        loss.check_label(b)?;
        let g = loss.deriv(dot(&a, &x, &mut ops), b);
        axpy(-cfg.step * g, &a, &mut x, &mut ops);
        if !all_finite(&x) {
            return Err(Error::Divergence { k: 0, t });
        }
        while next_open < checkpoints.len() && starts[next_open] <= t {
            open.push((next_open, vec![0.0; d]));
            next_open += 1;
        }
        for (_, sum) in open.iter_mut() {
            add_assign(&x, sum, &mut ops);
        }
        while next_report < checkpoints.len() && checkpoints[next_report] == t {
            let pos = open.iter().position(|(i, _)| *i == next_report).expect("window opened before its end");
            let (_, sum) = open.remove(pos);
            let w = cfg.window(t) as f64;
            let avg: Vec<f64> = sum.iter().map(|v| v / w).collect();
            let (r, se) = probe.measure(&avg);
            trace.rows.push(TraceRow { samples: t as u64, unlabeled: 0, excess_risk: r, stderr: se, outer_k: 0 });
            if next_report + 1 == checkpoints.len() {
                trace.final_x = avg;
            }
            next_report += 1;
        }
    }
    trace.ops = ops;
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErmOutput {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Fewer samples than dimensions.
    pub rank_deficient: bool,
}

/// Draws `n` samples once and minimizes their empirical risk by gradient
/// descent with backtracking from the origin.
pub fn run_erm<S: SampleSource>(loss: &LossModel, n: usize, tol: f64, max_iter: usize, source: &mut S) -> Result<ErmOutput> {
    let d = source.dim();
    if n == 0 {
        return Err(param("n", "need at least one sample"));
    }
    let rank_deficient = n < d;
    if rank_deficient {
        log::warn!("ERM with n = {n} < d = {d}: the empirical risk has no unique minimizer");
    }
    let mut feats = vec![0.0; n * d];
    let mut labels = Vec::with_capacity(n);
    for row in feats.chunks_exact_mut(d) {
        labels.push(source.next_labeled(row)?);
    }
    let obj = EmpiricalObjective::new(d, feats, labels, *loss, 0.0)?;
    let out = minimize(&obj, &vec![0.0; d], tol, max_iter, SolverMethod::GradientDescent)?;
    Ok(ErmOutput { x: out.x, iterations: out.iterations, grad_norm: out.grad_norm, rank_deficient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::ReplaySource;
    use crate::trace::NoProbe;

    #[test]
    fn hand_recursion() {
        let cfg = SgdConfig { step: 0.5, tail_fraction: 1.0, n: 3, probe_ratio: None };
        let mut src = ReplaySource::new(1, vec![1.0; 3], vec![1.0; 3]).unwrap();
        let tr = run_sgd_tail_avg(&LossModel::squared(), &cfg, &[0.0], &mut src, &mut NoProbe).unwrap();
        assert_eq!(tr.final_x, vec![(0.5 + 0.75 + 0.875) / 3.0]);

        let cfg = SgdConfig { tail_fraction: 0.01, ..cfg };
        let mut src = ReplaySource::new(1, vec![1.0; 3], vec![1.0; 3]).unwrap();
        let tr = run_sgd_tail_avg(&LossModel::squared(), &cfg, &[0.0], &mut src, &mut NoProbe).unwrap();
        assert_eq!(tr.final_x, vec![0.875]);
    }

    #[test]
    fn zero_step_returns_start() {
        let cfg = SgdConfig { step: 0.0, tail_fraction: 0.5, n: 8, probe_ratio: Some(1.5) };
        let mut src = ReplaySource::new(1, vec![1.0; 8], vec![3.0; 8]).unwrap();
        let tr = run_sgd_tail_avg(&LossModel::squared(), &cfg, &[0.25], &mut src, &mut NoProbe).unwrap();
        assert_eq!(tr.final_x, vec![0.25]);
        let samples: Vec<u64> = tr.rows.iter().map(|r| r.samples).collect();
        assert!(samples.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*samples.last().unwrap(), 8);
    }

    #[test]
    fn checkpoints_end_at_budget() {
        let cfg = SgdConfig { step: 0.1, tail_fraction: 0.5, n: 1000, probe_ratio: Some(1.1) };
        let c = cfg.checkpoints();
        assert_eq!(c[0], 2);
        assert_eq!(*c.last().unwrap(), 1000);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn erm_interpolates_noiseless_data() {
        let x_star = [1.0, -2.0];
        let feats = vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let labels: Vec<f64> = feats.chunks(2).map(|a| a[0] * x_star[0] + a[1] * x_star[1]).collect();
        let mut src = ReplaySource::new(2, feats, labels).unwrap();
        let out = run_erm(&LossModel::squared(), 3, 1e-12, 10_000, &mut src).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-10 && (out.x[1] + 2.0).abs() < 1e-10);
        assert!(!out.rank_deficient);
    }

    #[test]
    fn erm_underdetermined_flags_rank() {
        let mut src = ReplaySource::new(3, vec![1.0, 2.0, 3.0], vec![1.0]).unwrap();
        let out = run_erm(&LossModel::squared(), 1, 1e-10, 10_000, &mut src).unwrap();
        assert!(out.rank_deficient);
        assert!((out.x[0] + 2.0 * out.x[1] + 3.0 * out.x[2] - 1.0).abs() < 1e-9);
    }
}
