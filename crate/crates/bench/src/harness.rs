//! Builds instances and schedules from a config and runs replicated methods.
//!
//! Replicate `r` draws from stream `stream_id([r])` of the run seed, and
//! partition `p` of round `k` in a parallel-inner run from
//! `stream_id([r, k, p])`, so results do not depend on worker scheduling.

use std::time::Instant;

use rayon::prelude::*;
use sada::baselines::{run_erm, run_sgd_tail_avg, SgdConfig};
use sada::engine::{run_sada, run_sada_parallel, Variant, VariantConfig};
use sada::losses::LossModel;
use sada::problem::{
    estimate_constants, gaussian_constants, sphere_constants, DataDistribution, Design, LabelModel, Link, PopulationMinimizer,
    ProblemConstants, ProblemInstance, RiskEvaluator, Rotation, SpectrumSpec,
};
use sada::schedule::{
    minibatch_constants, resolve_schedule, schedule_t_min, unlabeled_constants, weakly_convex_constants, InnerParams, OuterRule,
    SadaSchedule, SchedulePolicy,
};
use sada::stream::{stream_id, stream_rng, DistributionSource};
use sada::trace::{RunTrace, TraceRow};

use crate::config::{ConstantsSource, DesignKind, ExperimentConfig, LabelKind, LossName, MethodName, PlantedKind, SpectrumKind, ThetaRule};
use crate::error::{BenchError, Result};

const PILOT_STREAM: u64 = 0x5049_4c4f_54;

/// What a run will execute.
#[derive(Debug, Clone)]
pub enum Plan {
    Sada { schedule: SadaSchedule, variant: VariantConfig, parallel_t0: Option<usize>, t_min: InnerParams },
    Sgd(SgdConfig),
    Erm { n: usize, tol: f64, max_iter: usize },
}

/// Everything resolved from a config before any replicate runs.
#[derive(Debug, Clone)]
pub struct Setup {
    /// Generates the data; its loss is the one the method differentiates.
    pub instance: ProblemInstance,
    /// The objective whose excess risk is reported (the surrogate for `sada_wc`).
    pub objective: ProblemInstance,
    /// Constants the schedule was derived from, before minibatching.
    pub constants: ProblemConstants,
    pub minimizer: PopulationMinimizer,
    pub evaluator: RiskEvaluator,
    pub plan: Plan,
    pub method: MethodName,
}

pub fn build_instance(cfg: &ExperimentConfig) -> Result<ProblemInstance> {
    let i = &cfg.instance;
    let spec = match i.spectrum {
        SpectrumKind::Identity => SpectrumSpec::identity(i.dim)?,
        SpectrumKind::TwoCluster => {
            let kappa = i.kappa.ok_or_else(|| BenchError::Config("instance.kappa: required when spectrum = \"two_cluster\"".into()))?;
            SpectrumSpec::two_cluster(i.dim, kappa)?
        }
        SpectrumKind::List => SpectrumSpec::new(i.eigenvalues.clone().unwrap_or_default())?,
    };
    let spec = match i.rotation {
        Some(seed) => spec.with_rotation(Rotation::Seeded(seed))?,
        None => spec,
    };
    let design = match i.design {
        DesignKind::Gaussian => Design::Gaussian(spec),
        DesignKind::Sphere => Design::BoundedSphere(spec),
    };
    let x_star = match &i.x_star {
        Some(x) => x.clone(),
        None => match i.planted {
            PlantedKind::Ones => vec![i.planted_scale; i.dim],
            PlantedKind::LastAxis => {
                let mut x = vec![0.0; i.dim];
                x[i.dim - 1] = i.planted_scale;
                x
            }
        },
    };
    let labels = match i.labels {
        LabelKind::WellSpecified => LabelModel::WellSpecified { x_star, noise_var: i.noise_var },
        LabelKind::Tanh => LabelModel::Misspecified { link: Link::Tanh, x_star, noise_var: i.noise_var },
        LabelKind::Logistic => LabelModel::Misspecified { link: Link::Logistic, x_star, noise_var: 0.0 },
    };
    let loss = match i.loss {
        LossName::Squared => LossModel::squared().with_prediction_penalty(i.ridge),
        LossName::Huberized => LossModel::huberized(i.huber_mu.unwrap_or(0.0), i.huber_l.unwrap_or(0.0), i.huber_delta.unwrap_or(0.0))?
            .with_prediction_penalty(i.ridge),
        LossName::Logistic => LossModel::logistic_ridge(i.ridge)?,
    };
    Ok(ProblemInstance::new(DataDistribution::new(design, labels)?, loss))
}

/// Design constants for `loss_bounds`, closed form or estimated from a pilot.
fn design_constants(cfg: &ExperimentConfig, inst: &ProblemInstance, loss_bounds: (f64, f64)) -> Result<ProblemConstants> {
    let c = match cfg.instance.constants {
        ConstantsSource::ClosedForm => match inst.dist.design() {
            Design::Gaussian(s) => gaussian_constants(s, loss_bounds)?,
            Design::BoundedSphere(s) => sphere_constants(s, loss_bounds)?,
        },
        ConstantsSource::Estimated => {
            let d = inst.dim();
            let mut rng = stream_rng(cfg.run.seed, PILOT_STREAM);
            let mut pilot = vec![0.0; cfg.instance.pilot * d];
            let mut scratch = vec![0.0; d];
            for row in pilot.chunks_exact_mut(d) {
                inst.dist.sample_features_into(&mut rng, row, &mut scratch);
            }
            estimate_constants(&pilot, d, loss_bounds)?
        }
    };
    Ok(c)
}

fn strongly_convex_bounds(loss: &LossModel, method: MethodName) -> Result<(f64, f64)> {
    if loss.strongly_convex() {
        Ok((loss.mu_loss(), loss.l_loss()))
    } else {
        Err(BenchError::Config(format!(
            "method.name: {} needs a strongly convex loss; use sada_wc or set instance.ridge > 0",
            method.as_str()
        )))
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Setup> {
    cfg.validate()?;
    let instance = build_instance(cfg)?;
    let m = &cfg.method;
    let n = cfg.run.n;
    let rule = match m.theta_rule {
        ThetaRule::Asymptotic => OuterRule::Asymptotic,
        ThetaRule::Exact => OuterRule::Exact,
    };
    let policy = SchedulePolicy { eta: m.eta, inner_t: m.inner_t, outer_k: m.outer_k, rule };

    let (objective, constants, plan) = match m.name {
        MethodName::Sada | MethodName::SadaUd => {
            let mut c = design_constants(cfg, &instance, strongly_convex_bounds(&instance.loss, m.name)?)?;
            if let Some(known) = instance.constants().ok().filter(|_| cfg.instance.constants == ConstantsSource::ClosedForm) {
                c.trace_hinv_q = known.trace_hinv_q;
                c.trace_q = known.trace_q;
            }
            let unlabeled = m.name == MethodName::SadaUd;
            let m_ud = m.m.unwrap_or(1);
            let c = if unlabeled { unlabeled_constants(&c, m_ud) } else { c };
            let schedule = resolve_schedule(&c, n, m.batch, policy)?;
            let t_min = schedule_t_min(&minibatch_constants(&c, m.batch)?, &schedule)?;
            let kind = if unlabeled {
                Variant::Unlabeled { m: m_ud, t0: m.t0.unwrap_or_else(|| t_min.t_min.clamp(2, schedule.t)) }
            } else {
                Variant::Plain
            };
            let variant = VariantConfig { kind, batch: m.batch };
            variant.validate(schedule.t)?;
            (instance.clone(), c, Plan::Sada { schedule, variant, parallel_t0: m.parallel_t0, t_min })
        }
        MethodName::SadaWc => {
            let base = design_constants(cfg, &instance, (1.0, 1.0))?;
            let bounds = (instance.loss.mu_loss(), instance.loss.l_loss());
            let c = weakly_convex_constants(&base, bounds, m.eps, m.d_radius, m.m_radius)?;
            let schedule = resolve_schedule(&c, n, m.batch, policy)?;
            let t_min = schedule_t_min(&minibatch_constants(&c, m.batch)?, &schedule)?;
            let variant = VariantConfig { kind: Variant::WeaklyConvex { eps: m.eps, d_radius: m.d_radius, m_radius: m.m_radius }, batch: m.batch };
            let objective = instance.regularized(m.eps / (m.m_radius * m.m_radius), m.eps / (m.d_radius * m.d_radius));
            (objective, c, Plan::Sada { schedule, variant, parallel_t0: m.parallel_t0, t_min })
        }
        MethodName::Sgd => {
            let bounds = if instance.loss.strongly_convex() { (instance.loss.mu_loss(), instance.loss.l_loss()) } else { (1.0, 1.0) };
            let c = design_constants(cfg, &instance, bounds)?;
            let step = m.sgd_step.unwrap_or(0.5 / c.r_sq);
            let sgd = SgdConfig { step, tail_fraction: m.tail_fraction, n, probe_ratio: Some(cfg.run.probe_ratio) };
            sgd.validate()?;
            (instance.clone(), c, Plan::Sgd(sgd))
        }
        MethodName::Erm => {
            let bounds = if instance.loss.strongly_convex() { (instance.loss.mu_loss(), instance.loss.l_loss()) } else { (1.0, 1.0) };
            let c = design_constants(cfg, &instance, bounds)?;
            (instance.clone(), c, Plan::Erm { n, tol: m.erm_tol, max_iter: m.erm_max_iter })
        }
    };
    if let Plan::Sada { schedule, parallel_t0: Some(t0), .. } = &plan {
        if *t0 == 0 || t0 % 2 != 0 || schedule.t % t0 != 0 {
            return Err(BenchError::Config(format!("method.parallel_t0: {t0} must be even and divide T = {}", schedule.t)));
        }
    }
    let minimizer = objective.solve_population_minimizer(cfg.run.solver_tol, cfg.run.solver_budget, cfg.run.seed)?;
    let evaluator = objective.risk_evaluator(&minimizer, cfg.run.eval_samples, cfg.run.seed)?;
    Ok(Setup { instance, objective, constants, minimizer, evaluator, plan, method: m.name })
}

/// One row of a replicate-averaged trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggRow {
    pub samples: u64,
    pub unlabeled: u64,
    pub excess_risk: f64,
    pub stderr: f64,
    pub outer_k: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub method: MethodName,
    pub rows: Vec<AggRow>,
    /// Final excess risk of each replicate that finished.
    pub finals: Vec<f64>,
    /// Per finished replicate: first sample count with risk at most `threshold`.
    pub samples_to: Vec<Option<u64>>,
    pub threshold: f64,
    /// `(replicate, message)` for replicates that diverged.
    pub diverged: Vec<(usize, String)>,
    pub replicates: usize,
    /// Mean streaming operation count per finished replicate.
    pub ops: f64,
}

impl RunResult {
    pub fn initial_risk(&self) -> f64 {
        self.rows.first().map_or(f64::NAN, |r| r.excess_risk)
    }

    pub fn final_row(&self) -> &AggRow {
        self.rows.last().expect("a trace has at least its initial row")
    }

    /// Samples-to-threshold of the replicate-mean curve.
    pub fn mean_samples_to(&self) -> Option<u64> {
        self.rows.iter().find(|r| r.excess_risk <= self.threshold).map(|r| r.samples)
    }

    /// Lower median over replicates; replicates that never reach the
    /// threshold count as larger than every finite value.
    pub fn median_samples_to(&self) -> Option<u64> {
        let mut v: Vec<u64> = self.samples_to.iter().map(|s| s.unwrap_or(u64::MAX)).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_unstable();
        Some(v[(v.len() - 1) / 2]).filter(|&s| s != u64::MAX)
    }
}

struct Replicate {
    trace: RunTrace,
    wall: Vec<f64>,
}

fn run_replicate(cfg: &ExperimentConfig, setup: &Setup, r: usize) -> Result<Replicate> {
    let seed = cfg.run.seed;
    let dist = &setup.instance.dist;
    let loss = &setup.instance.loss;
    let x0 = vec![0.0; setup.instance.dim()];
    let record_wall = cfg.output.wall_time;
    let start = Instant::now();
    let mut wall = Vec::new();
    let mut probe = |x: &[f64]| {
        wall.push(if record_wall { start.elapsed().as_secs_f64() } else { 0.0 });
        setup.evaluator.evaluate(x)
    };
    let mut src = DistributionSource::seeded(dist, seed, stream_id(&[r as u64]));
    let trace = match &setup.plan {
        Plan::Sada { schedule, variant, parallel_t0: None, .. } => run_sada(loss, schedule, variant, &x0, &mut src, &mut probe)?,
        Plan::Sada { schedule, variant, parallel_t0: Some(t0), .. } => {
            let parts = schedule.t / t0;
            let sources = |k: usize| (0..parts).map(|p| DistributionSource::seeded(dist, seed, stream_id(&[r as u64, k as u64, p as u64]))).collect();
            run_sada_parallel(loss, schedule, variant, &x0, *t0, sources, &mut probe)?
        }
        Plan::Sgd(sgd) => run_sgd_tail_avg(loss, sgd, &x0, &mut src, &mut probe)?,
        Plan::Erm { n, tol, max_iter } => {
            let (r0, se0) = probe(&x0);
            let out = run_erm(loss, *n, *tol, *max_iter, &mut src)?;
            let (r1, se1) = probe(&out.x);
            RunTrace {
                rows: vec![
                    TraceRow { samples: 0, unlabeled: 0, excess_risk: r0, stderr: se0, outer_k: 0 },
                    TraceRow { samples: *n as u64, unlabeled: 0, excess_risk: r1, stderr: se1, outer_k: 0 },
                ],
                final_x: out.x,
                ops: 0,
            }
        }
    };
    Ok(Replicate { trace, wall })
}

/// Runs all replicates of `cfg` on the worker pool and averages their traces.
pub fn run_experiment(cfg: &ExperimentConfig, setup: &Setup) -> Result<RunResult> {
    let reps = cfg.run.replicates;
    let outcomes: Vec<Result<Replicate>> = (0..reps).into_par_iter().map(|r| run_replicate(cfg, setup, r)).collect();
    let mut done = Vec::new();
    let mut diverged = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(rep) => done.push(rep),
            Err(BenchError::Core(e @ sada::Error::Divergence { .. })) => {
                log::warn!("replicate {r} diverged: {e}");
                diverged.push((r, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    if done.is_empty() {
        return Err(BenchError::AllDiverged(reps));
    }
    let grid: Vec<u64> = done[0].trace.rows.iter().map(|r| r.samples).collect();
    if done.iter().any(|d| d.trace.rows.len() != grid.len() || d.trace.rows.iter().zip(&grid).any(|(r, s)| r.samples != *s)) {
        return Err(BenchError::Config("replicates produced different report grids".into()));
    }
    let n = done.len() as f64;
    let rows = (0..grid.len())
        .map(|i| {
            let vals: Vec<f64> = done.iter().map(|d| d.trace.rows[i].excess_risk).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let stderr = if done.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
            } else {
                done[0].trace.rows[i].stderr
            };
            let first = &done[0].trace.rows[i];
            AggRow {
                samples: first.samples,
                unlabeled: first.unlabeled,
                excess_risk: mean,
                stderr,
                outer_k: first.outer_k,
                wall_time_s: done.iter().map(|d| d.wall[i]).sum::<f64>() / n,
            }
        })
        .collect::<Vec<_>>();
    let threshold = cfg.run.threshold * rows[0].excess_risk;
    Ok(RunResult {
        method: setup.method,
        finals: done.iter().map(|d| d.trace.final_risk().unwrap_or(f64::NAN)).collect(),
        samples_to: done.iter().map(|d| d.trace.samples_to(threshold)).collect(),
        threshold,
        diverged,
        replicates: reps,
        ops: done.iter().map(|d| d.trace.ops as f64).sum::<f64>() / n,
        rows,
    })
}

/// Flat `key=value` description of the resolved constants and plan.
pub fn describe(setup: &Setup) -> Vec<(String, String)> {
    let c = &setup.constants;
    let mut out: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| out.push((k.to_string(), v));
    put("method", setup.method.as_str().into());
    put("dim", c.dim.to_string());
    put("r_sq", c.r_sq.to_string());
    put("kappa", c.kappa.to_string());
    put("kappa_tilde", c.kappa_tilde.to_string());
    put("mu", c.mu.to_string());
    put("lambda_max", c.lambda_max.to_string());
    put("kappa_sigma", c.kappa_sigma().to_string());
    put("alpha", c.alpha.to_string());
    put("mu_loss", c.mu_loss.to_string());
    put("l_loss", c.l_loss.to_string());
    put("b_const", c.b_const.to_string());
    put("l_const", c.l_const.to_string());
    put("constants_estimated", c.estimated.to_string());
    if let Some(v) = c.trace_hinv_q {
        put("trace_hinv_q", v.to_string());
    }
    if let Some(v) = c.trace_q {
        put("trace_q", v.to_string());
    }
    put("f_star", setup.minimizer.f_star.to_string());
    match &setup.plan {
        Plan::Sada { schedule: s, variant, parallel_t0, t_min } => {
            put("theta_rule", s.rule.name().into());
            put("eta", s.eta.to_string());
            put("eta_max", (1.0 / (16.0 * minibatch_constants(c, variant.batch).map_or(c.r_sq, |b| b.r_sq))).to_string());
            put("gamma", s.gamma.to_string());
            put("theta", s.theta.to_string());
            put("theta_gamma_product", (s.theta * s.gamma).to_string());
            put("inner_t", s.t.to_string());
            put("outer_k", s.k.to_string());
            put("batch", variant.batch.to_string());
            put("samples", s.samples(variant.batch).to_string());
            put("t_min", t_min.t_min.to_string());
            put("t_min_clamped", t_min.t_min_clamped.to_string());
            put("l_eff", s.l_eff.to_string());
            put("theta_tilde_max", s.theta_tilde_max.to_string());
            put("theta_tilde_final", s.theta_tilde[s.k - 1].to_string());
            put("h_first", s.h[0].to_string());
            put("h_final", s.h[s.k - 1].to_string());
            put("beta_first", s.beta[0].to_string());
            put("beta_final", s.beta[s.k - 1].to_string());
            match variant.kind {
                Variant::Unlabeled { m, t0 } => {
                    put("unlabeled_m", m.to_string());
                    put("unlabeled_t0", t0.to_string());
                }
                Variant::WeaklyConvex { eps, d_radius, m_radius } => {
                    put("wc_eps", eps.to_string());
                    put("wc_d_radius", d_radius.to_string());
                    put("wc_m_radius", m_radius.to_string());
                }
                Variant::Plain => {}
            }
            if let Some(t0) = parallel_t0 {
                put("parallel_t0", t0.to_string());
            }
        }
        Plan::Sgd(s) => {
            put("sgd_step", s.step.to_string());
            put("tail_fraction", s.tail_fraction.to_string());
            put("samples", s.n.to_string());
        }
        Plan::Erm { n, tol, max_iter } => {
            put("erm_tol", tol.to_string());
            put("erm_max_iter", max_iter.to_string());
            put("samples", n.to_string());
        }
    }
    out
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
