//! The accelerated data-dependent proximal method and its variants.
//!
//! Each outer round extrapolates `ỹ = x̃_k + β(x̃_k − x̃_{k−1})` and runs an
//! inner accelerated loop on the quadratic model
//! `h⟨∇F(ỹ), x⟩ + ½‖x − ỹ‖²_Σ`, whose stochastic gradient at `y` is
//! `h ℓ′(aᵀỹ, b) a + (aᵀ(y − ỹ)) a`. The inner output is the average of the
//! last `T/2` iterates. State is `O(d)` and each sample costs `O(d)`.

use rayon::prelude::*;

use crate::error::{param, Error, Result};
use crate::linalg::{add_assign, all_finite, axpy, dot, dot_diff};
use crate::losses::LossModel;
use crate::schedule::{InnerSlice, SadaSchedule};
use crate::stream::SampleSource;
use crate::trace::{Probe, RunTrace, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Plain,
    /// Regularized surrogate `E[ℓ(aᵀx, b) + ε/(2M²)(aᵀx)²] + ε/(2D²)‖x‖²`.
    WeaklyConvex { eps: f64, d_radius: f64, m_radius: f64 },
    /// `m` unlabeled features per step for the first `t0` inner steps.
    Unlabeled { m: usize, t0: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantConfig {
    pub kind: Variant,
    pub batch: usize,
}

impl Default for VariantConfig {
    fn default() -> Self {
        Self { kind: Variant::Plain, batch: 1 }
    }
}

impl VariantConfig {
    pub fn plain() -> Self {
        Self::default()
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = batch;
        self
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.batch == 0 {
            return Err(param("batch", "must be at least 1"));
        }
        match self.kind {
            Variant::Plain => Ok(()),
            Variant::WeaklyConvex { eps, d_radius, m_radius } => {
                if eps >= 0.0 && eps.is_finite() && d_radius > 0.0 && m_radius > 0.0 {
                    Ok(())
                } else {
                    Err(param("weakly_convex", format!("need eps >= 0, D > 0, M > 0; got ({eps}, {d_radius}, {m_radius})")))
                }
            }
            Variant::Unlabeled { t0, .. } => {
                if t0 <= horizon {
                    Ok(())
                } else {
                    Err(param("t0", format!("unlabeled horizon {t0} exceeds inner length {horizon}")))
                }
            }
        }
    }
}

/// Live inner iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerState {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    /// Steps taken so far.
    pub t: usize,
    /// Sum of `x_t` over `t > T/2`.
    pub tail_sum: Vec<f64>,
    pub samples_used: u64,
    pub unlabeled_used: u64,
    pub ops: u64,
}

impl InnerState {
    /// `x₀ = z₀ = ỹ`
    pub fn start(y_tilde: &[f64]) -> Self {
        Self {
            x: y_tilde.to_vec(),
            z: y_tilde.to_vec(),
            t: 0,
            tail_sum: vec![0.0; y_tilde.len()],
            samples_used: 0,
            unlabeled_used: 0,
            ops: 0,
        }
    }

    /// `y = (x + θz)/(1 + θ)`
    pub fn y(&self, theta: f64) -> Vec<f64> {
        self.x.iter().zip(&self.z).map(|(x, z)| x / (1.0 + theta) + theta * z / (1.0 + theta)).collect()
    }
}

/// Outer iterates `(x̃_k, x̃_{k−1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterState {
    pub x_tilde: Vec<f64>,
    pub x_tilde_prev: Vec<f64>,
    pub k: usize,
}

impl OuterState {
    /// `x̃_{−1} = x̃₀`
    pub fn start(x0: &[f64]) -> Self {
        Self { x_tilde: x0.to_vec(), x_tilde_prev: x0.to_vec(), k: 0 }
    }

    /// `ỹ = x̃ + β(x̃ − x̃_prev)`
    pub fn extrapolate(&self, beta: f64) -> Vec<f64> {
        self.x_tilde.iter().zip(&self.x_tilde_prev).map(|(x, p)| x + beta * (x - p)).collect()
    }

    pub fn advance(&mut self, next: Vec<f64>) {
        self.x_tilde_prev = std::mem::replace(&mut self.x_tilde, next);
        self.k += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutput {
    pub x_tilde: Vec<f64>,
    pub samples_used: u64,
    pub unlabeled_used: u64,
    pub ops: u64,
}

/// Runs inner steps with reusable buffers.
#[derive(Debug, Clone)]
pub struct Engine {
    loss: LossModel,
    variant: VariantConfig,
    dim: usize,
    a: Vec<f64>,
    u: Vec<f64>,
    y: Vec<f64>,
    g: Vec<f64>,
}

impl Engine {
    /// `loss` is the base loss; the weakly convex terms come from `variant`.
    pub fn new(loss: LossModel, variant: VariantConfig, dim: usize) -> Result<Self> {
        variant.validate(usize::MAX)?;
        if dim == 0 {
            return Err(Error::Dimension { expected: 1, got: 0 });
        }
        Ok(Self { loss, variant, dim, a: vec![0.0; variant.batch * dim], u: vec![0.0; dim], y: vec![0.0; dim], g: vec![0.0; dim] })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn loss(&self) -> &LossModel {
        &self.loss
    }

    pub fn variant(&self) -> &VariantConfig {
        &self.variant
    }

    /// One inner step `t − 1 → t`, consuming `B` labeled samples (plus `m`
    /// unlabeled ones while `t ≤ T0` for the unlabeled variant).
    pub fn inner_step<S: SampleSource>(&mut self, st: &mut InnerState, y_tilde: &[f64], s: &InnerSlice, source: &mut S) -> Result<()> {
        let d = self.dim;
        if y_tilde.len() != d || st.x.len() != d || st.z.len() != d {
            return Err(Error::Dimension { expected: d, got: y_tilde.len().min(st.x.len()).min(st.z.len()) });
        }
        if source.dim() != d {
            return Err(Error::Dimension { expected: d, got: source.dim() });
        }
        let theta = s.theta;
        let step = st.t + 1;
        let ops = &mut st.ops;

        for i in 0..d {
            self.y[i] = st.x[i] / (1.0 + theta) + theta * st.z[i] / (1.0 + theta);
        }
        *ops += 5 * d as u64;
        self.g.iter_mut().for_each(|v| *v = 0.0);

        let batch = self.variant.batch;
        let (pen, ridge, rho) = match self.variant.kind {
            Variant::WeaklyConvex { eps, d_radius, m_radius } if eps != 0.0 => {
                (eps / (m_radius * m_radius), eps / (d_radius * d_radius), eps / (self.loss.l_loss() * d_radius * d_radius))
            }
            _ => (0.0, 0.0, 0.0),
        };
        let unlabeled = match self.variant.kind {
            Variant::Unlabeled { m, t0 } if m > 0 && step <= t0 => m,
            _ => 0,
        };

        for j in 0..batch {
            let a = &mut self.a[j * d..(j + 1) * d];
            let b = source.next_labeled(a)?;
            self.loss.check_label(b)?;
            let s_t = dot(a, y_tilde, ops);
            let mut coef = if pen != 0.0 { s.h * (self.loss.deriv(s_t, b) + pen * s_t) } else { s.h * self.loss.deriv(s_t, b) };
            if unlabeled == 0 {
                coef += dot_diff(a, &self.y, y_tilde, ops);
            }
            axpy(coef / batch as f64, a, &mut self.g, ops);
        }
        st.samples_used += batch as u64;

        if unlabeled > 0 {
            // covariance term from the pooled labeled and unlabeled features
            let w = 1.0 / (batch + unlabeled) as f64;
            for j in 0..batch {
                let a = &self.a[j * d..(j + 1) * d];
                let c = dot_diff(a, &self.y, y_tilde, ops);
                axpy(w * c, a, &mut self.g, ops);
            }
            for _ in 0..unlabeled {
                source.next_unlabeled(&mut self.u)?;
                let c = dot_diff(&self.u, &self.y, y_tilde, ops);
                axpy(w * c, &self.u, &mut self.g, ops);
            }
            st.unlabeled_used += unlabeled as u64;
        }

        if ridge != 0.0 {
            for i in 0..d {
                self.g[i] += s.h * ridge * y_tilde[i] + rho * (self.y[i] - y_tilde[i]);
            }
            *ops += 6 * d as u64;
        }

        if !all_finite(&self.g) {
            return Err(Error::Divergence { k: 0, t: step });
        }
        for i in 0..d {
            st.x[i] = self.y[i] - s.eta * self.g[i];
            st.z[i] = theta * self.y[i] + (1.0 - theta) * st.z[i] - s.gamma * self.g[i];
        }
        *ops += 7 * d as u64;
        st.t = step;
        if step > s.horizon / 2 {
            add_assign(&st.x, &mut st.tail_sum, ops);
        }
        Ok(())
    }

    /// `T` inner steps from `x₀ = z₀ = ỹ`; returns the tail average.
    pub fn run_inner_loop<S: SampleSource>(&mut self, y_tilde: &[f64], s: &InnerSlice, k: usize, source: &mut S) -> Result<InnerOutput> {
        if s.horizon == 0 || s.horizon % 2 != 0 {
            return Err(Error::Schedule(format!("inner length {} must be positive and even", s.horizon)));
        }
        self.variant.validate(s.horizon)?;
        let mut st = InnerState::start(y_tilde);
        for _ in 0..s.horizon {
            self.inner_step(&mut st, y_tilde, s, source).map_err(|e| match e {
                Error::Divergence { t, .. } => Error::Divergence { k, t },
                other => other,
            })?;
        }
        let scale = 2.0 / s.horizon as f64;
        let x_tilde: Vec<f64> = st.tail_sum.iter().map(|v| v * scale).collect();
        Ok(InnerOutput { x_tilde, samples_used: st.samples_used, unlabeled_used: st.unlabeled_used, ops: st.ops + st.tail_sum.len() as u64 })
    }

    /// `T/T0` independent inner loops of length `T0` from the same `ỹ`, one
    /// source each, averaged.
    pub fn run_parallel_inner<S: SampleSource + Send>(&self, y_tilde: &[f64], s: &InnerSlice, k: usize, sources: &mut [S], t0: usize) -> Result<InnerOutput> {
        if t0 == 0 || t0 % 2 != 0 || s.horizon % t0 != 0 {
            return Err(Error::Schedule(format!("partition length {t0} must be even and divide T = {}", s.horizon)));
        }
        let parts = s.horizon / t0;
        if sources.len() != parts {
            return Err(param("sources", format!("need {parts} independent streams, got {}", sources.len())));
        }
        let part_slice = InnerSlice { horizon: t0, ..*s };
        let outs: Vec<Result<InnerOutput>> = sources
            .par_iter_mut()
            .map(|src| self.clone().run_inner_loop(y_tilde, &part_slice, k, src))
            .collect();
        let mut acc = InnerOutput { x_tilde: vec![0.0; self.dim], samples_used: 0, unlabeled_used: 0, ops: 0 };
        for o in outs {
            let o = o?;
            for (a, v) in acc.x_tilde.iter_mut().zip(&o.x_tilde) {
                *a += v;
            }
            acc.samples_used += o.samples_used;
            acc.unlabeled_used += o.unlabeled_used;
            acc.ops += o.ops;
        }
        acc.x_tilde.iter_mut().for_each(|v| *v /= parts as f64);
        Ok(acc)
    }
}

fn check_run(schedule: &SadaSchedule, x0: &[f64], dim: usize) -> Result<()> {
    if x0.len() != dim {
        return Err(Error::Dimension { expected: dim, got: x0.len() });
    }
    if schedule.theta_tilde.len() != schedule.k || schedule.h.len() != schedule.k || schedule.beta.len() != schedule.k {
        return Err(Error::Schedule("per-round vectors do not have length K".into()));
    }
    Ok(())
}

/// `K` outer rounds; the probe runs on `x₀` and after every round.
pub fn run_sada<S: SampleSource, P: Probe>(
    loss: &LossModel,
    schedule: &SadaSchedule,
    variant: &VariantConfig,
    x0: &[f64],
    source: &mut S,
    probe: &mut P,
) -> Result<RunTrace> {
    let mut engine = Engine::new(*loss, *variant, source.dim())?;
    check_run(schedule, x0, engine.dim())?;
    variant.validate(schedule.t)?;
    run_outer(schedule, x0, probe, |y, s, k| engine.run_inner_loop(y, s, k, source))
}

/// Like [`run_sada`], with every inner loop split into `T/T0` partitions.
/// `sources(k)` supplies the independent streams for round `k`.
pub fn run_sada_parallel<S, F, P>(
    loss: &LossModel,
    schedule: &SadaSchedule,
    variant: &VariantConfig,
    x0: &[f64],
    t0: usize,
    mut sources: F,
    probe: &mut P,
) -> Result<RunTrace>
where
    S: SampleSource + Send,
    F: FnMut(usize) -> Vec<S>,
    P: Probe,
{
    let engine = Engine::new(*loss, *variant, x0.len())?;
    check_run(schedule, x0, engine.dim())?;
    variant.validate(t0)?;
    run_outer(schedule, x0, probe, |y, s, k| {
        let mut srcs = sources(k);
        engine.run_parallel_inner(y, s, k, &mut srcs, t0)
    })
}

fn run_outer<P, F>(schedule: &SadaSchedule, x0: &[f64], probe: &mut P, mut inner: F) -> Result<RunTrace>
where
    P: Probe,
    F: FnMut(&[f64], &InnerSlice, usize) -> Result<InnerOutput>,
{
    let mut outer = OuterState::start(x0);
    let mut trace = RunTrace::default();
    let (r0, se0) = probe.measure(x0);
    trace.rows.push(TraceRow { samples: 0, unlabeled: 0, excess_risk: r0, stderr: se0, outer_k: 0 });
    let (mut samples, mut unlabeled) = (0u64, 0u64);
    for k in 1..=schedule.k {
        let y_tilde = outer.extrapolate(schedule.beta[k - 1]);
        let out = inner(&y_tilde, &schedule.slice(k), k)?;
        samples += out.samples_used;
        unlabeled += out.unlabeled_used;
        trace.ops += out.ops;
        outer.advance(out.x_tilde);
        let (r, se) = probe.measure(&outer.x_tilde);
        trace.rows.push(TraceRow { samples, unlabeled, excess_risk: r, stderr: se, outer_k: k });
    }
    trace.final_x = outer.x_tilde;
    Ok(trace)
}
