//! Inner and outer hyperparameters.
//!
//! All formulas are evaluated in closed form from [`ProblemConstants`]; the
//! only choice left to the caller is the outer rule (exact constant `L_eff`
//! or its order-of-magnitude replacement `ακ̃`).

use crate::error::{param, Error, Result};
use crate::problem::ProblemConstants;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerParams {
    pub eta: f64,
    pub gamma: f64,
    pub theta: f64,
    /// Minimal even inner length.
    pub t_min: usize,
    /// True when the log factor vanished and `t_min` was raised to 2.
    pub t_min_clamped: bool,
}

/// Largest admissible step `1/(16R²)`.
pub fn max_eta(c: &ProblemConstants) -> f64 {
    1.0 / (16.0 * c.r_sq)
}

fn check_eta(c: &ProblemConstants, eta: f64) -> Result<()> {
    let bound = max_eta(c);
    if !(eta > 0.0 && eta <= bound * (1.0 + 1e-12)) {
        return Err(Error::StepSize { eta, bound });
    }
    Ok(())
}

/// `γ = ¼√(η/(κ̃μ))`, `θ = ¼√(μη/κ̃)` and the minimal inner length.
pub fn inner_hyperparams(c: &ProblemConstants, eta: f64, target_theta_k: f64) -> Result<InnerParams> {
    check_eta(c, eta)?;
    if !(target_theta_k > 0.0 && target_theta_k < 1.0) {
        return Err(param("target_theta_K", format!("must lie in (0, 1), got {target_theta_k}")));
    }
    let gamma = 0.25 * (eta / (c.kappa_tilde * c.mu)).sqrt();
    let theta = 0.25 * (c.mu * eta / c.kappa_tilde).sqrt();
    let raw = (c.kappa_tilde / (c.mu * eta)).sqrt() * c.kappa_sigma().ln() * (4.0 / (target_theta_k * target_theta_k)).ln();
    let mut t_min = even_ceil(raw);
    let mut t_min_clamped = false;
    if t_min < 2 {
        log::info!("inner length bound {raw:.3} is below 2 (isotropic covariance); using 2");
        t_min = 2;
        t_min_clamped = true;
    }
    Ok(InnerParams { eta, gamma, theta, t_min, t_min_clamped })
}

/// Smallest even integer `≥ x` (0 for nonpositive `x`).
pub fn even_ceil(x: f64) -> usize {
    if !(x > 0.0) {
        return 0;
    }
    let n = x.ceil() as usize;
    n + (n & 1)
}

/// How `θ̃_max` bounds the outer momentum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OuterRule {
    /// `L_eff = 160(6L + κ̃(7 + 16ηB))`.
    #[default]
    Exact,
    /// `L_eff` replaced by its order `ακ̃`, keeping every other constant.
    Asymptotic,
}

impl OuterRule {
    pub fn name(self) -> &'static str {
        match self {
            OuterRule::Exact => "exact",
            OuterRule::Asymptotic => "asymptotic",
        }
    }
}

/// Per-round view consumed by the inner loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSlice {
    pub eta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub h: f64,
    /// Inner length `T` (even).
    pub horizon: usize,
}

impl InnerSlice {
    /// `(1 − θ)/(1 + θ)`
    pub fn c(&self) -> f64 {
        (1.0 - self.theta) / (1.0 + self.theta)
    }

    /// `(η + θγ)/(1 + θ)`
    pub fn q(&self) -> f64 {
        (self.eta + self.theta * self.gamma) / (1.0 + self.theta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SadaSchedule {
    pub eta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub t: usize,
    pub k: usize,
    /// `θ̃_1..θ̃_K`
    pub theta_tilde: Vec<f64>,
    pub h: Vec<f64>,
    pub beta: Vec<f64>,
    pub l_eff: f64,
    pub theta_tilde_max: f64,
    pub rule: OuterRule,
    pub alpha: f64,
    pub l_loss: f64,
}

impl SadaSchedule {
    pub fn c(&self) -> f64 {
        (1.0 - self.theta) / (1.0 + self.theta)
    }

    pub fn q(&self) -> f64 {
        (self.eta + self.theta * self.gamma) / (1.0 + self.theta)
    }

    /// Rounds `1..=phase_split()` use `θ̃_max`.
    pub fn phase_split(&self) -> usize {
        self.k / 2
    }

    /// Slice for outer round `k ∈ 1..=K`.
    pub fn slice(&self, k: usize) -> InnerSlice {
        InnerSlice { eta: self.eta, gamma: self.gamma, theta: self.theta, h: self.h[k - 1], horizon: self.t }
    }

    /// Labeled samples consumed by a full run at batch size `batch`.
    pub fn samples(&self, batch: usize) -> usize {
        self.t * self.k * batch
    }

    /// Same schedule with a different inner length; `θ̃`, `h`, `β` are recomputed.
    pub fn with_inner_length(&self, c: &ProblemConstants, t: usize) -> Result<Self> {
        outer_schedule_with(c, self.eta, t, self.k, self.rule)
    }
}

/// Schedule with the exact outer constant.
pub fn outer_schedule(c: &ProblemConstants, eta: f64, t: usize, k: usize) -> Result<SadaSchedule> {
    outer_schedule_with(c, eta, t, k, OuterRule::Exact)
}

pub fn outer_schedule_with(c: &ProblemConstants, eta: f64, t: usize, k: usize, rule: OuterRule) -> Result<SadaSchedule> {
    check_eta(c, eta)?;
    if t == 0 || t % 2 != 0 {
        return Err(Error::Schedule(format!("inner length T = {t} must be positive and even")));
    }
    if k == 0 {
        return Err(Error::Schedule("outer length K must be positive".into()));
    }
    let gamma = 0.25 * (eta / (c.kappa_tilde * c.mu)).sqrt();
    let theta = 0.25 * (c.mu * eta / c.kappa_tilde).sqrt();
    let l_eff = l_eff(c, eta, rule);
    let alpha = c.alpha;
    let theta_tilde_max =
        (1.0 / (12.0 * alpha)).sqrt().min(t as f64 / (12.0 * std::f64::consts::SQRT_2 * alpha * l_eff));
    let split = k / 2;
    let theta_tilde: Vec<f64> = (1..=k)
        .map(|i| if i <= split { theta_tilde_max } else { 4.0 / (4.0 / theta_tilde_max + (i - split) as f64) })
        .collect();
    let h = theta_tilde.iter().map(|tt| 2.0 * alpha * tt * tt / c.l_loss).collect();
    let beta = theta_tilde.iter().map(|tt| (1.0 - tt) / (1.0 + tt)).collect();
    Ok(SadaSchedule { eta, gamma, theta, t, k, theta_tilde, h, beta, l_eff, theta_tilde_max, rule, alpha, l_loss: c.l_loss })
}

/// `R_B² = (R² + (B−1)λ_max)/B`, `κ̃_B = (κ̃ + B − 1)/B`.
pub fn minibatch_constants(c: &ProblemConstants, batch: usize) -> Result<ProblemConstants> {
    if batch == 0 {
        return Err(param("batch", "must be at least 1"));
    }
    if batch == 1 {
        return Ok(c.clone());
    }
    let b = batch as f64;
    let mut out = c.clone();
    out.r_sq = (c.r_sq + (b - 1.0) * c.lambda_max) / b;
    out.kappa_tilde = (c.kappa_tilde + b - 1.0) / b;
    out.refresh();
    Ok(out)
}

/// `R_m² = (R² + mλ_max)/(m+1)`, `κ̃_m = (κ̃ + m)/(m+1)`.
pub fn unlabeled_constants(c: &ProblemConstants, m: usize) -> ProblemConstants {
    if m == 0 {
        return c.clone();
    }
    let m1 = m as f64 + 1.0;
    let mut out = c.clone();
    out.r_sq = (c.r_sq + m as f64 * c.lambda_max) / m1;
    out.kappa_tilde = (c.kappa_tilde + m as f64) / m1;
    out.refresh();
    out
}

/// Constants of the regularized surrogate used by the weakly convex variant.
///
/// The loss gains curvature `ε/M²` on both bounds and the proximal metric
/// becomes `Σ + ρI` with `ρ = ε/(L_ℓ D²)`; `l_loss` below is the base loss'
/// smoothness so `ρ` matches the engine.
pub fn weakly_convex_constants(c: &ProblemConstants, base_loss_bounds: (f64, f64), eps: f64, d_radius: f64, m_radius: f64) -> Result<ProblemConstants> {
    if !(eps >= 0.0 && d_radius > 0.0 && m_radius > 0.0) {
        return Err(param("weakly_convex", format!("need eps >= 0, D > 0, M > 0; got ({eps}, {d_radius}, {m_radius})")));
    }
    let (mu_l, l_l) = base_loss_bounds;
    let pen = eps / (m_radius * m_radius);
    let rho = eps / (l_l * d_radius * d_radius);
    let mu_a = mu_l + pen;
    if !(mu_a > 0.0) {
        return Err(param("eps", "the surrogate is not strongly convex; eps must be positive for this loss"));
    }
    let mut out = c.clone();
    out.mu_loss = mu_a;
    out.l_loss = l_l + pen;
    out.alpha = out.l_loss / out.mu_loss;
    if rho > 0.0 {
        out.mu = c.mu + rho;
        out.lambda_max = c.lambda_max + rho;
        out.r_sq = c.r_sq + 2.0 * rho;
        out.kappa_tilde = c.kappa_tilde + 3.0;
        out.r_sq = out.r_sq.max(out.kappa_tilde * out.mu);
    }
    out.trace_hinv_q = None;
    out.trace_q = None;
    out.refresh();
    out.validate()?;
    Ok(out)
}

/// Overrides for [`resolve_schedule`]; `None` fields are derived.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SchedulePolicy {
    pub eta: Option<f64>,
    pub inner_t: Option<usize>,
    pub outer_k: Option<usize>,
    pub rule: OuterRule,
}

/// `L_eff` under `rule`.
pub fn l_eff(c: &ProblemConstants, eta: f64, rule: OuterRule) -> f64 {
    match rule {
        OuterRule::Exact => 160.0 * (6.0 * c.l_const + c.kappa_tilde * (7.0 + 16.0 * eta * c.b_const)),
        OuterRule::Asymptotic => c.alpha * c.kappa_tilde,
    }
}

/// Default inner length: the larger of `√(κ̃/(μη))·max(ln κ(Σ), 1)` and the
/// smallest `T` at which `θ̃_max` reaches its `√(1/(12α))` branch, rounded up
/// to even.
///
/// The `max(·, 1)` floor keeps isotropic problems from collapsing to `T = 2`.
pub fn default_inner_length(c: &ProblemConstants, eta: f64, rule: OuterRule) -> usize {
    let base = (c.kappa_tilde / (c.mu * eta)).sqrt() * c.kappa_sigma().ln().max(1.0);
    let branch = 12.0 * std::f64::consts::SQRT_2 * c.alpha * l_eff(c, eta, rule) * (1.0 / (12.0 * c.alpha)).sqrt();
    even_ceil(base.max(branch)).max(2)
}

/// Full schedule for a labeled budget `n` at batch size `batch`.
///
/// Without overrides `T` is [`default_inner_length`] and `K = ⌊n/(TB)⌋`.
/// When `n` cannot hold two rounds, `K = 2` and `T` shrinks to fit.
pub fn resolve_schedule(c: &ProblemConstants, n: usize, batch: usize, policy: SchedulePolicy) -> Result<SadaSchedule> {
    let c = minibatch_constants(c, batch)?;
    let eta = policy.eta.unwrap_or_else(|| max_eta(&c));
    check_eta(&c, eta)?;
    let (t, k) = match (policy.inner_t, policy.outer_k) {
        (Some(t), Some(k)) => (t, k),
        (Some(t), None) => (t, (n / (t * batch)).max(1)),
        (None, Some(k)) => (even_floor(n / (k * batch)).max(2), k),
        (None, None) => {
            let t = default_inner_length(&c, eta, policy.rule);
            if n >= 2 * t * batch {
                (t, n / (t * batch))
            } else {
                let fit = even_floor(n / (2 * batch)).max(2);
                log::warn!("budget n = {n} holds fewer than two inner loops of length {t}; using T = {fit}, K = 2");
                (fit, 2)
            }
        }
    };
    outer_schedule_with(&c, eta, t, k, policy.rule)
}

fn even_floor(n: usize) -> usize {
    n - (n & 1)
}

/// `T_min` of [`inner_hyperparams`] with `θ̃_K` taken from `schedule`.
pub fn schedule_t_min(c: &ProblemConstants, schedule: &SadaSchedule) -> Result<InnerParams> {
    inner_hyperparams(c, schedule.eta, *schedule.theta_tilde.last().expect("K >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{gaussian_constants, ProblemConstants, SpectrumSpec};

    fn consts(r_sq: f64, kt: f64, mu: f64, lmax: f64, bounds: (f64, f64)) -> ProblemConstants {
        ProblemConstants::from_parts(2, r_sq, kt, mu, lmax, bounds).unwrap()
    }

    #[test]
    fn inner_examples() {
        let c = consts(1.0, 4.0, 0.25, 0.25, (1.0, 1.0));
        let p = inner_hyperparams(&c, 1.0 / 16.0, 0.1).unwrap();
        assert_eq!(p.gamma, 1.0 / 16.0);
        assert_eq!(p.theta, 1.0 / 64.0);
        assert_eq!(p.gamma * p.theta, 1.0 / 1024.0);
        // κ(Σ) = 1, log factor vanishes
        assert_eq!(p.t_min, 2);
        assert!(p.t_min_clamped);
        assert!(matches!(inner_hyperparams(&c, 0.1, 0.1), Err(Error::StepSize { .. })));
    }

    #[test]
    fn inner_length_is_even() {
        let c = gaussian_constants(&SpectrumSpec::new(vec![4.0, 1.0]).unwrap(), (1.0, 1.0)).unwrap();
        let p = inner_hyperparams(&c, max_eta(&c), 0.05).unwrap();
        assert_eq!(p.t_min % 2, 0);
        let raw = (6.0f64 / (1.0 * p.eta)).sqrt() * 4f64.ln() * (4.0f64 / 0.0025).ln();
        assert!(p.t_min as f64 >= raw && (p.t_min as f64) < raw + 2.0);
    }

    #[test]
    fn outer_examples() {
        let c = consts(3.0, 3.0, 1.0, 1.0, (1.0, 1.0)).with_noise_constants(3.0, 3.0);
        let s = outer_schedule(&c, 1.0 / 48.0, 2, 4).unwrap();
        assert!((s.l_eff - 6720.0).abs() < 1e-9);

        let s = outer_schedule(&c, 1.0 / 48.0, 10_000_000, 4).unwrap();
        assert!((s.theta_tilde_max - (1.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!((s.theta_tilde_max - 0.2887).abs() < 1e-4);
        let last = *s.theta_tilde.last().unwrap();
        assert_eq!(last, 4.0 / (4.0 / s.theta_tilde_max + 2.0));
        assert!(last < s.theta_tilde_max);

        assert!(outer_schedule(&c, 1.0 / 48.0, 3, 4).is_err());
        let odd = outer_schedule(&c, 1.0 / 48.0, 10_000_000, 5).unwrap();
        assert_eq!(odd.phase_split(), 2);
        assert_eq!(odd.theta_tilde[1], odd.theta_tilde_max);
        assert!(odd.theta_tilde[2] < odd.theta_tilde_max);
    }

    #[test]
    fn batch_and_unlabeled_examples() {
        let c = consts(3.0, 3.0, 1.0, 1.0, (1.0, 1.0));
        assert_eq!(minibatch_constants(&c, 1).unwrap(), c);
        assert!((minibatch_constants(&c, 3).unwrap().r_sq - 5.0 / 3.0).abs() < 1e-15);
        let c15 = ProblemConstants::from_parts(5, 15.0, 15.0, 1.0, 4.0, (1.0, 1.0)).unwrap();
        assert_eq!(minibatch_constants(&c15, 4).unwrap().kappa_tilde, 4.5);
        assert_eq!(unlabeled_constants(&c15, 0), c15);
        let u = unlabeled_constants(&c15, 4);
        assert_eq!(u.kappa_tilde, 3.8);
        assert_eq!(u.r_sq, 31.0 / 5.0);
        assert_eq!(u.kappa, 6.2);
    }

    #[test]
    fn resolved_schedule_fills_the_budget() {
        let c = gaussian_constants(&SpectrumSpec::identity(10).unwrap(), (1.0, 1.0)).unwrap();
        let s = resolve_schedule(&c, 80_000, 1, SchedulePolicy { rule: OuterRule::Asymptotic, ..Default::default() }).unwrap();
        assert_eq!(s.t % 2, 0);
        assert!(s.samples(1) <= 80_000 && s.samples(1) + s.t > 80_000);
        assert_eq!(s.eta, 1.0 / 480.0);
        // branch bound 12√2·30·√(1/12) ≈ 146.97 beats √(30·480) = 120
        assert_eq!(s.t, 148);
        assert_eq!(s.theta_tilde_max, (1.0f64 / 12.0).sqrt());

        let tiny = resolve_schedule(&c, 100, 1, SchedulePolicy::default()).unwrap();
        assert_eq!((tiny.t, tiny.k), (50, 2));
    }
}
