//! Experiment configuration files.
//!
//! A config is a TOML document with the sections `[instance]`, `[method]`,
//! `[run]`, `[output]` and an optional `[sweep]`. Unknown keys are rejected so
//! typos surface as diagnostics instead of silently using defaults.

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceConfig,
    pub method: MethodConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    #[default]
    Identity,
    /// `d − 1` unit eigenvalues and one at `1/kappa`.
    TwoCluster,
    /// Explicit `eigenvalues`.
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    #[default]
    Gaussian,
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    /// `b = aᵀx* + ξ`
    #[default]
    WellSpecified,
    /// `b = tanh(aᵀx*) + ξ`
    Tanh,
    /// `b = ±1` with `P(b = 1) = σ(aᵀx*)`
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedKind {
    /// `x* = scale · 1`
    #[default]
    Ones,
    /// `x* = scale · e_d`, the direction of the last eigenvalue.
    LastAxis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    Squared,
    Huberized,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantsSource {
    #[default]
    ClosedForm,
    /// Plug-in estimates from a pilot sample of `pilot` features.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub dim: usize,
    #[serde(default)]
    pub spectrum: SpectrumKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    /// Seed of a Haar rotation of the eigenbasis; absent means axis-aligned.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<u64>,
    #[serde(default)]
    pub design: DesignKind,
    #[serde(default)]
    pub labels: LabelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_star: Option<Vec<f64>>,
    #[serde(default)]
    pub planted: PlantedKind,
    #[serde(default = "one")]
    pub planted_scale: f64,
    #[serde(default = "one")]
    pub noise_var: f64,
    pub loss: LossName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub huber_mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub huber_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub huber_delta: Option<f64>,
    /// Prediction penalty `λ` of logistic-ridge.
    #[serde(default)]
    pub ridge: f64,
    #[serde(default)]
    pub constants: ConstantsSource,
    #[serde(default = "default_pilot")]
    pub pilot: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Sada,
    SadaWc,
    SadaUd,
    Sgd,
    Erm,
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Sada => "sada",
            MethodName::SadaWc => "sada_wc",
            MethodName::SadaUd => "sada_ud",
            MethodName::Sgd => "sgd",
            MethodName::Erm => "erm",
        }
    }

    pub fn is_sada(self) -> bool {
        matches!(self, MethodName::Sada | MethodName::SadaWc | MethodName::SadaUd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaRule {
    #[default]
    Asymptotic,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub name: MethodName,
    #[serde(default)]
    pub theta_rule: ThetaRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_k: Option<usize>,
    #[serde(default = "one_usize")]
    pub batch: usize,
    /// Unlabeled features per step (`sada_ud`), default 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Steps per inner loop that use unlabeled features; defaults to the
    /// minimal inner length capped at `T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<usize>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "one")]
    pub d_radius: f64,
    #[serde(default = "one")]
    pub m_radius: f64,
    /// Split each inner loop into independent partitions of this length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallel_t0: Option<usize>,
    /// SGD step; defaults to `1/(2R²)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sgd_step: Option<f64>,
    #[serde(default = "half")]
    pub tail_fraction: f64,
    #[serde(default = "default_erm_tol")]
    pub erm_tol: f64,
    #[serde(default = "default_erm_iter")]
    pub erm_max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "one_usize")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Labeled sample budget.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Ratio between consecutive SGD report points.
    #[serde(default = "default_probe_ratio")]
    pub probe_ratio: f64,
    /// Frozen evaluation sample for Monte-Carlo risks.
    #[serde(default = "default_eval")]
    pub eval_samples: usize,
    /// Samples-to-threshold target as a fraction of the initial risk.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    /// Frozen sample for numerical population minimizers.
    #[serde(default = "default_solver_budget")]
    pub solver_budget: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            replicates: 1,
            seed: 0,
            n: default_n(),
            probe_ratio: default_probe_ratio(),
            eval_samples: default_eval(),
            threshold: default_threshold(),
            solver_tol: default_solver_tol(),
            solver_budget: default_solver_budget(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "yes")]
    pub svg: bool,
    /// Record measured wall time; off by default so traces are reproducible.
    #[serde(default)]
    pub wall_time: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { svg: true, wall_time: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    N,
    Kappa,
    Method,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::N => "n",
            SweepAxis::Kappa => "kappa",
            SweepAxis::Method => "method",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kappa: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<MethodName>,
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn one_usize() -> usize {
    1
}
fn default_pilot() -> usize {
    10_000
}
fn default_eps() -> f64 {
    0.05
}
fn default_erm_tol() -> f64 {
    1e-10
}
fn default_erm_iter() -> usize {
    10_000
}
fn default_n() -> usize {
    10_000
}
fn default_probe_ratio() -> f64 {
    1.1
}
fn default_eval() -> usize {
    20_000
}
fn default_threshold() -> f64 {
    0.1
}
fn default_solver_tol() -> f64 {
    1e-10
}
fn default_solver_budget() -> usize {
    50_000
}

fn invalid(key: &str, reason: impl Into<String>) -> BenchError {
    BenchError::Config(format!("{key}: {}", reason.into()))
}

impl ExperimentConfig {
    /// Parses and validates a config document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            BenchError::Config(m) => BenchError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let i = &self.instance;
        if i.dim == 0 {
            return Err(invalid("instance.dim", "must be at least 1"));
        }
        match i.spectrum {
            SpectrumKind::Identity => {}
            SpectrumKind::TwoCluster => {
                if i.kappa.is_none() && !self.sweeps(SweepAxis::Kappa) {
                    return Err(invalid("instance.kappa", "required when spectrum = \"two_cluster\""));
                }
                if i.dim < 2 {
                    return Err(invalid("instance.dim", "two_cluster needs at least 2 dimensions"));
                }
            }
            SpectrumKind::List => match &i.eigenvalues {
                None => return Err(invalid("instance.eigenvalues", "required when spectrum = \"list\"")),
                Some(e) if e.len() != i.dim => {
                    return Err(invalid("instance.eigenvalues", format!("has {} entries, dim is {}", e.len(), i.dim)))
                }
                _ => {}
            },
        }
        if let Some(x) = &i.x_star {
            if x.len() != i.dim {
                return Err(invalid("instance.x_star", format!("has {} entries, dim is {}", x.len(), i.dim)));
            }
        }
        if !(i.noise_var >= 0.0) {
            return Err(invalid("instance.noise_var", "must be nonnegative"));
        }
        if i.loss == LossName::Huberized && (i.huber_mu.is_none() || i.huber_l.is_none() || i.huber_delta.is_none()) {
            return Err(invalid("instance.huber_mu", "huberized loss needs huber_mu, huber_l and huber_delta"));
        }
        if i.loss == LossName::Logistic && i.labels != LabelKind::Logistic {
            return Err(invalid("instance.labels", "logistic loss needs labels = \"logistic\" (b = ±1)"));
        }
        if i.constants == ConstantsSource::Estimated && i.pilot < 2 * i.dim {
            return Err(invalid("instance.pilot", format!("needs at least 2·dim = {} features", 2 * i.dim)));
        }

        let m = &self.method;
        if m.batch == 0 {
            return Err(invalid("method.batch", "must be at least 1"));
        }
        if let (Some(t), Some(k)) = (m.inner_t, m.outer_k) {
            let used = t * k * m.batch;
            if used != self.run.n && !self.sweeps(SweepAxis::N) {
                return Err(invalid("method.outer_k", format!("inner_t·outer_k·batch = {used} differs from run.n = {}", self.run.n)));
            }
        }
        if let Some(t) = m.inner_t {
            if t == 0 || t % 2 != 0 {
                return Err(invalid("method.inner_t", "must be positive and even"));
            }
        }
        if !(m.tail_fraction > 0.0 && m.tail_fraction <= 1.0) {
            return Err(invalid("method.tail_fraction", "must lie in (0, 1]"));
        }

        let r = &self.run;
        if r.replicates == 0 {
            return Err(invalid("run.replicates", "must be at least 1"));
        }
        if r.n < 2 && !self.sweeps(SweepAxis::N) {
            return Err(invalid("run.n", "must be at least 2"));
        }
        if !(r.threshold > 0.0 && r.threshold < 1.0) {
            return Err(invalid("run.threshold", "must lie in (0, 1)"));
        }
        if !(r.probe_ratio > 1.0) {
            return Err(invalid("run.probe_ratio", "must exceed 1"));
        }
        if let Some(s) = &self.sweep {
            if s.axis == SweepAxis::Kappa && i.spectrum != SpectrumKind::TwoCluster {
                return Err(invalid("sweep.axis", "a kappa sweep needs spectrum = \"two_cluster\""));
            }
        }
        Ok(())
    }

    fn sweeps(&self, axis: SweepAxis) -> bool {
        self.sweep.as_ref().is_some_and(|s| s.axis == axis)
    }
}
