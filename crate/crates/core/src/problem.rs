//! Synthetic generalized-linear-prediction instances and their constants.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{param, Error, Result};
use crate::losses::{LossKind, LossModel};
use crate::solver::{minimize, EmpiricalObjective, SolverMethod};
use crate::stream::{stream_rng, StreamRng};

/// Orthogonal basis of Σ's eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub enum Rotation {
    AxisAligned,
    /// Haar-distributed orthogonal matrix drawn from the given seed.
    Seeded(u64),
    /// Explicit orthogonal matrix, columns are eigenvectors.
    Matrix(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSpec {
    eigenvalues: Vec<f64>,
    rotation: Rotation,
}

impl SpectrumSpec {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidSpectrum("empty eigenvalue list".into()));
        }
        if let Some(bad) = eigenvalues.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidSpectrum(format!("eigenvalue {bad} is not positive and finite")));
        }
        Ok(Self { eigenvalues, rotation: Rotation::AxisAligned })
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::new(vec![1.0; d])
    }

    /// `d - 1` eigenvalues at 1 and one at `1/kappa`.
    pub fn two_cluster(d: usize, kappa: f64) -> Result<Self> {
        if d < 2 || !(kappa >= 1.0) {
            return Err(Error::InvalidSpectrum(format!("two_cluster needs d >= 2 and kappa >= 1, got d={d}, kappa={kappa}")));
        }
        let mut e = vec![1.0; d];
        e[d - 1] = 1.0 / kappa;
        Self::new(e)
    }

    pub fn with_rotation(mut self, rotation: Rotation) -> Result<Self> {
        if let Rotation::Matrix(u) = &rotation {
            let d = self.dim();
            if u.nrows() != d || u.ncols() != d {
                return Err(Error::Dimension { expected: d, got: u.nrows() });
            }
            let err = (u.transpose() * u - DMatrix::identity(d, d)).amax();
            if err > 1e-10 {
                return Err(Error::InvalidSpectrum(format!("rotation is not orthogonal (error {err:e})")));
            }
        }
        self.rotation = rotation;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    pub fn mu(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// The eigenvector basis, `None` when axis-aligned.
    pub fn basis(&self) -> Option<DMatrix<f64>> {
        match &self.rotation {
            Rotation::AxisAligned => None,
            Rotation::Matrix(u) => Some(u.clone()),
            Rotation::Seeded(seed) => Some(haar_orthogonal(self.dim(), *seed)),
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let lam = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        match self.basis() {
            None => lam,
            Some(u) => &u * lam * u.transpose(),
        }
    }
}

/// Orthogonal matrix from the QR factorization of a Gaussian matrix, with the
/// sign convention that makes the distribution Haar.
pub fn haar_orthogonal(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, 0x0b5e_55ed);
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    Gaussian(SpectrumSpec),
    /// `a = Σ^{1/2} u` with `u` uniform on the sphere of radius `√d`.
    BoundedSphere(SpectrumSpec),
}

impl Design {
    pub fn spectrum(&self) -> &SpectrumSpec {
        match self {
            Design::Gaussian(s) | Design::BoundedSphere(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    /// `b = tanh(z) + noise`
    Tanh,
    /// `b = ±1` with `P(b = 1) = 1 / (1 + e^{-z})`; noise variance is ignored.
    Logistic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LabelModel {
    WellSpecified { x_star: Vec<f64>, noise_var: f64 },
    Misspecified { link: Link, x_star: Vec<f64>, noise_var: f64 },
}

impl LabelModel {
    pub fn planted(&self) -> &[f64] {
        match self {
            LabelModel::WellSpecified { x_star, .. } | LabelModel::Misspecified { x_star, .. } => x_star,
        }
    }

    pub fn noise_var(&self) -> f64 {
        match self {
            LabelModel::WellSpecified { noise_var, .. } | LabelModel::Misspecified { noise_var, .. } => *noise_var,
        }
    }
}

/// A design plus a label model, with the rotation resolved once.
#[derive(Debug, Clone)]
pub struct DataDistribution {
    design: Design,
    labels: LabelModel,
    basis: Option<DMatrix<f64>>,
    sqrt_eig: Vec<f64>,
    noise_sd: f64,
}

impl DataDistribution {
    pub fn new(design: Design, labels: LabelModel) -> Result<Self> {
        let spec = design.spectrum();
        let d = spec.dim();
        if labels.planted().len() != d {
            return Err(Error::Dimension { expected: d, got: labels.planted().len() });
        }
        let nv = labels.noise_var();
        if !(nv >= 0.0 && nv.is_finite()) {
            return Err(param("noise_var", format!("must be nonnegative, got {nv}")));
        }
        Ok(Self {
            basis: spec.basis(),
            sqrt_eig: spec.eigenvalues().iter().map(|l| l.sqrt()).collect(),
            noise_sd: nv.sqrt(),
            design,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.sqrt_eig.len()
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn labels(&self) -> &LabelModel {
        &self.labels
    }

    pub fn spectrum(&self) -> &SpectrumSpec {
        self.design.spectrum()
    }

    pub fn basis(&self) -> Option<&DMatrix<f64>> {
        self.basis.as_ref()
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.design, Design::Gaussian(_))
    }

    /// Writes `a` and returns nothing; `scratch` must have length `d`.
    pub fn sample_features_into(&self, rng: &mut StreamRng, a: &mut [f64], scratch: &mut [f64]) {
        let target: &mut [f64] = if self.basis.is_some() { scratch } else { a };
        for w in target.iter_mut() {
            *w = rng.sample(StandardNormal);
        }
        if let Design::BoundedSphere(_) = self.design {
            let r = (target.len() as f64).sqrt() / target.iter().map(|w| w * w).sum::<f64>().sqrt();
            target.iter_mut().for_each(|w| *w *= r);
        }
        for (w, s) in target.iter_mut().zip(&self.sqrt_eig) {
            *w *= s;
        }
        if let Some(u) = &self.basis {
            let d = a.len();
            for (i, ai) in a.iter_mut().enumerate() {
                let mut acc = 0.0;
                for j in 0..d {
                    acc += u[(i, j)] * scratch[j];
                }
                *ai = acc;
            }
        }
    }

    /// Writes `a` and returns its label.
    pub fn sample_into(&self, rng: &mut StreamRng, a: &mut [f64], scratch: &mut [f64]) -> f64 {
        self.sample_features_into(rng, a, scratch);
        let z: f64 = a.iter().zip(self.labels.planted()).map(|(x, y)| x * y).sum();
        match self.labels {
            LabelModel::WellSpecified { .. } => z + self.noise_sd * rng.sample::<f64, _>(StandardNormal),
            LabelModel::Misspecified { link: Link::Tanh, .. } => {
                z.tanh() + self.noise_sd * rng.sample::<f64, _>(StandardNormal)
            }
            LabelModel::Misspecified { link: Link::Logistic, .. } => {
                if rng.random::<f64>() < crate::losses::sigmoid(z) {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// Draws `n` pairs into a row-major feature block and a label vector.
    pub fn sample_block(&self, rng: &mut StreamRng, n: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut feats = vec![0.0; n * d];
        let mut labels = Vec::with_capacity(n);
        let mut scratch = vec![0.0; d];
        for row in feats.chunks_exact_mut(d) {
            labels.push(self.sample_into(rng, row, &mut scratch));
        }
        (feats, labels)
    }
}

/// Problem constants consumed by the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConstants {
    pub dim: usize,
    /// Fourth-moment radius `R²`.
    pub r_sq: f64,
    /// `R² / μ`
    pub kappa: f64,
    pub kappa_tilde: f64,
    /// `λ_min(Σ)`
    pub mu: f64,
    pub lambda_max: f64,
    pub alpha: f64,
    pub l_loss: f64,
    pub mu_loss: f64,
    /// Gradient-noise constant `B`.
    pub b_const: f64,
    /// Gradient-noise constant `L`.
    pub l_const: f64,
    /// True when `B` and `L` were set explicitly rather than derived.
    pub noise_overridden: bool,
    /// `tr(H⁻¹Q)` when known.
    pub trace_hinv_q: Option<f64>,
    /// `tr Q` when known.
    pub trace_q: Option<f64>,
    pub estimated: bool,
}

impl ProblemConstants {
    /// Assembles constants with `B = αR²` and `L = ακ̃`.
    pub fn from_parts(
        dim: usize,
        r_sq: f64,
        kappa_tilde: f64,
        mu: f64,
        lambda_max: f64,
        loss_bounds: (f64, f64),
    ) -> Result<Self> {
        let (mu_loss, l_loss) = loss_bounds;
        if !(mu_loss > 0.0 && l_loss >= mu_loss && l_loss.is_finite()) {
            return Err(param("loss_bounds", format!("need 0 < mu_loss <= L_loss, got ({mu_loss}, {l_loss})")));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidSpectrum(format!("mu = {mu} is not positive")));
        }
        let alpha = l_loss / mu_loss;
        let c = Self {
            dim,
            r_sq,
            kappa: r_sq / mu,
            kappa_tilde,
            mu,
            lambda_max,
            alpha,
            l_loss,
            mu_loss,
            b_const: alpha * r_sq,
            l_const: alpha * kappa_tilde,
            noise_overridden: false,
            trace_hinv_q: None,
            trace_q: None,
            estimated: false,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let tol = 1e-12 * self.kappa.abs().max(1.0);
        if !(self.kappa >= 1.0 - tol) {
            return Err(param("kappa", format!("must be >= 1, got {}", self.kappa)));
        }
        if !(self.kappa_tilde <= self.kappa + tol) {
            return Err(param("kappa_tilde", format!("{} exceeds kappa = {}", self.kappa_tilde, self.kappa)));
        }
        if !(self.alpha >= 1.0 - 1e-12) {
            return Err(param("alpha", format!("must be >= 1, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Overrides `B` and `L`.
    pub fn with_noise_constants(mut self, b_const: f64, l_const: f64) -> Self {
        self.b_const = b_const;
        self.l_const = l_const;
        self.noise_overridden = true;
        self
    }

    /// `κ(Σ) = λ_max / μ`
    pub fn kappa_sigma(&self) -> f64 {
        self.lambda_max / self.mu
    }

    /// Re-derives `κ`, and `B`, `L` unless overridden, after `r_sq`,
    /// `kappa_tilde`, `mu` or `alpha` changed.
    pub(crate) fn refresh(&mut self) {
        self.kappa = self.r_sq / self.mu;
        if !self.noise_overridden {
            self.b_const = self.alpha * self.r_sq;
            self.l_const = self.alpha * self.kappa_tilde;
        }
    }
}

/// `R² = 3 trΣ`, `κ̃ = 3d`: the sub-Gaussian constants.
pub fn gaussian_constants(spec: &SpectrumSpec, loss_bounds: (f64, f64)) -> Result<ProblemConstants> {
    let d = spec.dim();
    ProblemConstants::from_parts(d, 3.0 * spec.trace(), 3.0 * d as f64, spec.mu(), spec.lambda_max(), loss_bounds)
}

/// `R² = d λ_max`, `κ̃ = d`: exact for the sphere design since `‖a‖²_{Σ⁻¹} = d`.
pub fn sphere_constants(spec: &SpectrumSpec, loss_bounds: (f64, f64)) -> Result<ProblemConstants> {
    let d = spec.dim() as f64;
    ProblemConstants::from_parts(spec.dim(), d * spec.lambda_max(), d, spec.mu(), spec.lambda_max(), loss_bounds)
}

/// Plug-in constants from a pilot sample of feature rows.
pub fn estimate_constants(pilot: &[f64], dim: usize, loss_bounds: (f64, f64)) -> Result<ProblemConstants> {
    if dim == 0 || pilot.len() % dim != 0 {
        return Err(Error::Dimension { expected: dim, got: pilot.len() });
    }
    let n = pilot.len() / dim;
    if n < dim {
        return Err(param("pilot", format!("need at least {dim} rows, got {n}")));
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for row in pilot.chunks_exact(dim) {
        let v = DVector::from_column_slice(row);
        cov.ger(1.0, &v, &v, 1.0);
    }
    cov /= n as f64;
    let eig = SymmetricEigen::new(cov);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 1e-10 * max.max(f64::MIN_POSITIVE)) {
        return Err(Error::RankDeficient { min_eig: min });
    }
    let trace = eig.eigenvalues.sum();
    let mut c = ProblemConstants::from_parts(dim, 3.0 * trace, 3.0 * dim as f64, min, max, loss_bounds)?;
    c.estimated = true;
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    ClosedForm,
    NumericalOracle { tolerance: f64, sample_budget: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMinimizer {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub provenance: Provenance,
}

/// A distribution, a loss, and an optional ridge `ridge/2 ‖x‖²` on the risk.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub dist: DataDistribution,
    pub loss: LossModel,
    pub ridge: f64,
}

impl ProblemInstance {
    pub fn new(dist: DataDistribution, loss: LossModel) -> Self {
        Self { dist, loss, ridge: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.dist.dim()
    }

    /// The regularized objective with an extra prediction penalty and ridge.
    pub fn regularized(&self, prediction_penalty: f64, ridge: f64) -> Self {
        Self { dist: self.dist.clone(), loss: self.loss.with_prediction_penalty(prediction_penalty), ridge: self.ridge + ridge }
    }

    /// Residual-symmetric loss, well-specified labels, no ridge: the planted
    /// parameter minimizes the risk.
    pub fn planted_is_minimizer(&self) -> bool {
        self.loss.is_residual_symmetric()
            && self.ridge == 0.0
            && matches!(self.dist.labels(), LabelModel::WellSpecified { .. })
    }

    /// Excess risk equals `½‖x − x*‖²_Σ`.
    pub fn has_closed_form_risk(&self) -> bool {
        self.planted_is_minimizer() && matches!(self.loss.kind, LossKind::Squared)
    }

    /// Design constants for the instance's loss.
    pub fn constants(&self) -> Result<ProblemConstants> {
        let bounds = (self.loss.mu_loss(), self.loss.l_loss());
        let mut c = match self.dist.design() {
            Design::Gaussian(s) => gaussian_constants(s, bounds)?,
            Design::BoundedSphere(s) => sphere_constants(s, bounds)?,
        };
        if self.has_closed_form_risk() {
            let s2 = self.dist.labels().noise_var();
            c.trace_hinv_q = Some(s2 * self.dim() as f64);
            c.trace_q = Some(s2 * self.dist.spectrum().trace());
        }
        Ok(c)
    }

    /// Population minimizer; closed form when the planted parameter is optimal,
    /// otherwise a damped Newton solve on a frozen sample of size `budget`.
    pub fn solve_population_minimizer(&self, tol: f64, budget: usize, seed: u64) -> Result<PopulationMinimizer> {
        let d = self.dim();
        if self.planted_is_minimizer() {
            let x_star = self.dist.labels().planted().to_vec();
            let f_star = residual_noise_risk(&self.loss, self.dist.labels().noise_var());
            return Ok(PopulationMinimizer { x_star, f_star, provenance: Provenance::ClosedForm });
        }
        if budget < 10 * d {
            return Err(param("budget", format!("need at least 10·d = {} samples, got {budget}", 10 * d)));
        }
        let mut rng = stream_rng(seed, 0x00_4d49_4e49);
        let (feats, labels) = self.dist.sample_block(&mut rng, budget);
        let obj = EmpiricalObjective::new(d, feats, labels, self.loss, self.ridge)?;
        let out = minimize(&obj, &vec![0.0; d], tol, 200, SolverMethod::Newton)?;
        Ok(PopulationMinimizer {
            f_star: obj.value(&out.x),
            x_star: out.x,
            provenance: Provenance::NumericalOracle { tolerance: tol, sample_budget: budget },
        })
    }

    /// Builds an excess-risk evaluator with frozen evaluation samples.
    pub fn risk_evaluator(&self, minimizer: &PopulationMinimizer, eval_samples: usize, seed: u64) -> Result<RiskEvaluator> {
        RiskEvaluator::new(self, minimizer, eval_samples, seed)
    }

    /// `(tr(H⁻¹Q), tr Q)` at the minimizer, estimated on `samples` fresh pairs
    /// unless known in closed form.
    pub fn noise_traces(&self, minimizer: &PopulationMinimizer, samples: usize, seed: u64) -> Result<(f64, f64)> {
        if self.has_closed_form_risk() {
            let s2 = self.dist.labels().noise_var();
            return Ok((s2 * self.dim() as f64, s2 * self.dist.spectrum().trace()));
        }
        if samples == 0 {
            return Err(Error::EvaluationBudget);
        }
        let d = self.dim();
        let mut rng = stream_rng(seed, 0x0051_5452);
        let (feats, labels) = self.dist.sample_block(&mut rng, samples);
        let mut q = DMatrix::<f64>::zeros(d, d);
        let mut h = DMatrix::<f64>::identity(d, d) * self.ridge;
        for (row, &b) in feats.chunks_exact(d).zip(&labels) {
            let v = DVector::from_column_slice(row);
            let z = v.dot(&DVector::from_column_slice(&minimizer.x_star));
            let g = self.loss.deriv(z, b);
            q.ger(g * g / samples as f64, &v, &v, 1.0);
            h.ger(self.loss.second_deriv(z, b) / samples as f64, &v, &v, 1.0);
        }
        let hinv = h.try_inverse().ok_or(Error::RankDeficient { min_eig: 0.0 })?;
        Ok(((hinv * &q).trace(), q.trace()))
    }
}

/// `E ℓ(ξ)` for `ξ ~ N(0, σ²)` and a residual loss.
fn residual_noise_risk(loss: &LossModel, noise_var: f64) -> f64 {
    match loss.kind {
        LossKind::Squared => 0.5 * noise_var,
        _ if noise_var == 0.0 => 0.0,
        _ => {
            // Simpson's rule on ±12σ; the integrand is smooth away from the kinks
            let sd = noise_var.sqrt();
            let n = 20_000usize;
            let (lo, hi) = (-12.0 * sd, 12.0 * sd);
            let h = (hi - lo) / n as f64;
            let pdf = |x: f64| (-0.5 * x * x / noise_var).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
            let f = |x: f64| loss.value(x, 0.0) * pdf(x);
            let mut s = f(lo) + f(hi);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * f(lo + i as f64 * h);
            }
            s * h / 3.0
        }
    }
}

/// Excess-risk evaluation, exact for quadratic instances and Monte-Carlo with
/// common random numbers otherwise.
#[derive(Debug, Clone)]
pub enum RiskEvaluator {
    Quadratic {
        eigenvalues: Vec<f64>,
        basis: Option<DMatrix<f64>>,
        x_star: Vec<f64>,
    },
    MonteCarlo {
        dim: usize,
        feats: Vec<f64>,
        labels: Vec<f64>,
        loss: LossModel,
        ridge: f64,
        x_star: Vec<f64>,
        base: Vec<f64>,
    },
}

impl RiskEvaluator {
    pub fn new(instance: &ProblemInstance, minimizer: &PopulationMinimizer, eval_samples: usize, seed: u64) -> Result<Self> {
        let d = instance.dim();
        if minimizer.x_star.len() != d {
            return Err(Error::Dimension { expected: d, got: minimizer.x_star.len() });
        }
        if instance.has_closed_form_risk() {
            return Ok(RiskEvaluator::Quadratic {
                eigenvalues: instance.dist.spectrum().eigenvalues().to_vec(),
                basis: instance.dist.basis().cloned(),
                x_star: minimizer.x_star.clone(),
            });
        }
        if eval_samples == 0 {
            return Err(Error::EvaluationBudget);
        }
        let mut rng = stream_rng(seed, 0x0045_5641_4c);
        let (feats, labels) = instance.dist.sample_block(&mut rng, eval_samples);
        let ridge_star = 0.5 * instance.ridge * crate::linalg::norm_sq(&minimizer.x_star);
        let base = feats
            .chunks_exact(d)
            .zip(&labels)
            .map(|(a, &b)| instance.loss.value(dot(a, &minimizer.x_star), b) + ridge_star)
            .collect();
        Ok(RiskEvaluator::MonteCarlo {
            dim: d,
            feats,
            labels,
            loss: instance.loss,
            ridge: instance.ridge,
            x_star: minimizer.x_star.clone(),
            base,
        })
    }

    /// `(mean, stderr)` of `F(x) − F(x*)`.
    pub fn evaluate(&self, x: &[f64]) -> (f64, f64) {
        match self {
            RiskEvaluator::Quadratic { eigenvalues, basis, x_star } => {
                let diff: Vec<f64> = x.iter().zip(x_star).map(|(a, b)| a - b).collect();
                let coords: Vec<f64> = match basis {
                    None => diff,
                    Some(u) => (u.transpose() * DVector::from_column_slice(&diff)).as_slice().to_vec(),
                };
                let r = 0.5 * coords.iter().zip(eigenvalues).map(|(c, l)| l * c * c).sum::<f64>();
                (r, 0.0)
            }
            RiskEvaluator::MonteCarlo { dim, feats, labels, loss, ridge, base, .. } => {
                let ridge_x = 0.5 * ridge * crate::linalg::norm_sq(x);
                let n = labels.len() as f64;
                let (mut s, mut s2) = (0.0, 0.0);
                for ((a, &b), f0) in feats.chunks_exact(*dim).zip(labels).zip(base) {
                    let v = loss.value(dot(a, x), b) + ridge_x - f0;
                    s += v;
                    s2 += v * v;
                }
                let mean = s / n;
                let var = ((s2 / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
                (mean, (var / n).sqrt())
            }
        }
    }

    pub fn x_star(&self) -> &[f64] {
        match self {
            RiskEvaluator::Quadratic { x_star, .. } | RiskEvaluator::MonteCarlo { x_star, .. } => x_star,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quad(eigs: Vec<f64>, x_star: Vec<f64>, s2: f64) -> ProblemInstance {
        let dist = DataDistribution::new(
            Design::Gaussian(SpectrumSpec::new(eigs).unwrap()),
            LabelModel::WellSpecified { x_star, noise_var: s2 },
        )
        .unwrap();
        ProblemInstance::new(dist, LossModel::squared())
    }

    #[test]
    fn gaussian_constant_examples() {
        let c = gaussian_constants(&SpectrumSpec::identity(5).unwrap(), (1.0, 1.0)).unwrap();
        assert_eq!((c.kappa, c.kappa_tilde, c.r_sq, c.alpha), (15.0, 15.0, 15.0, 1.0));

        let c = gaussian_constants(&SpectrumSpec::new(vec![1.0]).unwrap(), (1.0, 1.0)).unwrap();
        assert_eq!((c.kappa, c.kappa_tilde), (3.0, 3.0));

        let c = gaussian_constants(&SpectrumSpec::new(vec![4.0, 1.0]).unwrap(), (1.0, 2.0)).unwrap();
        assert_eq!((c.mu, c.kappa, c.kappa_tilde, c.alpha, c.b_const, c.l_const), (1.0, 15.0, 6.0, 2.0, 30.0, 12.0));

        assert!(matches!(SpectrumSpec::new(vec![1.0, 0.0]), Err(Error::InvalidSpectrum(_))));
        assert!(SpectrumSpec::new(vec![]).is_err());
    }

    #[test]
    fn estimate_from_pilot() {
        let dist = quad(vec![1.0, 1.0], vec![0.0, 0.0], 1.0).dist;
        let (feats, _) = dist.sample_block(&mut stream_rng(1, 0), 10_000);
        let c = estimate_constants(&feats, 2, (1.0, 1.0)).unwrap();
        assert!(c.estimated);
        assert!((c.kappa / 6.0 - 1.0).abs() < 0.1, "kappa {}", c.kappa);

        let dist = quad(vec![4.0, 1.0], vec![0.0, 0.0], 1.0).dist;
        let (feats, _) = dist.sample_block(&mut stream_rng(2, 0), 100_000);
        let c = estimate_constants(&feats, 2, (1.0, 1.0)).unwrap();
        assert!((0.9..=1.1).contains(&c.mu), "mu {}", c.mu);

        let degenerate = vec![1.0, 0.0, 1.0, 0.0];
        assert!(matches!(estimate_constants(&degenerate, 2, (1.0, 1.0)), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn closed_form_minimizer_and_risk() {
        let inst = quad(vec![4.0, 1.0], vec![1.0, -2.0], 0.7);
        let m = inst.solve_population_minimizer(1e-8, 0, 0).unwrap();
        assert_eq!(m.x_star, vec![1.0, -2.0]);
        assert_eq!(m.f_star, 0.35);
        assert_eq!(m.provenance, Provenance::ClosedForm);
        let ev = inst.risk_evaluator(&m, 0, 0).unwrap();
        assert_eq!(ev.evaluate(&[1.0, -2.0]), (0.0, 0.0));
        assert_eq!(ev.evaluate(&[2.0, -2.0]), (2.0, 0.0));

        let inst = quad(vec![1.0, 1.0], vec![0.0, 0.0], 1.0);
        let m = inst.solve_population_minimizer(1e-8, 0, 0).unwrap();
        assert_eq!(inst.risk_evaluator(&m, 0, 0).unwrap().evaluate(&[1.0, 1.0]).0, 1.0);
    }

    #[test]
    fn huberized_noiseless_minimizer_is_planted() {
        let mut inst = quad(vec![2.0, 1.0], vec![0.5, 1.5], 0.0);
        inst.loss = LossModel::huberized(1.0, 4.0, 1.0).unwrap();
        let m = inst.solve_population_minimizer(1e-8, 0, 0).unwrap();
        assert_eq!(m.x_star, vec![0.5, 1.5]);
        assert_eq!(m.f_star, 0.0);
    }

    #[test]
    fn huberized_noise_risk_quadrature() {
        // with δ huge the loss is L r²/2, so E = L σ²/2
        let l = LossModel::huberized(1.0, 4.0, 1e3).unwrap();
        assert_relative_eq!(residual_noise_risk(&l, 0.25), 0.5, max_relative = 1e-9);
    }

    #[test]
    fn logistic_minimizer_is_deterministic_and_stationary() {
        let dist = DataDistribution::new(
            Design::Gaussian(SpectrumSpec::new(vec![1.0, 0.5]).unwrap()),
            LabelModel::Misspecified { link: Link::Logistic, x_star: vec![1.0, -1.0], noise_var: 0.0 },
        )
        .unwrap();
        let inst = ProblemInstance::new(dist, LossModel::logistic_ridge(0.05).unwrap());
        let a = inst.solve_population_minimizer(1e-8, 100_000, 3).unwrap();
        let b = inst.solve_population_minimizer(1e-8, 100_000, 3).unwrap();
        assert_eq!(a, b);
        let mut rng = stream_rng(3, 0x00_4d49_4e49);
        let (f, l) = inst.dist.sample_block(&mut rng, 100_000);
        let obj = EmpiricalObjective::new(2, f, l, inst.loss, 0.0).unwrap();
        let mut g = vec![0.0; 2];
        obj.gradient(&a.x_star, &mut g);
        assert!(crate::linalg::norm_sq(&g).sqrt() <= 1e-8);
        assert!(matches!(a.provenance, Provenance::NumericalOracle { .. }));

        let ev = inst.risk_evaluator(&a, 50_000, 9).unwrap();
        let (r, se) = ev.evaluate(&a.x_star);
        assert_eq!(r, 0.0);
        assert_eq!(se, 0.0);
        let (r, se) = ev.evaluate(&[0.0, 0.0]);
        assert!(r > 0.0 && se > 0.0);
        assert!(matches!(inst.risk_evaluator(&a, 0, 9), Err(Error::EvaluationBudget)));
    }

    #[test]
    fn rotated_covariance_matches_samples() {
        let spec = SpectrumSpec::new(vec![4.0, 1.0, 0.25]).unwrap().with_rotation(Rotation::Seeded(5)).unwrap();
        let sigma = spec.covariance();
        let dist = DataDistribution::new(
            Design::Gaussian(spec),
            LabelModel::WellSpecified { x_star: vec![0.0; 3], noise_var: 0.0 },
        )
        .unwrap();
        let n = 200_000;
        let (f, _) = dist.sample_block(&mut stream_rng(4, 0), n);
        let mut emp = DMatrix::<f64>::zeros(3, 3);
        for row in f.chunks_exact(3) {
            let v = DVector::from_column_slice(row);
            emp.ger(1.0 / n as f64, &v, &v, 1.0);
        }
        assert!((emp - &sigma).norm() / sigma.norm() < 0.02);
    }

    #[test]
    fn sphere_design_has_fixed_mahalanobis_norm() {
        let spec = SpectrumSpec::new(vec![4.0, 1.0]).unwrap();
        let c = sphere_constants(&spec, (1.0, 1.0)).unwrap();
        assert_eq!((c.r_sq, c.kappa_tilde), (8.0, 2.0));
        let dist = DataDistribution::new(
            Design::BoundedSphere(spec),
            LabelModel::WellSpecified { x_star: vec![0.0; 2], noise_var: 0.0 },
        )
        .unwrap();
        let (f, _) = dist.sample_block(&mut stream_rng(5, 0), 100);
        for row in f.chunks_exact(2) {
            assert_relative_eq!(row[0] * row[0] / 4.0 + row[1] * row[1], 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn fourth_moment_condition_holds_empirically() {
        let dist = quad(vec![4.0, 1.0], vec![0.0, 0.0], 0.0).dist;
        let c = gaussian_constants(dist.spectrum(), (1.0, 1.0)).unwrap();
        let sigma = dist.spectrum().covariance();
        let n = 100_000;
        let (f, _) = dist.sample_block(&mut stream_rng(6, 0), n);
        let mut m = DMatrix::<f64>::zeros(2, 2);
        for row in f.chunks_exact(2) {
            let v = DVector::from_column_slice(row);
            m.ger(v.norm_squared() / n as f64, &v, &v, 1.0);
        }
        let gap = m - &sigma * c.r_sq;
        let top = SymmetricEigen::new(gap).eigenvalues.max();
        assert!(top <= 0.05 * (sigma * c.r_sq).norm(), "top eigenvalue {top}");
    }
}
