//! Exact second-moment dynamics of the inner loop under Gaussian design.
//!
//! Writing `η_t = (x_t − x̃₊*, y_t − x̃₊*)`, one inner step is
//! `η_t = Â_t η_{t−1} + ζ_t` with
//! `Â_t = [[0, I − η aaᵀ], [−cI, (1+c)I − q aaᵀ]]`, `ζ_t = (η ε a, q ε a)`,
//! `c = (1−θ)/(1+θ)`, `q = (η+θγ)/(1+θ)`. Everything here is dense in `2d`
//! and meant for `d ≤ 8`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::engine::{Engine, InnerState, VariantConfig};
use crate::error::{param, Error, Result};
use crate::losses::LossModel;
use crate::problem::{Design, ProblemInstance};
use crate::schedule::InnerSlice;
use crate::stream::{stream_id, stream_rng, DistributionSource};

pub const MAX_ORACLE_DIM: usize = 8;

fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_ORACLE_DIM {
        return Err(Error::OracleDimension(d));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SymmetryPolicy {
    /// Replace `C` by `(C + Cᵀ)/2`, which leaves the moment unchanged.
    #[default]
    Symmetrize,
    Reject,
}

/// `E[aaᵀ C aaᵀ] = 2ΣCΣ + Σ tr(CΣ)` for `a ~ N(0, Σ)` and symmetric `C`.
pub fn fourth_moment_apply(sigma: &DMatrix<f64>, c: &DMatrix<f64>, policy: SymmetryPolicy) -> Result<DMatrix<f64>> {
    let asym = (c - c.transpose()).amax();
    let cs = if asym > 1e-12 * c.amax().max(1.0) {
        match policy {
            SymmetryPolicy::Reject => return Err(param("C", format!("asymmetric by {asym:e}"))),
            SymmetryPolicy::Symmetrize => (c + c.transpose()) * 0.5,
        }
    } else {
        c.clone()
    };
    let sc = sigma * &cs;
    Ok(&sc * sigma * 2.0 + sigma * sc.trace())
}

/// Deterministic part of the inner dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleParams {
    pub eta: f64,
    pub c: f64,
    pub q: f64,
}

impl From<&InnerSlice> for OracleParams {
    fn from(s: &InnerSlice) -> Self {
        Self { eta: s.eta, c: s.c(), q: s.q() }
    }
}

/// `A = E Â = [[0, I − ηΣ], [−cI, (1+c)I − qΣ]]`
pub fn momentum_matrix(sigma: &DMatrix<f64>, p: &OracleParams) -> DMatrix<f64> {
    let d = sigma.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let mut a = DMatrix::<f64>::zeros(2 * d, 2 * d);
    a.view_mut((0, d), (d, d)).copy_from(&(&id - sigma * p.eta));
    a.view_mut((d, 0), (d, d)).copy_from(&(&id * -p.c));
    a.view_mut((d, d), (d, d)).copy_from(&(&id * (1.0 + p.c) - sigma * p.q));
    a
}

/// `[[η², ηq], [ηq, q²]] ⊗ X`
fn weight_blocks(x: &DMatrix<f64>, p: &OracleParams) -> DMatrix<f64> {
    let d = x.nrows();
    let mut out = DMatrix::<f64>::zeros(2 * d, 2 * d);
    out.view_mut((0, 0), (d, d)).copy_from(&(x * (p.eta * p.eta)));
    out.view_mut((0, d), (d, d)).copy_from(&(x * (p.eta * p.q)));
    out.view_mut((d, 0), (d, d)).copy_from(&(x * (p.eta * p.q)));
    out.view_mut((d, d), (d, d)).copy_from(&(x * (p.q * p.q)));
    out
}

/// `E[Â C Âᵀ] = A C Aᵀ + [[η², ηq], [ηq, q²]] ⊗ (E[aaᵀC₂₂aaᵀ] − ΣC₂₂Σ)`.
pub fn apply_b(sigma: &DMatrix<f64>, a: &DMatrix<f64>, c: &DMatrix<f64>, p: &OracleParams) -> Result<DMatrix<f64>> {
    let d = sigma.nrows();
    let c22 = c.view((d, d), (d, d)).into_owned();
    let m = fourth_moment_apply(sigma, &c22, SymmetryPolicy::Symmetrize)?;
    let extra = m - sigma * &c22 * sigma;
    Ok(a * c * a.transpose() + weight_blocks(&extra, p))
}

/// `C_t` with its noise matrix `R = E[ε² aaᵀ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState {
    pub c: DMatrix<f64>,
    pub t: usize,
    pub noise_r: DMatrix<f64>,
}

impl CovarianceState {
    /// `C₀ = 0`
    pub fn new(noise_r: DMatrix<f64>) -> Result<Self> {
        let d = noise_r.nrows();
        check_dim(d)?;
        Ok(Self { c: DMatrix::zeros(2 * d, 2 * d), t: 0, noise_r })
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new((&self.c + self.c.transpose()) * 0.5).eigenvalues.min()
    }
}

/// `C_t = B∘C_{t−1} + [[η²R, ηqR], [ηqR, q²R]]`
pub fn covariance_step(state: &CovarianceState, sigma: &DMatrix<f64>, a: &DMatrix<f64>, p: &OracleParams) -> Result<CovarianceState> {
    check_dim(sigma.nrows())?;
    let c = apply_b(sigma, a, &state.c, p)? + weight_blocks(&state.noise_r, p);
    Ok(CovarianceState { c: (&c + c.transpose()) * 0.5, t: state.t + 1, noise_r: state.noise_r.clone() })
}

/// `C₀, …, C_T`
pub fn covariance_sequence(sigma: &DMatrix<f64>, noise_r: &DMatrix<f64>, p: &OracleParams, t: usize) -> Result<Vec<DMatrix<f64>>> {
    let a = momentum_matrix(sigma, p);
    let mut st = CovarianceState::new(noise_r.clone())?;
    let mut seq = vec![st.c.clone()];
    for _ in 0..t {
        st = covariance_step(&st, sigma, &a, p)?;
        seq.push(st.c.clone());
    }
    Ok(seq)
}

/// `⟨diag(Σ, 0), X⟩`
fn top_left_inner(sigma: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    let d = sigma.nrows();
    sigma.component_mul(&x.view((0, 0), (d, d))).sum()
}

/// `(4/T²)⟨diag(Σ,0), Σ_{s,t>T/2} A^{(s−t)₊} X_{min(s,t)} (A^{(t−s)₊})ᵀ⟩`.
///
/// Telescoped over `m = min(s, t)`: each `X_m` contributes
/// `⟨D, X_m + G X_m + X_m Gᵀ⟩` with `G = Σ_{j=1}^{T−m} A^j`, built from
/// `m = T` downward, so the cost is `O(T)` matrix products.
pub fn l_var_eval(x_seq: &[DMatrix<f64>], a: &DMatrix<f64>, sigma: &DMatrix<f64>, t: usize) -> Result<f64> {
    if t == 0 || t % 2 != 0 {
        return Err(Error::Schedule(format!("T = {t} must be positive and even")));
    }
    if x_seq.len() <= t {
        return Err(param("C_seq", format!("need entries 0..={t}, got {}", x_seq.len())));
    }
    let n = a.nrows();
    let mut g = DMatrix::<f64>::zeros(n, n);
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut total = 0.0;
    for m in (t / 2 + 1..=t).rev() {
        if m < t {
            power = &power * a;
            g += &power;
        }
        let x = &x_seq[m];
        total += top_left_inner(sigma, x) + top_left_inner(sigma, &(&g * x)) + top_left_inner(sigma, &(x * g.transpose()));
    }
    Ok(4.0 * total / (t * t) as f64)
}

/// Literal double sum of [`l_var_eval`]'s definition; `O(T²)` products.
pub fn l_var_direct(x_seq: &[DMatrix<f64>], a: &DMatrix<f64>, sigma: &DMatrix<f64>, t: usize) -> f64 {
    let n = a.nrows();
    let mut powers = vec![DMatrix::<f64>::identity(n, n)];
    for j in 1..=t {
        powers.push(&powers[j - 1] * a);
    }
    let mut total = 0.0;
    for s in t / 2 + 1..=t {
        for r in t / 2 + 1..=t {
            let left = &powers[s.saturating_sub(r)];
            let right = &powers[r.saturating_sub(s)];
            total += top_left_inner(sigma, &(left * &x_seq[s.min(r)] * right.transpose()));
        }
    }
    4.0 * total / (t * t) as f64
}

/// `R = E[ε² aaᵀ]` with `ε = −h ℓ′(aᵀỹ, b) + aᵀ(ỹ − x̃₊*)` and
/// `x̃₊* = ỹ − hΣ⁻¹∇F(ỹ)`.
///
/// For well-specified squared loss `ε = h ξ` with `ξ` the label noise, so
/// `R = h²σ²Σ` for every `ỹ`; otherwise `R` and `∇F(ỹ)` are estimated from
/// `samples` draws.
pub fn noise_covariance(instance: &ProblemInstance, y_tilde: &[f64], h: f64, samples: usize, seed: u64) -> Result<DMatrix<f64>> {
    let d = instance.dim();
    check_dim(d)?;
    let sigma = instance.dist.spectrum().covariance();
    if instance.has_closed_form_risk() {
        return Ok(sigma * (h * h * instance.dist.labels().noise_var()));
    }
    if samples == 0 {
        return Err(Error::EvaluationBudget);
    }
    let mut rng = stream_rng(seed, 0x0052_4e4f);
    let (feats, labels) = instance.dist.sample_block(&mut rng, samples);
    let yt = DVector::from_column_slice(y_tilde);
    let mut grad = DVector::<f64>::zeros(d);
    for (row, &b) in feats.chunks_exact(d).zip(&labels) {
        let a = DVector::from_column_slice(row);
        grad += &a * (instance.loss.deriv(a.dot(&yt), b) / samples as f64);
    }
    let sigma_inv = sigma.clone().try_inverse().ok_or(Error::RankDeficient { min_eig: 0.0 })?;
    let shift = &sigma_inv * &grad * h;
    let mut r = DMatrix::<f64>::zeros(d, d);
    for (row, &b) in feats.chunks_exact(d).zip(&labels) {
        let a = DVector::from_column_slice(row);
        let eps = -h * instance.loss.deriv(a.dot(&yt), b) + a.dot(&shift);
        r.ger(eps * eps / samples as f64, &a, &a, 1.0);
    }
    Ok(r)
}

fn gaussian_quadratic(instance: &ProblemInstance) -> Result<()> {
    check_dim(instance.dim())?;
    if !matches!(instance.dist.design(), Design::Gaussian(_)) || !instance.has_closed_form_risk() {
        return Err(param("instance", "replays need Gaussian design, squared loss and well-specified labels"));
    }
    Ok(())
}

/// Monte-Carlo counterpart of the oracle: empirical `E[η_t η_tᵀ]` and the
/// energy of `v = (2/T) Σ_{t>T/2} (η_t)₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReplay {
    /// `t = 0..=T`
    pub second_moments: Vec<DMatrix<f64>>,
    pub v_mean: Vec<f64>,
    /// Per-coordinate standard error of `v_mean`.
    pub v_stderr: Vec<f64>,
    pub v_energy: f64,
    pub v_energy_stderr: f64,
    pub replicates: usize,
}

/// Runs the engine from `ỹ = x*` with `h = 1`; then `x̃₊* = x*`, `η_t` is
/// purely the variance iterate and the replay matches [`covariance_sequence`].
pub fn variance_replay(instance: &ProblemInstance, slice: &InnerSlice, replicates: usize, seed: u64) -> Result<VarianceReplay> {
    gaussian_quadratic(instance)?;
    let d = instance.dim();
    let t_max = slice.horizon;
    if t_max == 0 || t_max % 2 != 0 || replicates < 2 {
        return Err(param("replay", "need an even horizon and at least two replicates"));
    }
    let x_star = instance.dist.labels().planted().to_vec();
    let sigma = instance.dist.spectrum().covariance();
    let s = InnerSlice { h: 1.0, ..*slice };
    let chunks = 64.min(replicates);

    struct Acc {
        m: Vec<DMatrix<f64>>,
        v: DVector<f64>,
        v2: DVector<f64>,
        e: f64,
        e2: f64,
    }
    let partial: Vec<Result<Acc>> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut acc = Acc { m: vec![DMatrix::zeros(2 * d, 2 * d); t_max + 1], v: DVector::zeros(d), v2: DVector::zeros(d), e: 0.0, e2: 0.0 };
            let mut engine = Engine::new(LossModel::squared(), VariantConfig::plain(), d)?;
            let mut eta = DVector::<f64>::zeros(2 * d);
            for r in (ci..replicates).step_by(chunks) {
                let mut src = DistributionSource::seeded(&instance.dist, seed, stream_id(&[r as u64]));
                let mut st = InnerState::start(&x_star);
                for t in 1..=t_max {
                    engine.inner_step(&mut st, &x_star, &s, &mut src)?;
                    let y = st.y(s.theta);
                    for i in 0..d {
                        eta[i] = st.x[i] - x_star[i];
                        eta[d + i] = y[i] - x_star[i];
                    }
                    acc.m[t].ger(1.0, &eta, &eta, 1.0);
                }
                let v = DVector::from_iterator(d, (0..d).map(|i| st.tail_sum[i] * 2.0 / t_max as f64 - x_star[i]));
                let e = (v.transpose() * &sigma * &v)[(0, 0)];
                acc.v += &v;
                acc.v2 += v.component_mul(&v);
                acc.e += e;
                acc.e2 += e * e;
            }
            Ok(acc)
        })
        .collect();
    let mut total = Acc { m: vec![DMatrix::zeros(2 * d, 2 * d); t_max + 1], v: DVector::zeros(d), v2: DVector::zeros(d), e: 0.0, e2: 0.0 };
    for p in partial {
        let p = p?;
        for (a, b) in total.m.iter_mut().zip(&p.m) {
            *a += b;
        }
        total.v += p.v;
        total.v2 += p.v2;
        total.e += p.e;
        total.e2 += p.e2;
    }
    let n = replicates as f64;
    let se = |sum: f64, sum2: f64| (((sum2 / n - (sum / n).powi(2)) * n / (n - 1.0)).max(0.0) / n).sqrt();
    Ok(VarianceReplay {
        second_moments: total.m.into_iter().map(|m| m / n).collect(),
        v_mean: total.v.iter().map(|v| v / n).collect(),
        v_stderr: (0..d).map(|i| se(total.v[i], total.v2[i])).collect(),
        v_energy: total.e / n,
        v_energy_stderr: se(total.e, total.e2),
        replicates,
    })
}

/// Outcome of [`bias_energy_replay`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasReport {
    pub energy: f64,
    pub energy_stderr: f64,
    pub initial: f64,
    /// `(1 − θ)^T · initial`
    pub bound: f64,
    pub ratio: f64,
    pub pass: bool,
}

/// Monte-Carlo energy `‖x_T − x̃₊*‖² + (θ/2γ)‖z_T − x̃₊*‖²_{Σ⁻¹}` of the
/// noiseless inner loop started at `x₀ = z₀ = ỹ`.
///
/// Noiseless labels `b = aᵀx̃₊*` with `h = 1` make `x̃₊*` the exact target,
/// so the engine itself produces the bias iterates.
pub fn bias_energy_replay(
    instance: &ProblemInstance,
    y_tilde: &[f64],
    x_sub_star: &[f64],
    slice: &InnerSlice,
    t: usize,
    replicates: usize,
    seed: u64,
) -> Result<BiasReport> {
    let d = instance.dim();
    check_dim(d)?;
    if !matches!(instance.dist.design(), Design::Gaussian(_)) {
        return Err(param("instance", "bias replay needs a Gaussian design"));
    }
    let spec = instance.dist.spectrum().clone();
    let dist = crate::problem::DataDistribution::new(
        Design::Gaussian(spec.clone()),
        crate::problem::LabelModel::WellSpecified { x_star: x_sub_star.to_vec(), noise_var: 0.0 },
    )?;
    let sigma_inv = spec.covariance().try_inverse().ok_or(Error::RankDeficient { min_eig: 0.0 })?;
    let w = slice.theta / (2.0 * slice.gamma);
    let energy_of = |x: &[f64], z: &[f64]| {
        let dx = DVector::from_iterator(d, x.iter().zip(x_sub_star).map(|(a, b)| a - b));
        let dz = DVector::from_iterator(d, z.iter().zip(x_sub_star).map(|(a, b)| a - b));
        dx.norm_squared() + w * (dz.transpose() * &sigma_inv * &dz)[(0, 0)]
    };
    let initial = energy_of(y_tilde, y_tilde);
    let bound = (1.0 - slice.theta).powi(t as i32) * initial;
    if t == 0 {
        return Ok(BiasReport { energy: initial, energy_stderr: 0.0, initial, bound, ratio: 1.0, pass: true });
    }
    let s =InnerSlice { h: 1.0, horizon: t.max(2) + t.max(2) % 2, ..*slice };
    let energies: Vec<Result<f64>> = (0..replicates.max(1))
        .into_par_iter()
        .map(|r| {
            let mut engine = Engine::new(LossModel::squared(), VariantConfig::plain(), d)?;
            let mut src = DistributionSource::seeded(&dist, seed, stream_id(&[r as u64]));
            let mut st = InnerState::start(y_tilde);
            for _ in 0..t {
                engine.inner_step(&mut st, y_tilde, &s, &mut src)?;
            }
            Ok(energy_of(&st.x, &st.z))
        })
        .collect();
    let energies: Vec<f64> = energies.into_iter().collect::<Result<_>>()?;
    let n = energies.len() as f64;
    let mean = energies.iter().sum::<f64>() / n;
    let var = if n > 1.0 { energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let stderr = (var / n).sqrt();
    let ratio = if bound > 0.0 { mean / bound } else if mean == 0.0 { 1.0 } else { f64::INFINITY };
    Ok(BiasReport { energy: mean, energy_stderr: stderr, initial, bound, ratio, pass: mean <= bound + 3.0 * stderr })
}

/// `A(λ) = [[0, 1 − ηλ], [−c, 1 + c − qλ]]`, the restriction of the
/// momentum matrix to an eigenvector of `Σ` with eigenvalue `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumBlock {
    pub lambda: f64,
    pub c: f64,
    pub q: f64,
    pub eta: f64,
}

impl MomentumBlock {
    pub fn from_slice(lambda: f64, s: &InnerSlice) -> Self {
        Self { lambda, c: s.c(), q: s.q(), eta: s.eta }
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[0.0, 1.0 - self.eta * self.lambda], [-self.c, 1.0 + self.c - self.q * self.lambda]]
    }

    pub fn preconditions_hold(&self) -> bool {
        (0.0..1.0).contains(&self.c) && self.eta * self.lambda < 1.0 && self.eta <= self.q && self.lambda > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumReport {
    /// Exact-arithmetic error of the closed-form inverse: the larger of
    /// `max|Inv·(I − A) − I|` and `max_i |λ · (Inv (η, q)ᵀ)_i − 1|`.
    pub inverse_error: f64,
    /// The same action error with `(I − A)⁻¹` solved in `f64`; it grows like
    /// `ε / (λ(q − cη))` and is reported only as a conditioning diagnostic.
    pub inverse_error_f64: f64,
    /// `max_{k ≤ k_max} |(A^k (1, 1)ᵀ)₁|`
    pub max_power: f64,
    pub power_violations: usize,
    pub preconditions_hold: bool,
}

/// `Inv = [[qλ − c, 1 − ηλ], [−c, 1]] / (λ(q − cη))` checked in exact
/// rationals over the block's float entries, plus the power iteration of
/// `A^k(1,1)ᵀ`.
pub fn momentum_lemma_checks(block: &MomentumBlock, k_max: usize) -> MomentumReport {
    let a = block.matrix();
    let inverse_error = exact_inverse_error(block);

    let (m00, m01, m10, m11) = (1.0 - a[0][0], -a[0][1], -a[1][0], 1.0 - a[1][1]);
    let det = m00 * m11 - m01 * m10;
    let u0 = (block.eta * m11 - m01 * block.q) / det;
    let u1 = (m00 * block.q - m10 * block.eta) / det;
    let inverse_error_f64 = (block.lambda * u0 - 1.0).abs().max((block.lambda * u1 - 1.0).abs());

    let mut v = [1.0f64, 1.0];
    let mut max_power = 1.0f64;
    let mut power_violations = 0;
    for _ in 0..k_max {
        v = [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]];
        max_power = max_power.max(v[0].abs());
        if v[0].abs() > 2.0 + 1e-12 {
            power_violations += 1;
        }
    }
    MomentumReport { inverse_error, inverse_error_f64, max_power, power_violations, preconditions_hold: block.preconditions_hold() }
}

fn exact_inverse_error(block: &MomentumBlock) -> f64 {
    let r = |x: f64| BigRational::from_float(x).expect("finite block entry");
    let (lambda, c, q, eta) = (r(block.lambda), r(block.c), r(block.q), r(block.eta));
    let one = BigRational::one();
    let den = &lambda * (&q - &c * &eta);
    if den.is_zero() {
        return f64::INFINITY;
    }
    // I − A
    let m = [[one.clone(), -(&one - &eta * &lambda)], [c.clone(), &q * &lambda - &c]];
    let inv = [[(&q * &lambda - &c) / &den, (&one - &eta * &lambda) / &den], [-(&c / &den), &one / &den]];
    let mut err = BigRational::zero();
    for i in 0..2 {
        for j in 0..2 {
            let mut e = &inv[i][0] * &m[0][j] + &inv[i][1] * &m[1][j];
            if i == j {
                e -= &one;
            }
            err = err.max(e.abs());
        }
        let u = &inv[i][0] * &eta + &inv[i][1] * &q;
        err = err.max((&lambda * u - &one).abs());
    }
    err.to_f64().unwrap_or(f64::INFINITY)
}

/// Right-hand side of the per-round variance bound:
/// `320(3 tr(Σ⁻¹Q) + 8ηκ̃L_ℓ tr Q)/T + 160 L_ℓ(6L + κ̃(7 + 16ηB))(F(ỹ) − F*)/T`.
pub fn variance_bound_rhs(c: &crate::problem::ProblemConstants, eta: f64, t: usize, trace_sinv_q: f64, trace_q: f64, gap: f64) -> f64 {
    let t = t as f64;
    320.0 * (3.0 * trace_sinv_q + 8.0 * eta * c.kappa_tilde * c.l_loss * trace_q) / t
        + 160.0 * c.l_loss * (6.0 * c.l_const + c.kappa_tilde * (7.0 + 16.0 * eta * c.b_const)) * gap / t
}
