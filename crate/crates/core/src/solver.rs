//! Deterministic full-batch minimization of an empirical risk.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::losses::LossModel;

/// `(1/n) Σ ℓ(aᵢᵀx, bᵢ) + ridge/2 ‖x‖²` over a frozen sample.
#[derive(Debug, Clone)]
pub struct EmpiricalObjective {
    dim: usize,
    feats: Vec<f64>,
    labels: Vec<f64>,
    loss: LossModel,
    ridge: f64,
}

impl EmpiricalObjective {
    pub fn new(dim: usize, feats: Vec<f64>, labels: Vec<f64>, loss: LossModel, ridge: f64) -> Result<Self> {
        if dim == 0 || feats.len() != dim * labels.len() || labels.is_empty() {
            return Err(Error::Dimension { expected: dim * labels.len().max(1), got: feats.len() });
        }
        for &b in &labels {
            loss.check_label(b)?;
        }
        Ok(Self { dim, feats, labels, loss, ridge })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.feats.chunks_exact(self.dim).zip(self.labels.iter().copied())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let s: f64 = self.rows().map(|(a, b)| self.loss.value(dot(a, x), b)).sum();
        s / self.len() as f64 + 0.5 * self.ridge * dot(x, x)
    }

    pub fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g.iter_mut().for_each(|gi| *gi = 0.0);
        let inv_n = 1.0 / self.len() as f64;
        for (a, b) in self.rows() {
            let c = self.loss.deriv(dot(a, x), b) * inv_n;
            g.iter_mut().zip(a).for_each(|(gi, ai)| *gi += c * ai);
        }
        g.iter_mut().zip(x).for_each(|(gi, xi)| *gi += self.ridge * xi);
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::<f64>::identity(self.dim, self.dim) * self.ridge;
        let inv_n = 1.0 / self.len() as f64;
        for (a, b) in self.rows() {
            let v = DVector::from_column_slice(a);
            h.ger(self.loss.second_deriv(dot(a, x), b) * inv_n, &v, &v, 1.0);
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    /// Gradient descent with Armijo backtracking.
    GradientDescent,
    /// Damped Newton with Armijo backtracking; dense `d×d` Hessian.
    Newton,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutput {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Runs until `‖∇f‖ ≤ tol`; fails with `NotConverged` after `max_iter` steps.
pub fn minimize(obj: &EmpiricalObjective, x0: &[f64], tol: f64, max_iter: usize, method: SolverMethod) -> Result<SolverOutput> {
    let d = obj.dim();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];
    let mut trial = vec![0.0; d];
    let mut gtrial = vec![0.0; d];
    let mut f = obj.value(&x);
    let mut step: f64 = 1.0;
    for it in 0..=max_iter {
        obj.gradient(&x, &mut g);
        let gn = dot(&g, &g).sqrt();
        if !gn.is_finite() || !f.is_finite() {
            return Err(Error::NotConverged { iterations: it, grad_norm: gn });
        }
        if gn <= tol {
            return Ok(SolverOutput { x, iterations: it, grad_norm: gn });
        }
        if it == max_iter {
            return Err(Error::NotConverged { iterations: it, grad_norm: gn });
        }
        let dir: Vec<f64> = match method {
            SolverMethod::GradientDescent => g.iter().map(|v| -v).collect(),
            SolverMethod::Newton => newton_direction(obj.hessian(&x), &g),
        };
        let slope = dot(&g, &dir);
        if method == SolverMethod::Newton {
            step = 1.0;
        } else {
            step = (step * 2.0).min(1e6);
        }
        let mut accepted = false;
        for _ in 0..80 {
            for i in 0..d {
                trial[i] = x[i] + step * dir[i];
            }
            let ft = obj.value(&trial);
            // below rounding level of f, fall back to a decrease in the gradient norm
            let rounding = (step * slope).abs() <= 1e-13 * f.abs().max(1e-300);
            let accept = ft <= f + 1e-4 * step * slope || (rounding && ft <= f + 1e-13 * f.abs() && {
                obj.gradient(&trial, &mut gtrial);
                dot(&gtrial, &gtrial).sqrt() < gn
            });
            if accept {
                x.copy_from_slice(&trial);
                f = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // the line search stalled at rounding level
            obj.gradient(&x, &mut g);
            let gn = dot(&g, &g).sqrt();
            return if gn <= tol { Ok(SolverOutput { x, iterations: it, grad_norm: gn }) } else { Err(Error::NotConverged { iterations: it, grad_norm: gn }) };
        }
    }
    unreachable!("loop returns at it == max_iter")
}

fn newton_direction(mut h: DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    let d = g.len();
    let rhs = DVector::from_iterator(d, g.iter().map(|v| -v));
    let scale = (h.trace() / d as f64).max(f64::MIN_POSITIVE);
    let mut damping = 0.0;
    loop {
        if let Some(ch) = h.clone().cholesky() {
            return ch.solve(&rhs).as_slice().to_vec();
        }
        let next = if damping == 0.0 { 1e-12 * scale } else { damping * 10.0 };
        for i in 0..d {
            h[(i, i)] += next - damping;
        }
        damping = next;
        if damping > 1e6 * scale {
            return rhs.as_slice().to_vec();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
