//! Scalar losses `ℓ(z, b)` of a linear prediction `z = aᵀx` against a label `b`.

use crate::error::{param, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// `(z - b)² / 2`
    Squared,
    /// Quadratic of curvature `l` inside `|z - b| ≤ delta`, curvature `mu`
    /// outside, with a linear term keeping value and slope continuous.
    Huberized { mu: f64, l: f64, delta: f64 },
    /// `log(1 + exp(-b z))` with `b ∈ {-1, +1}`.
    Logistic,
}

/// A loss plus an optional prediction penalty `penalty · z² / 2`.
///
/// The penalty is how logistic-ridge and the weakly convex surrogate are
/// expressed; it shifts both curvature bounds by the same amount.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossModel {
    pub kind: LossKind,
    pub penalty: f64,
}

impl LossModel {
    pub fn squared() -> Self {
        Self { kind: LossKind::Squared, penalty: 0.0 }
    }

    pub fn huberized(mu: f64, l: f64, delta: f64) -> Result<Self> {
        if !(mu > 0.0 && mu <= l && l.is_finite()) {
            return Err(param("huberized", format!("need 0 < mu <= L, got mu={mu}, L={l}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(param("delta", format!("must be positive, got {delta}")));
        }
        Ok(Self { kind: LossKind::Huberized { mu, l, delta }, penalty: 0.0 })
    }

    pub fn logistic_ridge(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(param("lambda", format!("must be nonnegative, got {lambda}")));
        }
        Ok(Self { kind: LossKind::Logistic, penalty: lambda })
    }

    /// Adds `c · z² / 2` on top of any existing penalty.
    pub fn with_prediction_penalty(mut self, c: f64) -> Self {
        self.penalty += c;
        self
    }

    pub fn base(&self) -> Self {
        Self { kind: self.kind, penalty: 0.0 }
    }

    pub fn mu_loss(&self) -> f64 {
        let base = match self.kind {
            LossKind::Squared => 1.0,
            LossKind::Huberized { mu, .. } => mu,
            LossKind::Logistic => 0.0,
        };
        base + self.penalty
    }

    pub fn l_loss(&self) -> f64 {
        let base = match self.kind {
            LossKind::Squared => 1.0,
            LossKind::Huberized { l, .. } => l,
            LossKind::Logistic => 0.25,
        };
        base + self.penalty
    }

    pub fn strongly_convex(&self) -> bool {
        self.mu_loss() > 0.0
    }

    /// `L_ℓ / μ_ℓ`, infinite when the loss is not strongly convex.
    pub fn alpha(&self) -> f64 {
        self.l_loss() / self.mu_loss()
    }

    /// Residual losses are even functions of `z - b`.
    pub fn is_residual_symmetric(&self) -> bool {
        matches!(self.kind, LossKind::Squared | LossKind::Huberized { .. }) && self.penalty == 0.0
    }

    pub fn check_label(&self, b: f64) -> Result<()> {
        if matches!(self.kind, LossKind::Logistic) && b != 1.0 && b != -1.0 {
            return Err(Error::LabelDomain(b));
        }
        Ok(())
    }

    pub fn value(&self, z: f64, b: f64) -> f64 {
        let base = match self.kind {
            LossKind::Squared => 0.5 * (z - b) * (z - b),
            LossKind::Huberized { mu, l, delta } => {
                let r = (z - b).abs();
                if r <= delta {
                    0.5 * l * r * r
                } else {
                    0.5 * mu * r * r + (l - mu) * delta * r - 0.5 * (l - mu) * delta * delta
                }
            }
            LossKind::Logistic => softplus(-b * z),
        };
        if self.penalty == 0.0 {
            base
        } else {
            base + 0.5 * self.penalty * z * z
        }
    }

    /// `∂ℓ/∂z`
    pub fn deriv(&self, z: f64, b: f64) -> f64 {
        let base = match self.kind {
            LossKind::Squared => z - b,
            LossKind::Huberized { mu, l, delta } => {
                let r = z - b;
                if r.abs() <= delta {
                    l * r
                } else {
                    mu * r + (l - mu) * delta * r.signum()
                }
            }
            LossKind::Logistic => -b * sigmoid(-b * z),
        };
        if self.penalty == 0.0 {
            base
        } else {
            base + self.penalty * z
        }
    }

    /// `∂²ℓ/∂z²`, taking the inner branch at the kinks of the huberized loss.
    pub fn second_deriv(&self, z: f64, b: f64) -> f64 {
        let base = match self.kind {
            LossKind::Squared => 1.0,
            LossKind::Huberized { mu, l, delta } => {
                if (z - b).abs() <= delta {
                    l
                } else {
                    mu
                }
            }
            LossKind::Logistic => {
                let s = sigmoid(b * z);
                s * (1.0 - s)
            }
        };
        base + self.penalty
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn squared_examples() {
        let l = LossModel::squared();
        assert_eq!(l.value(0.0, 0.0), 0.0);
        assert_eq!(l.deriv(0.0, 0.0), 0.0);
        assert_eq!(l.value(3.0, 1.0), 2.0);
        assert_eq!(l.deriv(3.0, 1.0), 2.0);
        assert_eq!((l.mu_loss(), l.l_loss(), l.alpha()), (1.0, 1.0, 1.0));
    }

    #[test]
    fn huberized_examples() {
        let l = LossModel::huberized(1.0, 4.0, 1.0).unwrap();
        assert_eq!(l.value(0.0, 0.0), 0.0);
        // both branches give 2 at the kink
        assert_eq!(l.value(1.0, 0.0), 2.0);
        let outer = 0.5 * 1.0 + 3.0 * 1.0 - 1.5;
        assert_eq!(outer, 2.0);
        assert_eq!(l.value(2.0, 0.0), 6.5);
        assert_eq!(l.deriv(2.0, 0.0), 5.0);
        assert_eq!(l.value(-2.0, 0.0), 6.5);
        assert_eq!(l.deriv(-2.0, 0.0), -5.0);
        assert!(LossModel::huberized(1.0, 4.0, 0.0).is_err());
        assert!(LossModel::huberized(2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn logistic_examples() {
        let l = LossModel::logistic_ridge(0.0).unwrap();
        assert_relative_eq!(l.value(0.0, 1.0), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(l.deriv(0.0, 1.0), -0.5);
        assert_eq!(l.deriv(0.0, -1.0), 0.5);
        assert!(!l.strongly_convex());
        assert_eq!(l.check_label(0.5), Err(Error::LabelDomain(0.5)));
        assert!(l.check_label(-1.0).is_ok());

        let r = LossModel::logistic_ridge(0.05).unwrap();
        assert_relative_eq!(r.mu_loss(), 0.05);
        assert_relative_eq!(r.l_loss(), 0.30);
        assert_relative_eq!(r.alpha(), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn logistic_is_stable_for_large_margins() {
        let l = LossModel::logistic_ridge(0.0).unwrap();
        assert_relative_eq!(l.value(-800.0, 1.0), 800.0);
        assert_eq!(l.value(800.0, 1.0), 0.0);
        assert!(l.deriv(-800.0, 1.0).is_finite());
    }
}
