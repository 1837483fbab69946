//! Coefficients and target functions of the control problem.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::{parse_expr, TargetExpr};
use crate::mesh::Point2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("lambda must be positive, got {0}")]
    Lambda(f64),
    #[error("alpha must be positive, got {0}")]
    Alpha(f64),
    #[error("{name} must be nonnegative, got {value}")]
    NegativeWeight { name: &'static str, value: f64 },
    #[error("{0} is not finite")]
    NonFinite(&'static str),
}

/// A pointwise target function with a label identifying it for caching.
#[derive(Clone)]
pub struct Target {
    label: String,
    f: Arc<dyn Fn(Point2) -> f64 + Send + Sync>,
}

impl Target {
    pub fn new(label: impl Into<String>, f: impl Fn(Point2) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn from_expr(expr: TargetExpr) -> Self {
        let label = expr.to_string();
        Self::new(label, move |p| expr.eval(p.x1, p.x2))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c:?}"), move |_| c)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, p: Point2) -> f64 {
        (self.f)(p)
    }
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Target").field(&self.label).finish()
    }
}

pub const EXAMPLE1_TARGET: &str = "10*x1*x2*sin(pi*x1)*sin(pi*x2)";
pub const EXAMPLE2_TARGET: &str = "x1*sin(pi*x2)+x2*sin(pi*x1)";

#[derive(Debug, Clone)]
pub struct ProblemData {
    pub lambda: f64,
    pub lambda_omega: f64,
    pub lambda_gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub u_a: f64,
    pub y_omega: Target,
    /// Boundary observation target; evaluated only on Γ.
    pub y_gamma: Target,
}

impl ProblemData {
    /// Unit weights and coefficients with `λ = 1/2`, `u_a = 0` and zero targets.
    pub fn unit() -> Self {
        Self {
            lambda: 0.5,
            lambda_omega: 1.0,
            lambda_gamma: 1.0,
            alpha: 1.0,
            beta: 1.0,
            u_a: 0.0,
            y_omega: Target::zero(),
            y_gamma: Target::zero(),
        }
    }

    /// Sets `y_Ω` and uses its trace as `y_Γ`.
    pub fn with_target(mut self, target: Target) -> Self {
        self.y_gamma = target.clone();
        self.y_omega = target;
        self
    }

    pub fn example1() -> Self {
        Self::unit().with_target(Target::from_expr(parse_expr(EXAMPLE1_TARGET).unwrap()))
    }

    pub fn example2() -> Self {
        Self {
            u_a: 0.3,
            ..Self::unit().with_target(Target::from_expr(parse_expr(EXAMPLE2_TARGET).unwrap()))
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let scalars = [
            ("lambda", self.lambda),
            ("lambda_omega", self.lambda_omega),
            ("lambda_gamma", self.lambda_gamma),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("u_a", self.u_a),
        ];
        if let Some((name, _)) = scalars.iter().find(|(_, v)| !v.is_finite()) {
            return Err(ProblemError::NonFinite(name));
        }
        if self.lambda <= 0.0 {
            return Err(ProblemError::Lambda(self.lambda));
        }
        if self.alpha <= 0.0 {
            return Err(ProblemError::Alpha(self.alpha));
        }
        for (name, value) in [("lambda_omega", self.lambda_omega), ("lambda_gamma", self.lambda_gamma)] {
            if value < 0.0 {
                return Err(ProblemError::NegativeWeight { name, value });
            }
        }
        Ok(())
    }

    /// Canonical text identifying the data exactly, used as a cache key.
    pub fn canonical_key(&self) -> String {
        format!(
            "lambda={:?};lambda_omega={:?};lambda_gamma={:?};alpha={:?};beta={:?};u_a={:?};y_omega={};y_gamma={}",
            self.lambda,
            self.lambda_omega,
            self.lambda_gamma,
            self.alpha,
            self.beta,
            self.u_a,
            self.y_omega.label(),
            self.y_gamma.label()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let e1 = ProblemData::example1();
        assert_eq!((e1.lambda, e1.u_a), (0.5, 0.0));
        assert!((e1.y_omega.eval(Point2 { x1: 0.5, x2: 0.5 }) - 2.5).abs() < 1e-14);
        let e2 = ProblemData::example2();
        assert_eq!(e2.u_a, 0.3);
        assert!((e2.y_gamma.eval(Point2 { x1: 1.0, x2: 0.5 }) - 1.0).abs() < 1e-14);
        assert_ne!(e1.canonical_key(), e2.canonical_key());
    }

    #[test]
    fn validation() {
        assert!(ProblemData::example1().validate().is_ok());
        let bad = ProblemData { lambda: 0.0, ..ProblemData::unit() };
        assert_eq!(bad.validate(), Err(ProblemError::Lambda(0.0)));
        let bad = ProblemData { alpha: -1.0, ..ProblemData::unit() };
        assert_eq!(bad.validate(), Err(ProblemError::Alpha(-1.0)));
        let bad = ProblemData { beta: f64::NAN, ..ProblemData::unit() };
        assert_eq!(bad.validate(), Err(ProblemError::NonFinite("beta")));
    }
}
