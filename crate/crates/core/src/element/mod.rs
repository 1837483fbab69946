//! Reference elements: shape functions and quadrature.

mod basis;
mod quadrature;

pub use basis::{basis_count, interior_count, lagrange_1d, BasisValues, ElementError, ShapeBasis};
pub use quadrature::{gauss_legendre_01, make_quadrature, points_for_exactness, QuadratureRule};

use crate::mesh::ElementKind;

/// Basis values tabulated at the points of a quadrature rule.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub rule: QuadratureRule,
    pub at: Vec<BasisValues>,
}

impl Tabulation {
    pub fn new(basis: &ShapeBasis, rule: QuadratureRule) -> Self {
        let at = rule.points.iter().map(|&p| basis.eval(p)).collect();
        Self { rule, at }
    }
}

/// Quadrature exactness used for element integrals of degree-`p` fields.
pub fn default_exactness(p: usize) -> usize {
    2 * p + 3
}

pub fn reference_area(kind: ElementKind) -> f64 {
    kind.reference_area()
}
