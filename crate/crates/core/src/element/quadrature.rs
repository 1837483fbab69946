//! Gauss-type quadrature on the reference elements.

use crate::mesh::ElementKind;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss–Legendre points and weights on `[0, 1]`.
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Newton iteration for the i-th root of P_n on [-1, 1]
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wt = 2.0 / ((1.0 - z * z) * dp * dp);
        // map to [0, 1]; roots come out in decreasing order
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wt;
        w[n - 1 - i] = 0.5 * wt;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.5;
    }
    (x, w)
}

/// Number of Gauss points integrating polynomials of degree `exactness` in 1D.
pub fn points_for_exactness(exactness: usize) -> usize {
    exactness / 2 + 1
}

/// Tensor Gauss rule on the unit square, collapsed (Duffy) tensor rule on the
/// unit triangle.
pub fn make_quadrature(kind: ElementKind, exactness: usize) -> QuadratureRule {
    match kind {
        ElementKind::Quad => {
            let (x, w) = gauss_legendre_01(points_for_exactness(exactness));
            let mut points = Vec::with_capacity(x.len() * x.len());
            let mut weights = Vec::with_capacity(x.len() * x.len());
            for j in 0..x.len() {
                for i in 0..x.len() {
                    points.push([x[i], x[j]]);
                    weights.push(w[i] * w[j]);
                }
            }
            QuadratureRule {
                points,
                weights,
                exactness,
            }
        }
        ElementKind::Triangle => {
            // (s, t) -> (s (1 - t), t) with Jacobian (1 - t): degree goes up by one in t
            let (x, w) = gauss_legendre_01(points_for_exactness(exactness + 1));
            let mut points = Vec::with_capacity(x.len() * x.len());
            let mut weights = Vec::with_capacity(x.len() * x.len());
            for j in 0..x.len() {
                for i in 0..x.len() {
                    let t = x[j];
                    points.push([x[i] * (1.0 - t), t]);
                    weights.push(w[i] * w[j] * (1.0 - t));
                }
            }
            QuadratureRule {
                points,
                weights,
                exactness,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // ∫_T x^a y^b = a! b! / (a + b + 2)!
    fn triangle_monomial(a: u32, b: u32) -> f64 {
        let f = |n: u32| (1..=n).map(f64::from).product::<f64>();
        f(a) * f(b) / f(a + b + 2)
    }

    fn integrate(rule: &QuadratureRule, a: i32, b: i32) -> f64 {
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * p[0].powi(a) * p[1].powi(b))
            .sum()
    }

    #[test]
    fn square_cubic() {
        let r = make_quadrature(ElementKind::Quad, 3);
        assert!((integrate(&r, 3, 0) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn triangle_area() {
        let r = make_quadrature(ElementKind::Triangle, 2);
        assert!((integrate(&r, 0, 0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn square_sixth_power_at_assembly_exactness() {
        let p = 2;
        let r = make_quadrature(ElementKind::Quad, 2 * p + 2);
        assert!((integrate(&r, 6, 0) - 1.0 / 7.0).abs() < 1e-13);
    }

    #[test]
    fn all_monomials_up_to_exactness() {
        for exactness in 0..=14 {
            let sq = make_quadrature(ElementKind::Quad, exactness);
            let tr = make_quadrature(ElementKind::Triangle, exactness);
            assert!(sq.weights.iter().chain(&tr.weights).all(|&w| w > 0.0));
            for a in 0..=exactness as i32 {
                for b in 0..=(exactness as i32 - a) {
                    let exact_sq = 1.0 / ((a + 1) * (b + 1)) as f64;
                    assert!((integrate(&sq, a, b) - exact_sq).abs() <= 1e-13 * exact_sq);
                    let exact_tr = triangle_monomial(a as u32, b as u32);
                    assert!((integrate(&tr, a, b) - exact_tr).abs() <= 1e-13 * exact_tr);
                }
            }
        }
    }

    #[test]
    fn gauss_points_are_symmetric_and_sorted() {
        for n in 1..12 {
            let (x, w) = gauss_legendre_01(n);
            assert!(x.windows(2).all(|p| p[0] < p[1]));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            for i in 0..n {
                assert!((x[i] + x[n - 1 - i] - 1.0).abs() < 1e-15);
            }
        }
    }
}
