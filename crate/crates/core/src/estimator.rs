//! Residual a posteriori error estimator.
//!
//! Element terms carry the weight `h²/p²`, edge terms `h_e/p_e` with `p_e`
//! the larger adjacent degree. Interior-edge jumps are evaluated at points
//! ordered from the edge's lower vertex id, so the result does not depend on
//! which neighbour is stored as the left element.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::assembly::{edge_points, edge_tabulation};
use crate::element::default_exactness;
use crate::export::fmt_sci;
use crate::mesh::{Edge, Mesh};
use crate::optimizer::Triple;
use crate::problem::{ProblemData, ProblemError};
use crate::space::{combine, tabulate, Field, PointValue, SpaceError, SpaceKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("element {id} out of range (mesh has {count})")]
    ElementIndex { id: usize, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorBreakdown {
    /// `η₁² … η₇²`.
    pub eta_sq: [f64; 7],
    pub total_sq: f64,
    /// Per element: contributions to `η₁², η₄², η₇²`.
    pub per_element: Vec<[f64; 3]>,
    /// Per edge: contributions to `η₂², η₃², η₅², η₆²`.
    pub per_edge: Vec<[f64; 4]>,
    #[serde(skip)]
    edge_elements: Vec<(usize, Option<usize>)>,
}

pub const CSV_HEADER: &str = "eta1_sq,eta2_sq,eta3_sq,eta4_sq,eta5_sq,eta6_sq,eta7_sq,eta_sq";

impl EstimatorBreakdown {
    /// `η₁² … η₇²` followed by `η²`, as one CSV row with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        let cols: Vec<String> = self
            .eta_sq
            .iter()
            .chain(std::iter::once(&self.total_sq))
            .map(|&v| fmt_sci(v))
            .collect();
        let _ = writeln!(s, "{}", cols.join(","));
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain numeric data")
    }

    /// Element terms of `id` plus its share of the adjacent edge terms:
    /// half of each interior edge and all of each boundary edge.
    pub fn local_indicator(&self, id: usize) -> Result<f64, EstimatorError> {
        let count = self.per_element.len();
        if id >= count {
            return Err(EstimatorError::ElementIndex { id, count });
        }
        let mut s: f64 = self.per_element[id].iter().sum();
        for (e, &(l, r)) in self.edge_elements.iter().enumerate() {
            let share = match r {
                None if l == id => 1.0,
                Some(r) if l == id || r == id => 0.5,
                _ => continue,
            };
            s += share * self.per_edge[e].iter().sum::<f64>();
        }
        Ok(s)
    }
}

fn same_mesh(a: &Field, b: &Field) -> Result<(), SpaceError> {
    if a.space().shares_mesh(b.space()) {
        Ok(())
    } else {
        Err(SpaceError::MeshMismatch)
    }
}

pub fn estimate(t: &Triple, data: &ProblemData) -> Result<EstimatorBreakdown, EstimatorError> {
    estimate_with(t, data, 0)
}

/// As [`estimate`], with every quadrature rule raised by `extra` degrees.
pub fn estimate_with(t: &Triple, data: &ProblemData, extra: usize) -> Result<EstimatorBreakdown, EstimatorError> {
    data.validate()?;
    t.u.space().expect_kind(SpaceKind::Control)?;
    t.y.space().expect_kind(SpaceKind::State)?;
    t.z.space().expect_kind(SpaceKind::State)?;
    same_mesh(&t.u, &t.y)?;
    same_mesh(&t.y, &t.z)?;
    let mesh = t.y.space().mesh();

    let per_element: Vec<[f64; 3]> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|el| element_terms(t, data, el, extra))
        .collect();
    let per_edge: Vec<[f64; 4]> = (0..mesh.edges.len())
        .into_par_iter()
        .map(|e| edge_terms(t, data, mesh, e, extra))
        .collect();

    let mut eta_sq = [0.0; 7];
    for v in &per_element {
        eta_sq[0] += v[0];
        eta_sq[3] += v[1];
        eta_sq[6] += v[2];
    }
    for v in &per_edge {
        eta_sq[1] += v[0];
        eta_sq[2] += v[1];
        eta_sq[4] += v[2];
        eta_sq[5] += v[3];
    }
    Ok(EstimatorBreakdown {
        eta_sq,
        total_sq: eta_sq.iter().sum(),
        per_element,
        per_edge,
        edge_elements: mesh.edges.iter().map(|e| (e.left, e.right)).collect(),
    })
}

fn element_terms(t: &Triple, data: &ProblemData, el: usize, extra: usize) -> [f64; 3] {
    let element = &t.y.space().mesh().elements[el];
    let py = t.y.space().degree(el);
    let pu = t.u.space().degree(el);
    let ex = default_exactness(py.max(pu)) + extra;
    let ty = tabulate(element.kind, py, ex);
    let tu = tabulate(element.kind, pu, ex);
    let det = element.map.det().abs();
    let (yl, zl, ul) = (t.y.local_coeffs(el), t.z.local_coeffs(el), t.u.local_coeffs(el));
    let mut terms = [0.0; 3];
    for q in 0..ty.rule.len() {
        let w = ty.rule.weights[q] * det;
        let x = element.map.apply(ty.rule.points[q]);
        let (by, bu) = (&ty.at[q], &tu.at[q]);
        let y = combine(element, &yl, &by.values, &by.grads, &by.hessians);
        let z = combine(element, &zl, &by.values, &by.grads, &by.hessians);
        let u = combine(element, &ul, &bu.values, &bu.grads, &bu.hessians);
        let lap = |v: &PointValue| v.hessian[0] + v.hessian[2];
        let r1 = data.beta * u.value + lap(&y);
        let r4 = data.lambda_omega * (y.value - data.y_omega.eval(x)) + lap(&z);
        let g7 = [
            data.lambda * u.grad[0] + data.beta * z.grad[0],
            data.lambda * u.grad[1] + data.beta * z.grad[1],
        ];
        terms[0] += w * r1 * r1;
        terms[1] += w * r4 * r4;
        terms[2] += w * (g7[0] * g7[0] + g7[1] * g7[1]);
    }
    let p = py as f64;
    let weight = element.diameter * element.diameter / (p * p);
    terms.map(|v| weight * v)
}

/// Trace of `f` on the edge seen from element `el` (local edge `local`), at
/// the points of an `npts` Gauss rule ordered from the edge's lower vertex id.
fn side_trace(f: &Field, mesh: &Mesh, edge: &Edge, el: usize, local: usize, npts: usize, extra_pts: usize) -> Vec<PointValue> {
    let element = &mesh.elements[el];
    let p = f.space().degree(el);
    let tab = edge_tabulation(element.kind, p, local, npts + extra_pts);
    let start = element.vertex_ids[local];
    let forward = start == edge.vertex_ids[0].min(edge.vertex_ids[1]);
    let coeffs = f.local_coeffs(el);
    let n = tab.at.len();
    (0..n)
        .map(|q| {
            let bv = &tab.at[if forward { q } else { n - 1 - q }];
            combine(element, &coeffs, &bv.values, &bv.grads, &bv.hessians)
        })
        .collect()
}

fn edge_terms(t: &Triple, data: &ProblemData, mesh: &Mesh, e: usize, extra: usize) -> [f64; 4] {
    let edge = &mesh.edges[e];
    let degrees = t.y.space().degrees();
    let pe = degrees.edge_degree(edge);
    let npts = edge_points(pe);
    let extra_pts = extra.div_ceil(2);
    let weights = &edge_tabulation(mesh.elements[edge.left].kind, degrees.degree(edge.left), edge.local_left, npts + extra_pts).weights;
    let n = edge.normal;
    let dn = |v: &PointValue| v.grad[0] * n[0] + v.grad[1] * n[1];
    let yl = side_trace(&t.y, mesh, edge, edge.left, edge.local_left, npts, extra_pts);
    let zl = side_trace(&t.z, mesh, edge, edge.left, edge.local_left, npts, extra_pts);
    let mut terms = [0.0; 4];
    match (edge.right, edge.local_right) {
        (Some(r), Some(lr)) => {
            let yr = side_trace(&t.y, mesh, edge, r, lr, npts, extra_pts);
            let zr = side_trace(&t.z, mesh, edge, r, lr, npts, extra_pts);
            for q in 0..weights.len() {
                let jy = jump(&yl[q], &yr[q], n);
                let jz = jump(&zl[q], &zr[q], n);
                terms[0] += weights[q] * jy * jy;
                terms[2] += weights[q] * jz * jz;
            }
        }
        _ => {
            let element = &mesh.elements[edge.left];
            let tab = edge_tabulation(element.kind, degrees.degree(edge.left), edge.local_left, npts + extra_pts);
            let forward = element.vertex_ids[edge.local_left] == edge.vertex_ids[0].min(edge.vertex_ids[1]);
            let m = tab.points.len();
            for q in 0..weights.len() {
                let x = element.map.apply(tab.points[if forward { q } else { m - 1 - q }]);
                let r3 = data.alpha * yl[q].value + dn(&yl[q]);
                let r6 = data.lambda_gamma * (yl[q].value - data.y_gamma.eval(x)) - data.alpha * zl[q].value - dn(&zl[q]);
                terms[1] += weights[q] * r3 * r3;
                terms[3] += weights[q] * r6 * r6;
            }
        }
    }
    // h_e/p_e times the edge Jacobian h_e
    let weight = edge.length * edge.length / pe as f64;
    terms.map(|v| weight * v)
}

/// `(∇a − ∇b)·n`.
fn jump(a: &PointValue, b: &PointValue, n: [f64; 2]) -> f64 {
    (a.grad[0] - b.grad[0]) * n[0] + (a.grad[1] - b.grad[1]) * n[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsolve::DEFAULT_TOL;
    use crate::mesh::{build_uniform_quad_mesh, build_uniform_tri_mesh, DegreeVector, TriangleSplit};
    use crate::optimizer::{DiscreteProblem, OptimizerConfig};
    use crate::space::{build_control_space, build_state_space};
    use std::sync::Arc;

    fn solve(mesh: Mesh, p: usize, data: ProblemData) -> Triple {
        let mesh = Arc::new(mesh);
        let n = mesh.num_elements();
        let s = build_state_space(mesh.clone(), DegreeVector::uniform(n, p)).unwrap();
        let c = build_control_space(mesh, DegreeVector::uniform(n, p)).unwrap();
        let dp = DiscreteProblem::new(s, c, data, DEFAULT_TOL).unwrap();
        dp.run(&OptimizerConfig::default()).unwrap().0
    }

    fn rebuild_on(t: &Triple, mesh: Mesh) -> Triple {
        let mesh = Arc::new(mesh);
        let deg = t.y.space().degrees().clone();
        let s = build_state_space(mesh.clone(), deg.clone()).unwrap();
        let c = build_control_space(mesh, deg).unwrap();
        Triple {
            u: Field::from_coeffs(c, t.u.coeffs().to_vec()).unwrap(),
            y: Field::from_coeffs(s.clone(), t.y.coeffs().to_vec()).unwrap(),
            z: Field::from_coeffs(s, t.z.coeffs().to_vec()).unwrap(),
        }
    }

    #[test]
    fn zero_triple_has_zero_estimate() {
        let t = solve(build_uniform_tri_mesh(2, TriangleSplit::Crisscross), 2, ProblemData::unit());
        let b = estimate(&t, &ProblemData::unit()).unwrap();
        assert_eq!(b.total_sq, 0.0);
        assert!(b.eta_sq.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_triangles_have_no_laplacian() {
        let data = ProblemData::example2();
        let t = solve(build_uniform_tri_mesh(2, TriangleSplit::Crisscross), 1, data.clone());
        let b = estimate(&t, &data).unwrap();
        let mesh = t.u.space().mesh();
        let mut oracle = 0.0;
        for (el, element) in mesh.elements.iter().enumerate() {
            let tab = tabulate(element.kind, 1, 9);
            let c = t.u.local_coeffs(el);
            let mut s = 0.0;
            for (q, bv) in tab.at.iter().enumerate() {
                let u: f64 = c.iter().zip(&bv.values).map(|(a, b)| a * b).sum();
                s += tab.rule.weights[q] * element.map.det().abs() * (data.beta * u).powi(2);
            }
            oracle += element.diameter.powi(2) * s;
        }
        assert!((b.eta_sq[0] - oracle).abs() <= 1e-13 * oracle);
    }

    #[test]
    fn totals_and_local_sums_are_consistent() {
        let data = ProblemData::example2();
        let t = solve(build_uniform_tri_mesh(2, TriangleSplit::Crisscross), 2, data.clone());
        let b = estimate(&t, &data).unwrap();
        let sum: f64 = b.eta_sq.iter().sum();
        assert!((b.total_sq - sum).abs() <= 1e-12 * sum);
        assert!(b.eta_sq.iter().all(|&v| v >= 0.0));
        let local: f64 = (0..b.per_element.len()).map(|i| b.local_indicator(i).unwrap()).sum();
        assert!((local - b.total_sq).abs() <= 1e-12 * b.total_sq);
        assert!(matches!(b.local_indicator(999), Err(EstimatorError::ElementIndex { .. })));
    }

    #[test]
    fn single_element_indicator_is_total() {
        let data = ProblemData::example1();
        let t = solve(build_uniform_quad_mesh(1), 2, data.clone());
        let b = estimate(&t, &data).unwrap();
        assert_eq!(b.local_indicator(0).unwrap(), b.total_sq);
    }

    #[test]
    fn symmetric_elements_get_equal_indicators() {
        // example 1 data is symmetric under x1 <-> x2 and the 2x2 quad mesh maps
        // element 1 onto element 2 under that reflection
        let data = ProblemData::example1();
        let t = solve(build_uniform_quad_mesh(2), 2, data.clone());
        let b = estimate(&t, &data).unwrap();
        let (a, c) = (b.local_indicator(1).unwrap(), b.local_indicator(2).unwrap());
        assert!((a - c).abs() <= 1e-12 * a);
    }

    #[test]
    fn normal_flip_is_exactly_invariant() {
        let data = ProblemData::example2();
        let t = solve(build_uniform_tri_mesh(3, TriangleSplit::Crisscross), 2, data.clone());
        let b = estimate(&t, &data).unwrap();
        let flipped = rebuild_on(&t, t.y.space().mesh().with_flipped_interior_normals());
        let bf = estimate(&flipped, &data).unwrap();
        assert_eq!(b.eta_sq, bf.eta_sq);
        assert_eq!(b.per_edge, bf.per_edge);
    }

    #[test]
    fn inactive_example_has_negligible_eta7() {
        let data = ProblemData::example1();
        let t = solve(build_uniform_tri_mesh(2, TriangleSplit::Crisscross), 2, data.clone());
        let b = estimate(&t, &data).unwrap();
        assert!(b.eta_sq[6] <= 1e-12 * b.total_sq, "{:?}", b.eta_sq);
    }

    #[test]
    fn quadrature_refinement_is_stable() {
        let data = ProblemData::example1();
        for p in [1, 2] {
            let t = solve(build_uniform_tri_mesh(4, TriangleSplit::Crisscross), p, data.clone());
            let a = estimate(&t, &data).unwrap().total_sq;
            let b = estimate_with(&t, &data, 2).unwrap().total_sq;
            assert!((a - b).abs() < 1e-8 * a, "p={p}: {a} {b}");
        }
    }

    #[test]
    fn output_formats() {
        let data = ProblemData::example1();
        let t = solve(build_uniform_quad_mesh(1), 1, data.clone());
        let b = estimate(&t, &data).unwrap();
        let csv = b.to_csv();
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(csv.lines().nth(1).unwrap().split(',').count(), 8);
        let j = b.to_json();
        assert_eq!(j["eta_sq"].as_array().unwrap().len(), 7);
        assert!(j["total_sq"].is_number());
        assert_eq!(j["per_edge"].as_array().unwrap().len(), 4);
    }
}
