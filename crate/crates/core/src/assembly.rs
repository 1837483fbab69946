//! Galerkin assembly of the Robin form, mass forms and right-hand sides.
//!
//! Element contributions are computed in parallel and reduced in element-id
//! order, so every assembled object is bitwise reproducible.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use thiserror::Error;

use crate::element::{default_exactness, gauss_legendre_01, points_for_exactness, BasisValues};
use crate::mesh::{ElementKind, Mesh, Point2};
use crate::problem::{ProblemData, ProblemError};
use crate::space::{grad_to_physical, tabulate, FeSpace, Field, SpaceError, SpaceKind};
use crate::sparse::{SparseMatrix, TripletBuilder};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssemblyError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Shape functions tabulated at Gauss points along one local edge.
#[derive(Debug)]
pub struct EdgeTabulation {
    /// Parameters in `[0, 1]` from the edge's start vertex to its end vertex.
    pub ts: Vec<f64>,
    /// Weights summing to 1; multiply by the physical edge length.
    pub weights: Vec<f64>,
    /// Reference coordinates of the points.
    pub points: Vec<[f64; 2]>,
    pub at: Vec<BasisValues>,
}

/// Gauss points for edge integrals where the adjacent degree is `p_e`.
pub fn edge_points(p_e: usize) -> usize {
    points_for_exactness(default_exactness(p_e))
}

pub fn edge_tabulation(kind: ElementKind, degree: usize, edge: usize, npts: usize) -> Arc<EdgeTabulation> {
    type Key = (ElementKind, usize, usize, usize);
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<EdgeTabulation>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (kind, degree, edge, npts);
    if let Some(t) = cache.lock().unwrap().get(&key) {
        return t.clone();
    }
    let basis = crate::element::ShapeBasis::new(kind, degree).expect("degree validated by the space");
    let (ts, weights) = gauss_legendre_01(npts);
    let points: Vec<[f64; 2]> = ts.iter().map(|&t| basis.edge_point(edge, t).unwrap()).collect();
    let at = basis.edge_trace(edge, &ts).unwrap();
    let tab = Arc::new(EdgeTabulation { ts, weights, points, at });
    cache.lock().unwrap().entry(key).or_insert(tab).clone()
}

fn check_same_mesh(a: &FeSpace, b: &FeSpace) -> Result<(), SpaceError> {
    if a.shares_mesh(b) {
        Ok(())
    } else {
        Err(SpaceError::MeshMismatch)
    }
}

fn check_field(field: &Field, space: &Arc<FeSpace>) -> Result<(), SpaceError> {
    if Arc::ptr_eq(field.space(), space) || (field.space().dim() == space.dim() && field.space().shares_mesh(space)) {
        Ok(())
    } else {
        Err(SpaceError::MeshMismatch)
    }
}

/// Adds a dense local block (row-major `nr × nc`) through both local maps.
fn scatter_block(b: &mut TripletBuilder, rows: &FeSpace, cols: &FeSpace, el: usize, local: &[f64]) {
    let rmap = rows.local_map(el);
    let cmap = cols.local_map(el);
    let nc = cmap.len();
    for (i, re) in rmap.iter().enumerate() {
        for (j, ce) in cmap.iter().enumerate() {
            let v = local[i * nc + j];
            for &(gi, ci) in re {
                for &(gj, cj) in ce {
                    b.push(gi, gj, ci * cj * v);
                }
            }
        }
    }
}

fn assemble_blocks(
    rows: &FeSpace,
    cols: &FeSpace,
    local: impl Fn(usize) -> Vec<f64> + Sync,
) -> SparseMatrix {
    let mesh = rows.mesh();
    let blocks: Vec<Vec<f64>> = (0..mesh.num_elements()).into_par_iter().map(&local).collect();
    let cap = blocks.iter().map(Vec::len).sum();
    let mut b = TripletBuilder::with_capacity(rows.dim(), cols.dim(), cap);
    for (el, block) in blocks.iter().enumerate() {
        scatter_block(&mut b, rows, cols, el, block);
    }
    b.build()
}

fn assemble_vector(space: &FeSpace, local: impl Fn(usize) -> Vec<f64> + Sync) -> Vec<f64> {
    let blocks: Vec<Vec<f64>> = (0..space.mesh().num_elements())
        .into_par_iter()
        .map(&local)
        .collect();
    let mut out = vec![0.0; space.dim()];
    for (el, block) in blocks.iter().enumerate() {
        space.scatter_add(el, block, &mut out);
    }
    out
}

/// Boundary edges of element `el`: `(edge id, local edge index)`.
fn boundary_edges_of(mesh: &Mesh, el: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    mesh.elements[el]
        .edges
        .iter()
        .enumerate()
        .filter(move |(_, &e)| mesh.edges[e].is_boundary())
        .map(|(local, &e)| (e, local))
}

fn local_gradient(space: &FeSpace, el: usize) -> Vec<f64> {
    let element = &space.mesh().elements[el];
    let p = space.degree(el);
    let n = space.basis(el).count();
    let tab = tabulate(element.kind, p, default_exactness(p));
    let det = element.map.det().abs();
    let inv = element.inv_jacobian();
    let mut k = vec![0.0; n * n];
    for (q, bv) in tab.at.iter().enumerate() {
        let w = tab.rule.weights[q] * det;
        let g: Vec<[f64; 2]> = bv.grads.iter().map(|&g| grad_to_physical(inv, g)).collect();
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] += w * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            }
        }
    }
    k
}

fn local_boundary_mass(space: &FeSpace, el: usize) -> Vec<f64> {
    let mesh = space.mesh();
    let kind = mesh.elements[el].kind;
    let p = space.degree(el);
    let n = space.basis(el).count();
    let mut m = vec![0.0; n * n];
    for (e, local) in boundary_edges_of(mesh, el) {
        let tab = edge_tabulation(kind, p, local, edge_points(p));
        let len = mesh.edges[e].length;
        for (q, bv) in tab.at.iter().enumerate() {
            let w = tab.weights[q] * len;
            for i in 0..n {
                for j in 0..n {
                    m[i * n + j] += w * bv.values[i] * bv.values[j];
                }
            }
        }
    }
    m
}

/// `∫_Ω ∇φ_j·∇φ_i`.
pub fn assemble_gradient_form(space: &FeSpace) -> SparseMatrix {
    assemble_blocks(space, space, |el| local_gradient(space, el))
}

/// `A_ij = ∫_Ω ∇φ_j·∇φ_i + ∫_Γ α φ_j φ_i`.
pub fn assemble_robin_stiffness(space: &FeSpace, data: &ProblemData) -> Result<SparseMatrix, AssemblyError> {
    space.expect_kind(SpaceKind::State)?;
    data.validate()?;
    let alpha = data.alpha;
    Ok(assemble_blocks(space, space, |el| {
        let mut k = local_gradient(space, el);
        for (a, b) in k.iter_mut().zip(local_boundary_mass(space, el)) {
            *a += alpha * b;
        }
        k
    }))
}

/// `M_ij = weight·∫_Ω χ_j φ_i` with `φ` from `rows` and `χ` from `cols`.
pub fn assemble_domain_mass(rows: &FeSpace, cols: &FeSpace, weight: f64) -> Result<SparseMatrix, AssemblyError> {
    check_same_mesh(rows, cols)?;
    let mesh = rows.mesh();
    let m = assemble_blocks(rows, cols, |el| {
        let element = &mesh.elements[el];
        let (pr, pc) = (rows.degree(el), cols.degree(el));
        let ex = default_exactness(pr.max(pc));
        let tr = tabulate(element.kind, pr, ex);
        let tc = tabulate(element.kind, pc, ex);
        let det = element.map.det().abs();
        let (nr, nc) = (rows.basis(el).count(), cols.basis(el).count());
        let mut m = vec![0.0; nr * nc];
        for q in 0..tr.rule.len() {
            let w = tr.rule.weights[q] * det;
            let (vr, vc) = (&tr.at[q].values, &tc.at[q].values);
            for i in 0..nr {
                for j in 0..nc {
                    m[i * nc + j] += w * vr[i] * vc[j];
                }
            }
        }
        m
    });
    Ok(if weight == 1.0 { m } else { m.scaled(weight) })
}

/// `B_ij = weight·∫_Γ φ_j φ_i`.
pub fn assemble_boundary_mass(space: &FeSpace, weight: f64) -> Result<SparseMatrix, AssemblyError> {
    space.expect_kind(SpaceKind::State)?;
    let m = assemble_blocks(space, space, |el| local_boundary_mass(space, el));
    Ok(if weight == 1.0 { m } else { m.scaled(weight) })
}

/// Gram matrix of the `H¹` inner product on `space`.
pub fn assemble_h1_gram(space: &FeSpace) -> Result<SparseMatrix, AssemblyError> {
    Ok(assemble_gradient_form(space).add_scaled(1.0, &assemble_domain_mass(space, space, 1.0)?))
}

/// `b_i = ∫_Ω f φ_i`.
pub fn assemble_load(space: &FeSpace, f: impl Fn(Point2) -> f64 + Sync) -> Vec<f64> {
    let mesh = space.mesh();
    assemble_vector(space, |el| {
        let element = &mesh.elements[el];
        let p = space.degree(el);
        let tab = tabulate(element.kind, p, default_exactness(p));
        let det = element.map.det().abs();
        let mut b = vec![0.0; space.basis(el).count()];
        for (q, bv) in tab.at.iter().enumerate() {
            let w = tab.rule.weights[q] * det * f(element.map.apply(tab.rule.points[q]));
            for (bi, v) in b.iter_mut().zip(&bv.values) {
                *bi += w * v;
            }
        }
        b
    })
}

/// `b_i = ∫_Γ g φ_i`.
pub fn assemble_boundary_load(space: &FeSpace, g: impl Fn(Point2) -> f64 + Sync) -> Vec<f64> {
    let mesh = space.mesh();
    assemble_vector(space, |el| {
        let element = &mesh.elements[el];
        let p = space.degree(el);
        let mut b = vec![0.0; space.basis(el).count()];
        for (e, local) in boundary_edges_of(mesh, el) {
            let tab = edge_tabulation(element.kind, p, local, edge_points(p));
            let len = mesh.edges[e].length;
            for (q, bv) in tab.at.iter().enumerate() {
                let w = tab.weights[q] * len * g(element.map.apply(tab.points[q]));
                for (bi, v) in b.iter_mut().zip(&bv.values) {
                    *bi += w * v;
                }
            }
        }
        b
    })
}

/// `b_i = λ_Ω∫_Ω(y − y_Ω)φ_i + λ_Γ∫_Γ(y − y_Γ)φ_i`.
pub fn assemble_adjoint_rhs(space: &Arc<FeSpace>, y: &Field, data: &ProblemData) -> Result<Vec<f64>, AssemblyError> {
    space.expect_kind(SpaceKind::State)?;
    check_field(y, space)?;
    let mesh = space.mesh();
    let (lo, lg) = (data.lambda_omega, data.lambda_gamma);
    Ok(assemble_vector(space, |el| {
        let element = &mesh.elements[el];
        let p = space.degree(el);
        let n = space.basis(el).count();
        let yl = y.local_coeffs(el);
        let mut b = vec![0.0; n];
        if lo != 0.0 {
            let tab = tabulate(element.kind, p, default_exactness(p));
            let det = element.map.det().abs();
            for (q, bv) in tab.at.iter().enumerate() {
                let x = element.map.apply(tab.rule.points[q]);
                let yv: f64 = yl.iter().zip(&bv.values).map(|(c, v)| c * v).sum();
                let w = tab.rule.weights[q] * det * lo * (yv - data.y_omega.eval(x));
                for (bi, v) in b.iter_mut().zip(&bv.values) {
                    *bi += w * v;
                }
            }
        }
        if lg != 0.0 {
            for (e, local) in boundary_edges_of(mesh, el) {
                let tab = edge_tabulation(element.kind, p, local, edge_points(p));
                let len = mesh.edges[e].length;
                for (q, bv) in tab.at.iter().enumerate() {
                    let x = element.map.apply(tab.points[q]);
                    let yv: f64 = yl.iter().zip(&bv.values).map(|(c, v)| c * v).sum();
                    let w = tab.weights[q] * len * lg * (yv - data.y_gamma.eval(x));
                    for (bi, v) in b.iter_mut().zip(&bv.values) {
                        *bi += w * v;
                    }
                }
            }
        }
        b
    }))
}

/// `L²(Ω)` norm and `H¹` seminorm of a field.
pub fn field_norms(field: &Field) -> (f64, f64) {
    let space = field.space();
    let mesh = space.mesh();
    let parts: Vec<(f64, f64)> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|el| {
            let element = &mesh.elements[el];
            let p = space.degree(el);
            let tab = tabulate(element.kind, p, default_exactness(p));
            let det = element.map.det().abs();
            let inv = element.inv_jacobian();
            let local = field.local_coeffs(el);
            let (mut l2, mut semi) = (0.0, 0.0);
            for (q, bv) in tab.at.iter().enumerate() {
                let w = tab.rule.weights[q] * det;
                let mut v = 0.0;
                let mut g = [0.0; 2];
                for (i, c) in local.iter().enumerate() {
                    v += c * bv.values[i];
                    g[0] += c * bv.grads[i][0];
                    g[1] += c * bv.grads[i][1];
                }
                let g = grad_to_physical(inv, g);
                l2 += w * v * v;
                semi += w * (g[0] * g[0] + g[1] * g[1]);
            }
            (l2, semi)
        })
        .collect();
    let (l2, semi) = parts.iter().fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    (l2.sqrt(), semi.sqrt())
}

/// `J = λ_Ω/2‖y − y_Ω‖²_Ω + λ_Γ/2‖y − y_Γ‖²_Γ + λ/2‖u‖²_Ω`.
pub fn evaluate_j(u: &Field, y: &Field, data: &ProblemData) -> Result<f64, AssemblyError> {
    u.space().expect_kind(SpaceKind::Control)?;
    y.space().expect_kind(SpaceKind::State)?;
    check_same_mesh(u.space(), y.space())?;
    let mesh = y.space().mesh();
    let parts: Vec<f64> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|el| {
            let element = &mesh.elements[el];
            let (py, pu) = (y.space().degree(el), u.space().degree(el));
            let ex = default_exactness(py.max(pu));
            let ty = tabulate(element.kind, py, ex);
            let tu = tabulate(element.kind, pu, ex);
            let det = element.map.det().abs();
            let (yl, ul) = (y.local_coeffs(el), u.local_coeffs(el));
            let dot = |c: &[f64], v: &[f64]| -> f64 { c.iter().zip(v).map(|(a, b)| a * b).sum() };
            let mut j = 0.0;
            for q in 0..ty.rule.len() {
                let w = ty.rule.weights[q] * det;
                let x = element.map.apply(ty.rule.points[q]);
                let dy = dot(&yl, &ty.at[q].values) - data.y_omega.eval(x);
                let uv = dot(&ul, &tu.at[q].values);
                j += w * (0.5 * data.lambda_omega * dy * dy + 0.5 * data.lambda * uv * uv);
            }
            for (e, local) in boundary_edges_of(mesh, el) {
                let tab = edge_tabulation(element.kind, py, local, edge_points(py));
                let len = mesh.edges[e].length;
                for (q, bv) in tab.at.iter().enumerate() {
                    let x = element.map.apply(tab.points[q]);
                    let dy = dot(&yl, &bv.values) - data.y_gamma.eval(x);
                    j += tab.weights[q] * len * 0.5 * data.lambda_gamma * dy * dy;
                }
            }
            j
        })
        .collect();
    Ok(parts.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_uniform_quad_mesh, build_uniform_tri_mesh, DegreeVector, TriangleSplit};
    use crate::problem::Target;
    use crate::space::{build_control_space, build_state_space};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn state(mesh: Mesh, p: usize) -> Arc<FeSpace> {
        let n = mesh.num_elements();
        build_state_space(Arc::new(mesh), DegreeVector::uniform(n, p)).unwrap()
    }

    fn spaces(mesh: Mesh, p: usize) -> (Arc<FeSpace>, Arc<FeSpace>) {
        let mesh = Arc::new(mesh);
        let n = mesh.num_elements();
        (
            build_state_space(mesh.clone(), DegreeVector::uniform(n, p)).unwrap(),
            build_control_space(mesh, DegreeVector::uniform(n, p)).unwrap(),
        )
    }

    fn ones(n: usize) -> Vec<f64> {
        vec![1.0; n]
    }

    #[test]
    fn constant_energy_is_alpha_times_perimeter() {
        for p in 1..=3 {
            let s = state(build_uniform_tri_mesh(2, TriangleSplit::Crisscross), p);
            let data = ProblemData { alpha: 2.5, ..ProblemData::unit() };
            let a = assemble_robin_stiffness(&s, &data).unwrap();
            let one = ones(s.dim());
            assert!((a.bilinear(&one, &one) - 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_q1_element_matches_hand_matrix() {
        let s = state(build_uniform_quad_mesh(1), 1);
        let a = assemble_robin_stiffness(&s, &ProblemData::unit()).unwrap().to_dense();
        // dofs at (0,0),(1,0),(0,1),(1,1)
        let k = DMatrix::from_row_slice(4, 4, &[
            4.0, -1.0, -1.0, -2.0, //
            -1.0, 4.0, -2.0, -1.0, //
            -1.0, -2.0, 4.0, -1.0, //
            -2.0, -1.0, -1.0, 4.0,
        ]) / 6.0;
        // each vertex touches two edges of length 1: 2·1/3 diagonal, 1/6 to edge neighbors
        let b = DMatrix::from_row_slice(4, 4, &[
            2.0, 0.5, 0.5, 0.0, //
            0.5, 2.0, 0.0, 0.5, //
            0.5, 0.0, 2.0, 0.5, //
            0.0, 0.5, 0.5, 2.0,
        ]) / 3.0;
        assert!((a - (k + b)).abs().max() < 1e-14);
    }

    #[test]
    fn stiffness_is_spd() {
        for p in [1, 2] {
            let s = state(build_uniform_quad_mesh(2), p);
            let a = assemble_robin_stiffness(&s, &ProblemData::unit()).unwrap();
            assert!(a.asymmetry() <= 1e-12 * a.max_abs());
            let eig = a.to_dense().symmetric_eigen().eigenvalues;
            assert!(eig.min() > 0.0, "p={p}");
        }
    }

    #[test]
    fn domain_mass_integrals() {
        let (s, c) = spaces(build_uniform_tri_mesh(2, TriangleSplit::Crisscross), 2);
        let m = assemble_domain_mass(&s, &c, 1.0).unwrap();
        assert!((m.bilinear(&ones(s.dim()), &ones(c.dim())) - 1.0).abs() < 1e-12);
        let z = assemble_domain_mass(&s, &c, 0.0).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        let other = state(build_uniform_quad_mesh(3), 1);
        assert!(matches!(
            assemble_domain_mass(&other, &c, 1.0),
            Err(AssemblyError::Space(SpaceError::MeshMismatch))
        ));
    }

    #[test]
    fn state_control_mass_on_one_q1_element() {
        let (s, c) = spaces(build_uniform_quad_mesh(1), 1);
        let m = assemble_domain_mass(&s, &c, 1.0).unwrap().to_dense();
        // 1D factors: 1/3 when both nodes share the coordinate, 1/6 otherwise
        let f = |a: f64, b: f64| if a == b { 1.0 / 3.0 } else { 1.0 / 6.0 };
        let oracle = DMatrix::from_fn(4, 4, |i, j| {
            let (a, b) = (s.dof_points()[i], c.dof_points()[j]);
            f(a.x1, b.x1) * f(a.x2, b.x2)
        });
        assert!((m - oracle).abs().max() < 1e-15);
    }

    #[test]
    fn boundary_mass_properties() {
        let s = state(build_uniform_quad_mesh(3), 2);
        let b = assemble_boundary_mass(&s, 1.0).unwrap();
        assert!((b.bilinear(&ones(s.dim()), &ones(s.dim())) - 4.0).abs() < 1e-12);
        for (i, p) in s.dof_points().iter().enumerate() {
            let interior = p.x1 > 1e-12 && p.x1 < 1.0 - 1e-12 && p.x2 > 1e-12 && p.x2 < 1.0 - 1e-12;
            if interior {
                assert!(b.row(i).1.iter().all(|&v| v == 0.0));
            }
        }
        // one boundary edge of length 1/3 between vertex dofs 0 and 1
        let s1 = state(build_uniform_quad_mesh(3), 1);
        let b1 = assemble_boundary_mass(&s1, 1.0).unwrap();
        let h = 1.0 / 3.0;
        assert!((b1.get(0, 1) - h / 6.0).abs() < 1e-15);
        // corner and edge-midpoint vertices both touch two boundary edges
        assert!((b1.get(0, 0) - 2.0 * h / 3.0).abs() < 1e-15);
        assert!((b1.get(1, 1) - 2.0 * h / 3.0).abs() < 1e-15);
    }

    #[test]
    fn assembly_is_linear_and_deterministic() {
        let (s, c) = spaces(build_uniform_tri_mesh(3, TriangleSplit::Crisscross), 2);
        let m1 = assemble_domain_mass(&s, &c, 1.0).unwrap();
        let m3 = assemble_domain_mass(&s, &c, 3.7).unwrap();
        let d = m3.add_scaled(-3.7, &m1);
        assert!(d.max_abs() <= 1e-13);
        let b1 = assemble_boundary_mass(&s, 1.0).unwrap();
        let b2 = assemble_boundary_mass(&s, 2.0).unwrap();
        assert!(b2.add_scaled(-2.0, &b1).max_abs() <= 1e-13);
        let data = ProblemData::example1();
        let a1 = assemble_robin_stiffness(&s, &data).unwrap();
        let a2 = assemble_robin_stiffness(&s, &data).unwrap();
        assert_eq!(a1, a2);
    }

    #[test]
    fn adjoint_rhs_cases() {
        let s = state(build_uniform_quad_mesh(2), 2);
        let zero = Field::zeros(s.clone());
        let data = ProblemData::unit();
        assert!(assemble_adjoint_rhs(&s, &zero, &data).unwrap().iter().all(|&v| v == 0.0));
        let one = Field::constant(s.clone(), 1.0);
        let b = assemble_adjoint_rhs(&s, &one, &data).unwrap();
        assert!((b.iter().sum::<f64>() - 5.0).abs() < 1e-12);
        let off = ProblemData { lambda_omega: 0.0, lambda_gamma: 0.0, ..ProblemData::example1() };
        assert!(assemble_adjoint_rhs(&s, &one, &off).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn objective_values() {
        let (s, c) = spaces(build_uniform_tri_mesh(2, TriangleSplit::Crisscross), 1);
        let (u, y) = (Field::zeros(c.clone()), Field::zeros(s.clone()));
        assert_eq!(evaluate_j(&u, &y, &ProblemData::unit()).unwrap(), 0.0);
        let data = ProblemData::unit().with_target(Target::constant(1.0));
        assert!((evaluate_j(&u, &y, &data).unwrap() - 2.5).abs() < 1e-12);
        let u1 = Field::constant(c, 2.0);
        // λ/2·‖2‖² = 0.25·4 = 1
        assert!((evaluate_j(&u1, &y, &ProblemData::unit()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coercivity_constant_is_stable() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(42);
        let mut constants = Vec::new();
        for n in [2, 4, 8] {
            let s = state(build_uniform_quad_mesh(n), 1);
            let a = assemble_robin_stiffness(&s, &ProblemData::unit()).unwrap();
            let g = assemble_h1_gram(&s).unwrap();
            let mut c = f64::INFINITY;
            for _ in 0..100 {
                let v: Vec<f64> = (0..s.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                c = c.min(a.bilinear(&v, &v) / g.bilinear(&v, &v));
            }
            constants.push(c);
        }
        assert!(constants.iter().all(|&c| c > 0.05), "{constants:?}");
        let (lo, hi) = constants.iter().fold((f64::MAX, 0.0f64), |(l, h), &c| (l.min(c), h.max(c)));
        assert!(hi / lo < 10.0, "{constants:?}");
    }

    #[test]
    fn loads_integrate_constants() {
        let s = state(build_uniform_tri_mesh(2, TriangleSplit::Crisscross), 2);
        assert!((assemble_load(&s, |_| 3.0).iter().sum::<f64>() - 3.0).abs() < 1e-12);
        assert!((assemble_boundary_load(&s, |_| 1.0).iter().sum::<f64>() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn norms_of_linear_field() {
        let s = state(build_uniform_quad_mesh(3), 1);
        let f = Field::interpolate(s, |p| p.x1);
        let (l2, semi) = field_norms(&f);
        assert!((l2 - (1.0f64 / 3.0).sqrt()).abs() < 1e-13);
        assert!((semi - 1.0).abs() < 1e-13);
    }
}
