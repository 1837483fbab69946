//! Global degree-of-freedom maps for the continuous state space and the
//! discontinuous control space, plus finite-element fields on them.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector, Matrix2};
use thiserror::Error;

use crate::element::{
    default_exactness, interior_count, lagrange_1d, make_quadrature, ElementError, ShapeBasis,
    Tabulation,
};
use crate::mesh::{DegreeVector, Element, ElementKind, Mesh, MeshError, Point2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error("coefficient vector has length {got}, space dimension is {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("coefficient {0} is not finite")]
    NonFinite(usize),
    #[error("spaces are defined on different meshes")]
    MeshMismatch,
    #[error("expected a {expected:?} space, got {got:?}")]
    WrongKind { expected: SpaceKind, got: SpaceKind },
    #[error("local mass matrix of element {0} is singular")]
    SingularMass(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    /// H¹-conforming, globally continuous.
    State,
    /// Discontinuous, element-local blocks.
    Control,
}

/// One local shape function expressed through global degrees of freedom.
pub type LocalDof = Vec<(usize, f64)>;

#[derive(Debug)]
pub struct FeSpace {
    kind: SpaceKind,
    mesh: Arc<Mesh>,
    degrees: DegreeVector,
    bases: BTreeMap<(ElementKind, usize), Arc<ShapeBasis>>,
    maps: Vec<Vec<LocalDof>>,
    dof_points: Vec<Point2>,
    dim: usize,
}

fn basis_table(
    mesh: &Mesh,
    degrees: &DegreeVector,
) -> Result<BTreeMap<(ElementKind, usize), Arc<ShapeBasis>>, ElementError> {
    let mut bases = BTreeMap::new();
    for (id, el) in mesh.elements.iter().enumerate() {
        let key = (el.kind, degrees.degree(id));
        if !bases.contains_key(&key) {
            bases.insert(key, Arc::new(ShapeBasis::new(key.0, key.1)?));
        }
    }
    Ok(bases)
}

/// Builds the continuous space `Y^hp`. Shared edges carry the smaller of the
/// two adjacent degrees; the higher-degree side is constrained to that trace.
pub fn build_state_space(mesh: Arc<Mesh>, degrees: DegreeVector) -> Result<Arc<FeSpace>, SpaceError> {
    degrees.check(&mesh)?;
    let bases = basis_table(&mesh, &degrees)?;

    let mut vertex_dof = vec![usize::MAX; mesh.vertices.len()];
    for el in &mesh.elements {
        for &v in &el.vertex_ids {
            vertex_dof[v] = 0;
        }
    }
    let mut dim = 0;
    let mut dof_points = Vec::new();
    for (v, slot) in vertex_dof.iter_mut().enumerate() {
        if *slot == 0 {
            *slot = dim;
            dim += 1;
            dof_points.push(mesh.vertices[v]);
        }
    }
    let mut edge_offset = Vec::with_capacity(mesh.edges.len());
    for edge in &mesh.edges {
        let q = degrees.conforming_edge_degree(edge);
        edge_offset.push(dim);
        let (a, b) = (mesh.vertices[edge.vertex_ids[0]], mesh.vertices[edge.vertex_ids[1]]);
        for j in 1..q {
            let s = j as f64 / q as f64;
            dof_points.push(Point2::new(a.x1 + s * (b.x1 - a.x1), a.x2 + s * (b.x2 - a.x2)));
        }
        dim += q - 1;
    }

    let mut maps = Vec::with_capacity(mesh.num_elements());
    for (id, el) in mesh.elements.iter().enumerate() {
        let p = degrees.degree(id);
        let basis = &bases[&(el.kind, p)];
        let nv = el.kind.vertex_count();
        let mut local: Vec<LocalDof> = Vec::with_capacity(basis.count());
        for &v in &el.vertex_ids {
            local.push(vec![(vertex_dof[v], 1.0)]);
        }
        for k in 0..nv {
            let e = el.edges[k];
            let edge = &mesh.edges[e];
            let q = degrees.conforming_edge_degree(edge);
            let same_dir = el.vertex_ids[k] == edge.vertex_ids[0];
            let global_node = |j: usize| -> usize {
                if j == 0 {
                    vertex_dof[edge.vertex_ids[0]]
                } else if j == q {
                    vertex_dof[edge.vertex_ids[1]]
                } else {
                    edge_offset[e] + j - 1
                }
            };
            for m in 1..p {
                let mg = if same_dir { m } else { p - m };
                if q == p {
                    local.push(vec![(global_node(mg), 1.0)]);
                } else {
                    let s = mg as f64 / p as f64;
                    local.push((0..=q).map(|j| (global_node(j), lagrange_1d(q, j, s)[0])).collect());
                }
            }
        }
        let n_int = interior_count(el.kind, p);
        let first_interior = nv + nv * (p - 1);
        for l in 0..n_int {
            local.push(vec![(dim + l, 1.0)]);
            dof_points.push(el.map.apply(basis.nodes()[first_interior + l]));
        }
        dim += n_int;
        debug_assert_eq!(local.len(), basis.count());
        maps.push(local);
    }

    Ok(Arc::new(FeSpace {
        kind: SpaceKind::State,
        mesh,
        degrees,
        bases,
        maps,
        dof_points,
        dim,
    }))
}

/// Builds the discontinuous space `U^p`: one independent block of nodal
/// values per element.
pub fn build_control_space(mesh: Arc<Mesh>, degrees: DegreeVector) -> Result<Arc<FeSpace>, SpaceError> {
    degrees.check(&mesh)?;
    let bases = basis_table(&mesh, &degrees)?;
    let mut maps = Vec::with_capacity(mesh.num_elements());
    let mut dof_points = Vec::new();
    let mut dim = 0;
    for (id, el) in mesh.elements.iter().enumerate() {
        let basis = &bases[&(el.kind, degrees.degree(id))];
        maps.push((0..basis.count()).map(|l| vec![(dim + l, 1.0)]).collect());
        dof_points.extend(basis.nodes().iter().map(|&n| el.map.apply(n)));
        dim += basis.count();
    }
    Ok(Arc::new(FeSpace {
        kind: SpaceKind::Control,
        mesh,
        degrees,
        bases,
        maps,
        dof_points,
        dim,
    }))
}

impl FeSpace {
    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degrees(&self) -> &DegreeVector {
        &self.degrees
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self, element: usize) -> usize {
        self.degrees.degree(element)
    }

    pub fn basis(&self, element: usize) -> &Arc<ShapeBasis> {
        let kind = self.mesh.elements[element].kind;
        &self.bases[&(kind, self.degrees.degree(element))]
    }

    pub fn local_map(&self, element: usize) -> &[LocalDof] {
        &self.maps[element]
    }

    /// Physical location of each global degree of freedom (nodal interpolation points).
    pub fn dof_points(&self) -> &[Point2] {
        &self.dof_points
    }

    pub fn shares_mesh(&self, other: &FeSpace) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh) || *self.mesh == *other.mesh
    }

    pub fn expect_kind(&self, expected: SpaceKind) -> Result<(), SpaceError> {
        if self.kind != expected {
            return Err(SpaceError::WrongKind {
                expected,
                got: self.kind,
            });
        }
        Ok(())
    }

    /// Local nodal coefficients of element `element` from global coefficients.
    pub fn gather(&self, element: usize, coeffs: &[f64]) -> Vec<f64> {
        self.maps[element]
            .iter()
            .map(|entries| entries.iter().map(|&(g, c)| c * coeffs[g]).sum())
            .collect()
    }

    /// Adds `Tᵀ local` into `global`.
    pub fn scatter_add(&self, element: usize, local: &[f64], global: &mut [f64]) {
        for (entries, &v) in self.maps[element].iter().zip(local) {
            for &(g, c) in entries {
                global[g] += c * v;
            }
        }
    }

    /// True when every local shape function is a single global basis function
    /// (no minimum-rule constraints).
    pub fn is_unconstrained(&self) -> bool {
        self.maps.iter().flatten().all(|e| e.len() == 1)
    }
}

/// Reference-to-physical gradient: `J⁻ᵀ ∇ξ`.
pub fn grad_to_physical(inv: &Matrix2<f64>, g: [f64; 2]) -> [f64; 2] {
    [
        inv[(0, 0)] * g[0] + inv[(1, 0)] * g[1],
        inv[(0, 1)] * g[0] + inv[(1, 1)] * g[1],
    ]
}

/// Reference-to-physical Hessian `J⁻ᵀ H J⁻¹`, stored as `[xx, xy, yy]`.
pub fn hessian_to_physical(inv: &Matrix2<f64>, h: [f64; 3]) -> [f64; 3] {
    let hm = Matrix2::new(h[0], h[1], h[1], h[2]);
    let r = inv.transpose() * hm * inv;
    [r[(0, 0)], r[(0, 1)], r[(1, 1)]]
}

type TabKey = (ElementKind, usize, usize);

/// Shared cache of basis tabulations at element quadrature points.
pub fn tabulate(kind: ElementKind, degree: usize, exactness: usize) -> Arc<Tabulation> {
    static CACHE: OnceLock<Mutex<HashMap<TabKey, Arc<Tabulation>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (kind, degree, exactness);
    if let Some(t) = cache.lock().unwrap().get(&key) {
        return t.clone();
    }
    let basis = ShapeBasis::new(kind, degree).expect("degree validated by the space");
    let tab = Arc::new(Tabulation::new(&basis, make_quadrature(kind, exactness)));
    cache.lock().unwrap().entry(key).or_insert(tab).clone()
}

/// Value, physical gradient and physical Hessian `[xx, xy, yy]` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValue {
    pub value: f64,
    pub grad: [f64; 2],
    pub hessian: [f64; 3],
}

/// Coefficient vector of a finite-element function.
#[derive(Debug, Clone)]
pub struct Field {
    space: Arc<FeSpace>,
    coeffs: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.space, &other.space) && self.coeffs == other.coeffs
    }
}

impl Field {
    pub fn zeros(space: Arc<FeSpace>) -> Self {
        let coeffs = vec![0.0; space.dim()];
        Self { space, coeffs }
    }

    pub fn from_coeffs(space: Arc<FeSpace>, coeffs: Vec<f64>) -> Result<Self, SpaceError> {
        if coeffs.len() != space.dim() {
            return Err(SpaceError::Dimension {
                expected: space.dim(),
                got: coeffs.len(),
            });
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(SpaceError::NonFinite(i));
        }
        Ok(Self { space, coeffs })
    }

    pub fn constant(space: Arc<FeSpace>, c: f64) -> Self {
        let coeffs = vec![c; space.dim()];
        Self { space, coeffs }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(space: Arc<FeSpace>, f: impl Fn(Point2) -> f64) -> Self {
        let coeffs = space.dof_points().iter().map(|&p| f(p)).collect();
        Self { space, coeffs }
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn local_coeffs(&self, element: usize) -> Vec<f64> {
        self.space.gather(element, &self.coeffs)
    }

    /// Evaluates inside element `element` at reference point `xi`.
    pub fn eval_in_element(&self, element: usize, xi: [f64; 2]) -> PointValue {
        let el = &self.space.mesh.elements[element];
        let local = self.local_coeffs(element);
        let r = self.space.basis(element).eval(xi);
        combine(el, &local, &r.values, &r.grads, &r.hessians)
    }

    /// Evaluates at a physical point; points on shared edges or vertices use
    /// the lowest-id element containing them.
    pub fn evaluate(&self, x: Point2) -> Result<f64, SpaceError> {
        Ok(self.evaluate_full(x)?.value)
    }

    pub fn evaluate_with_grad(&self, x: Point2) -> Result<(f64, [f64; 2]), SpaceError> {
        let v = self.evaluate_full(x)?;
        Ok((v.value, v.grad))
    }

    pub fn evaluate_full(&self, x: Point2) -> Result<PointValue, SpaceError> {
        let (el, xi) = self.space.mesh.locate(x)?;
        Ok(self.eval_in_element(el, xi))
    }

    pub fn axpy(&mut self, a: f64, other: &Field) {
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += a * o;
        }
    }
}

/// Combines local coefficients with basis values into a physical point value.
pub fn combine(
    el: &Element,
    local: &[f64],
    values: &[f64],
    grads: &[[f64; 2]],
    hessians: &[[f64; 3]],
) -> PointValue {
    let mut v = 0.0;
    let mut g = [0.0; 2];
    let mut h = [0.0; 3];
    for (i, &c) in local.iter().enumerate() {
        v += c * values[i];
        g[0] += c * grads[i][0];
        g[1] += c * grads[i][1];
        h[0] += c * hessians[i][0];
        h[1] += c * hessians[i][1];
        h[2] += c * hessians[i][2];
    }
    let inv = el.inv_jacobian();
    PointValue {
        value: v,
        grad: grad_to_physical(inv, g),
        hessian: hessian_to_physical(inv, h),
    }
}

/// Elementwise `L²` projection of `f` onto the control space.
pub fn l2_project_control(space: &Arc<FeSpace>, f: impl Fn(Point2) -> f64) -> Result<Field, SpaceError> {
    space.expect_kind(SpaceKind::Control)?;
    let mut coeffs = vec![0.0; space.dim()];
    for (id, el) in space.mesh().elements.iter().enumerate() {
        let p = space.degree(id);
        let tab = tabulate(el.kind, p, default_exactness(p));
        let n = space.basis(id).count();
        let det = el.map.det().abs();
        let mut mass = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for (q, bv) in tab.at.iter().enumerate() {
            let w = tab.rule.weights[q] * det;
            let fx = f(el.map.apply(tab.rule.points[q]));
            for i in 0..n {
                rhs[i] += w * fx * bv.values[i];
                for j in 0..n {
                    mass[(i, j)] += w * bv.values[i] * bv.values[j];
                }
            }
        }
        let chol = mass.cholesky().ok_or(SpaceError::SingularMass(id))?;
        let sol = chol.solve(&rhs);
        let block = &space.local_map(id);
        for (l, entries) in block.iter().enumerate() {
            coeffs[entries[0].0] = sol[l];
        }
    }
    Field::from_coeffs(space.clone(), coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_uniform_quad_mesh, build_uniform_tri_mesh, TriangleSplit};

    fn quad(n: usize) -> Arc<Mesh> {
        Arc::new(build_uniform_quad_mesh(n))
    }

    #[test]
    fn state_dims() {
        let m = quad(2);
        assert_eq!(build_state_space(m.clone(), DegreeVector::uniform(4, 1)).unwrap().dim(), 9);
        assert_eq!(build_state_space(m, DegreeVector::uniform(4, 2)).unwrap().dim(), 25);
        let t = Arc::new(build_uniform_tri_mesh(2, TriangleSplit::Crisscross));
        assert_eq!(build_state_space(t, DegreeVector::uniform(16, 1)).unwrap().dim(), 13);
    }

    #[test]
    fn control_dims() {
        let m = quad(2);
        assert_eq!(build_control_space(m.clone(), DegreeVector::uniform(4, 1)).unwrap().dim(), 16);
        assert_eq!(build_control_space(m, DegreeVector::uniform(4, 2)).unwrap().dim(), 36);
        let t = Arc::new(build_uniform_tri_mesh(2, TriangleSplit::Crisscross));
        assert_eq!(build_control_space(t, DegreeVector::uniform(16, 1)).unwrap().dim(), 48);
    }

    #[test]
    fn degree_violation_is_an_error() {
        let m = quad(2);
        let err = build_state_space(m, DegreeVector::new(vec![1, 4, 1, 1], 2.0)).unwrap_err();
        assert!(matches!(err, SpaceError::Mesh(MeshError::DegreeRatio { .. })));
    }

    #[test]
    fn constant_and_linear_reproduction() {
        let t = Arc::new(build_uniform_tri_mesh(3, TriangleSplit::Crisscross));
        for p in 1..=3 {
            let s = build_state_space(t.clone(), DegreeVector::uniform(t.num_elements(), p)).unwrap();
            let c = Field::constant(s.clone(), 2.5);
            let lin = Field::interpolate(s, |x| x.x1);
            for x in [Point2::new(0.1, 0.2), Point2::new(0.5, 0.5), Point2::new(0.97, 0.03), Point2::new(1.0, 1.0)] {
                assert!((c.evaluate(x).unwrap() - 2.5).abs() < 1e-13);
                assert!((lin.evaluate(x).unwrap() - x.x1).abs() < 1e-13);
            }
        }
        let s = build_state_space(quad(2), DegreeVector::uniform(4, 1)).unwrap();
        assert!(Field::zeros(s).evaluate(Point2::new(1.5, 0.0)).is_err());
    }

    #[test]
    fn control_evaluation_on_shared_edge_uses_lowest_id() {
        let m = quad(2);
        let s = build_control_space(m, DegreeVector::uniform(4, 1)).unwrap();
        // element 0 carries 1, element 1 carries 2: jump across x1 = 1/2
        let mut coeffs = vec![0.0; s.dim()];
        for el in 0..2 {
            for entries in s.local_map(el) {
                coeffs[entries[0].0] = (el + 1) as f64;
            }
        }
        let f = Field::from_coeffs(s, coeffs).unwrap();
        assert_eq!(f.evaluate(Point2::new(0.5, 0.25)).unwrap(), 1.0);
        assert_eq!(f.evaluate(Point2::new(0.6, 0.25)).unwrap(), 2.0);
    }

    fn check_conformity(space: &Arc<FeSpace>) {
        let mesh = space.mesh();
        for dof in 0..space.dim() {
            let mut e = vec![0.0; space.dim()];
            e[dof] = 1.0;
            let f = Field::from_coeffs(space.clone(), e).unwrap();
            for edge in mesh.edges.iter().filter(|e| !e.is_boundary()) {
                let (a, b) = (mesh.vertices[edge.vertex_ids[0]], mesh.vertices[edge.vertex_ids[1]]);
                for k in 0..10 {
                    let t = (k as f64 + 0.5) / 10.0;
                    let x = Point2::new(a.x1 + t * (b.x1 - a.x1), a.x2 + t * (b.x2 - a.x2));
                    let l = mesh.elements[edge.left].to_reference(x);
                    let r = mesh.elements[edge.right.unwrap()].to_reference(x);
                    let vl = f.eval_in_element(edge.left, l).value;
                    let vr = f.eval_in_element(edge.right.unwrap(), r).value;
                    assert!((vl - vr).abs() < 1e-12, "dof {dof}: {vl} vs {vr}");
                }
            }
        }
    }

    #[test]
    fn uniform_spaces_are_conforming() {
        let t = Arc::new(build_uniform_tri_mesh(2, TriangleSplit::Crisscross));
        check_conformity(&build_state_space(t, DegreeVector::uniform(16, 3)).unwrap());
        check_conformity(&build_state_space(quad(2), DegreeVector::uniform(4, 3)).unwrap());
    }

    #[test]
    fn variable_degree_minimum_rule_is_conforming() {
        let m = quad(3);
        let degrees: Vec<usize> = (0..9).map(|i| if i % 2 == 0 { 2 } else { 3 }).collect();
        let s = build_state_space(m, DegreeVector::new(degrees, 2.0)).unwrap();
        assert!(!s.is_unconstrained());
        check_conformity(&s);

        let t = Arc::new(build_uniform_tri_mesh(2, TriangleSplit::Diagonal));
        let degrees: Vec<usize> = (0..8).map(|i| 1 + i % 2).collect();
        check_conformity(&build_state_space(t, DegreeVector::new(degrees, 2.0)).unwrap());
    }

    #[test]
    fn variable_degree_reproduces_linears() {
        let m = quad(3);
        let degrees: Vec<usize> = (0..9).map(|i| 1 + i % 2).collect();
        let s = build_state_space(m, DegreeVector::new(degrees, 2.0)).unwrap();
        let f = Field::interpolate(s, |x| 1.0 + 2.0 * x.x1 - x.x2);
        for x in [Point2::new(0.12, 0.77), Point2::new(0.5, 0.5), Point2::new(0.9, 0.35)] {
            assert!((f.evaluate(x).unwrap() - (1.0 + 2.0 * x.x1 - x.x2)).abs() < 1e-13);
        }
    }

    #[test]
    fn projection_of_zero_and_of_representable_functions() {
        let m = quad(2);
        let s = build_control_space(m.clone(), DegreeVector::uniform(4, 2)).unwrap();
        let z = l2_project_control(&s, |_| 0.0).unwrap();
        assert!(z.coeffs().iter().all(|&c| c == 0.0));

        let g = |x: Point2| x.x1 * x.x1 * x.x2 - 0.5 * x.x2 + 3.0;
        let pg = l2_project_control(&s, g).unwrap();
        for (id, el) in m.elements.iter().enumerate() {
            for xi in make_quadrature(el.kind, 7).points {
                let v = pg.eval_in_element(id, xi).value;
                assert!((v - g(el.map.apply(xi))).abs() < 1e-12);
            }
        }
        assert!(l2_project_control(&build_state_space(m, DegreeVector::uniform(4, 1)).unwrap(), g).is_err());
    }

    #[test]
    fn projection_of_x1_matches_dense_mass_solve() {
        // one Q1 element: hand-assembled mass matrix (1/36)[4 2 1 2; 2 4 2 1; 1 2 4 2; 2 1 2 4]
        let m = quad(1);
        let s = build_control_space(m, DegreeVector::uniform(1, 1)).unwrap();
        let pf = l2_project_control(&s, |x| x.x1).unwrap();
        let mass = DMatrix::from_row_slice(4, 4, &[
            4.0, 2.0, 1.0, 2.0, 2.0, 4.0, 2.0, 1.0, 1.0, 2.0, 4.0, 2.0, 2.0, 1.0, 2.0, 4.0,
        ]) / 36.0;
        // ∫ x φ_i for the bilinear hats at (0,0),(1,0),(1,1),(0,1)
        let rhs = DVector::from_vec(vec![1.0 / 12.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 12.0]);
        let expected = mass.lu().solve(&rhs).unwrap();
        for i in 0..4 {
            assert!((pf.coeffs()[i] - expected[i]).abs() < 1e-13);
        }
        assert!((pf.coeffs()[1] - 1.0).abs() < 1e-13 && pf.coeffs()[0].abs() < 1e-13);
    }
}
