//! Structured meshes of the unit square with full edge connectivity.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("element {element} references vertex {vertex}, but the mesh has {count} vertices")]
    VertexIndex {
        element: usize,
        vertex: usize,
        count: usize,
    },
    #[error("element {element}: expected {expected} vertices, got {got}")]
    VertexCount {
        element: usize,
        expected: usize,
        got: usize,
    },
    #[error("element {0} is oriented clockwise")]
    Clockwise(usize),
    #[error("element {0} is not a parallelogram (no affine reference map)")]
    NotAffine(usize),
    #[error("element {0} is degenerate (singular reference map)")]
    Degenerate(usize),
    #[error("edge ({0}, {1}) is shared by more than two elements")]
    NonManifoldEdge(usize, usize),
    #[error("boundary edge {0} does not lie on the boundary of the unit square")]
    BoundaryEdgeInterior(usize),
    #[error("vertex {0} lies outside the unit square")]
    VertexOutside(usize),
    #[error("degree vector has {got} entries for {expected} elements")]
    DegreeLength { expected: usize, got: usize },
    #[error("element {element} has degree {degree}; degree must be >= 1")]
    DegreeTooLow { element: usize, degree: usize },
    #[error("degrees {p} (element {a}) and {q} (element {b}) violate the ratio bound {gamma}")]
    DegreeRatio {
        a: usize,
        b: usize,
        p: usize,
        q: usize,
        gamma: f64,
    },
    #[error("point ({0}, {1}) is outside the domain")]
    PointOutside(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point2 {
    pub x1: f64,
    pub x2: f64,
}

impl Point2 {
    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.x1, self.x2)
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self.x1 - other.x1).hypot(self.x2 - other.x2)
    }
}

impl From<Vector2<f64>> for Point2 {
    fn from(v: Vector2<f64>) -> Self {
        Point2::new(v.x, v.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Triangle,
    Quad,
}

impl ElementKind {
    pub fn vertex_count(self) -> usize {
        match self {
            ElementKind::Triangle => 3,
            ElementKind::Quad => 4,
        }
    }

    /// Vertices of the reference element, counterclockwise.
    pub fn reference_vertices(self) -> &'static [[f64; 2]] {
        match self {
            ElementKind::Triangle => &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            ElementKind::Quad => &[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        }
    }

    pub fn reference_area(self) -> f64 {
        match self {
            ElementKind::Triangle => 0.5,
            ElementKind::Quad => 1.0,
        }
    }

    /// Whether a reference point lies in the closed reference element, up to `tol`.
    pub fn contains_reference(self, xi: [f64; 2], tol: f64) -> bool {
        match self {
            ElementKind::Triangle => xi[0] >= -tol && xi[1] >= -tol && xi[0] + xi[1] <= 1.0 + tol,
            ElementKind::Quad => {
                xi[0] >= -tol && xi[1] >= -tol && xi[0] <= 1.0 + tol && xi[1] <= 1.0 + tol
            }
        }
    }

    /// Projects a reference point onto the closed reference element.
    pub fn clamp_reference(self, xi: [f64; 2]) -> [f64; 2] {
        let a = xi[0].clamp(0.0, 1.0);
        let b = xi[1].clamp(0.0, 1.0);
        match self {
            ElementKind::Quad => [a, b],
            ElementKind::Triangle => {
                let s = a + b;
                if s > 1.0 {
                    [a / s, b / s]
                } else {
                    [a, b]
                }
            }
        }
    }
}

/// Affine map `x = offset + jacobian * xi` from the reference element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub jacobian: Matrix2<f64>,
    pub offset: Vector2<f64>,
}

impl AffineMap {
    pub fn apply(&self, xi: [f64; 2]) -> Point2 {
        (self.offset + self.jacobian * Vector2::new(xi[0], xi[1])).into()
    }

    pub fn det(&self) -> f64 {
        self.jacobian.determinant()
    }

    pub fn inverse_jacobian(&self) -> Option<Matrix2<f64>> {
        self.jacobian.try_inverse()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub kind: ElementKind,
    pub vertex_ids: Vec<usize>,
    pub map: AffineMap,
    /// Largest pairwise vertex distance.
    pub diameter: f64,
    /// Edge ids in local edge order (local edge `k` joins local vertices `k` and `k+1`).
    pub edges: Vec<usize>,
    inv_jacobian: Matrix2<f64>,
}

impl Element {
    pub fn area(&self) -> f64 {
        self.map.det().abs() * self.kind.reference_area()
    }

    /// Inverse Jacobian of the reference map (zero matrix for degenerate elements).
    pub fn inv_jacobian(&self) -> &Matrix2<f64> {
        &self.inv_jacobian
    }

    pub fn to_reference(&self, x: Point2) -> [f64; 2] {
        let r = self.inv_jacobian * (x.to_vector() - self.map.offset);
        [r.x, r.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Edge {
    /// Endpoints in the counterclockwise order of `left`.
    pub vertex_ids: [usize; 2],
    pub left: usize,
    pub right: Option<usize>,
    /// Local edge index within `left` and within `right`.
    pub local_left: usize,
    pub local_right: Option<usize>,
    /// Unit normal pointing out of `left`.
    pub normal: [f64; 2],
    pub length: f64,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TriangleSplit {
    /// Each square cut along its lower-left to upper-right diagonal (2n² triangles).
    Diagonal,
    /// Each square cut by both diagonals through an added center vertex (4n² triangles).
    Crisscross,
}

#[derive(Debug)]
pub struct Mesh {
    pub vertices: Vec<Point2>,
    pub elements: Vec<Element>,
    pub edges: Vec<Edge>,
    pub boundary_edges: Vec<usize>,
    locator: OnceLock<Locator>,
}

impl Clone for Mesh {
    fn clone(&self) -> Self {
        Mesh {
            vertices: self.vertices.clone(),
            elements: self.elements.clone(),
            edges: self.edges.clone(),
            boundary_edges: self.boundary_edges.clone(),
            locator: OnceLock::new(),
        }
    }
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.elements == other.elements && self.edges == other.edges
    }
}

const GEOM_TOL: f64 = 1e-12;

impl Mesh {
    /// Builds a mesh from vertex coordinates and element connectivity, deriving the edge table.
    ///
    /// Only structural checks happen here; geometric diagnostics live in
    /// [`Mesh::validate`] and [`shape_regularity`].
    pub fn from_parts(
        vertices: Vec<Point2>,
        cells: Vec<(ElementKind, Vec<usize>)>,
    ) -> Result<Mesh, MeshError> {
        let mut elements = Vec::with_capacity(cells.len());
        for (id, (kind, ids)) in cells.into_iter().enumerate() {
            if ids.len() != kind.vertex_count() {
                return Err(MeshError::VertexCount {
                    element: id,
                    expected: kind.vertex_count(),
                    got: ids.len(),
                });
            }
            if let Some(&v) = ids.iter().find(|&&v| v >= vertices.len()) {
                return Err(MeshError::VertexIndex {
                    element: id,
                    vertex: v,
                    count: vertices.len(),
                });
            }
            let p: Vec<Vector2<f64>> = ids.iter().map(|&v| vertices[v].to_vector()).collect();
            let (e1, e2) = match kind {
                ElementKind::Triangle => (p[1] - p[0], p[2] - p[0]),
                ElementKind::Quad => (p[1] - p[0], p[3] - p[0]),
            };
            let jacobian = Matrix2::from_columns(&[e1, e2]);
            let map = AffineMap {
                jacobian,
                offset: p[0],
            };
            let mut diameter: f64 = 0.0;
            for i in 0..p.len() {
                for j in i + 1..p.len() {
                    diameter = diameter.max((p[i] - p[j]).norm());
                }
            }
            let det = jacobian.determinant();
            if det < -GEOM_TOL * diameter * diameter {
                return Err(MeshError::Clockwise(id));
            }
            if kind == ElementKind::Quad && (p[2] - (p[1] + p[3] - p[0])).norm() > GEOM_TOL * (1.0 + diameter) {
                return Err(MeshError::NotAffine(id));
            }
            let inv_jacobian = jacobian.try_inverse().unwrap_or_else(Matrix2::zeros);
            elements.push(Element {
                kind,
                vertex_ids: ids,
                map,
                diameter,
                edges: Vec::new(),
                inv_jacobian,
            });
        }

        let mut edges: Vec<Edge> = Vec::new();
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        for id in 0..elements.len() {
            let nv = elements[id].vertex_ids.len();
            let mut local_edges = Vec::with_capacity(nv);
            for k in 0..nv {
                let a = elements[id].vertex_ids[k];
                let b = elements[id].vertex_ids[(k + 1) % nv];
                let key = (a.min(b), a.max(b));
                match lookup.get(&key) {
                    None => {
                        let (pa, pb) = (vertices[a], vertices[b]);
                        let length = pa.dist(pb);
                        let (dx, dy) = (pb.x1 - pa.x1, pb.x2 - pa.x2);
                        let normal = if length > 0.0 {
                            [dy / length, -dx / length]
                        } else {
                            [0.0, 0.0]
                        };
                        lookup.insert(key, edges.len());
                        local_edges.push(edges.len());
                        edges.push(Edge {
                            vertex_ids: [a, b],
                            left: id,
                            right: None,
                            local_left: k,
                            local_right: None,
                            normal,
                            length,
                        });
                    }
                    Some(&e) => {
                        if edges[e].right.is_some() {
                            return Err(MeshError::NonManifoldEdge(key.0, key.1));
                        }
                        edges[e].right = Some(id);
                        edges[e].local_right = Some(k);
                        local_edges.push(e);
                    }
                }
            }
            elements[id].edges = local_edges;
        }
        let boundary_edges = (0..edges.len()).filter(|&e| edges[e].is_boundary()).collect();
        Ok(Mesh {
            vertices,
            elements,
            edges,
            boundary_edges,
            locator: OnceLock::new(),
        })
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Geometric checks: vertices inside the closed unit square, non-degenerate
    /// elements, and boundary edges on the square's boundary.
    pub fn validate(&self) -> Result<(), MeshError> {
        for (i, v) in self.vertices.iter().enumerate() {
            let inside = |c: f64| c.is_finite() && (-GEOM_TOL..=1.0 + GEOM_TOL).contains(&c);
            if !inside(v.x1) || !inside(v.x2) {
                return Err(MeshError::VertexOutside(i));
            }
        }
        for (id, el) in self.elements.iter().enumerate() {
            if el.map.det() <= GEOM_TOL * el.diameter * el.diameter {
                return Err(MeshError::Degenerate(id));
            }
        }
        for &e in &self.boundary_edges {
            let [a, b] = self.edges[e].vertex_ids;
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let on_side = |f: fn(Point2) -> f64, t: f64| {
                (f(pa) - t).abs() < GEOM_TOL && (f(pb) - t).abs() < GEOM_TOL
            };
            let ok = on_side(|p| p.x1, 0.0)
                || on_side(|p| p.x1, 1.0)
                || on_side(|p| p.x2, 0.0)
                || on_side(|p| p.x2, 1.0);
            if !ok {
                return Err(MeshError::BoundaryEdgeInterior(e));
            }
        }
        Ok(())
    }

    /// Elements sharing at least one vertex with `id` (excluding `id`), ascending.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut by_vertex: Vec<Vec<usize>> = vec![Vec::new(); self.vertices.len()];
        for (id, el) in self.elements.iter().enumerate() {
            for &v in &el.vertex_ids {
                by_vertex[v].push(id);
            }
        }
        self.elements
            .iter()
            .enumerate()
            .map(|(id, el)| {
                let mut n: Vec<usize> = el
                    .vertex_ids
                    .iter()
                    .flat_map(|&v| by_vertex[v].iter().copied())
                    .filter(|&o| o != id)
                    .collect();
                n.sort_unstable();
                n.dedup();
                n
            })
            .collect()
    }

    /// Locates the element containing `x`; ties on shared edges and vertices go
    /// to the lowest element id. Returns the element and the reference coordinates.
    pub fn locate(&self, x: Point2) -> Result<(usize, [f64; 2]), MeshError> {
        let loc = self.locator.get_or_init(|| Locator::new(self));
        for &id in loc.candidates(x) {
            let el = &self.elements[id];
            let xi = el.to_reference(x);
            if el.kind.contains_reference(xi, 1e-10) {
                return Ok((id, el.kind.clamp_reference(xi)));
            }
        }
        Err(MeshError::PointOutside(x.x1, x.x2))
    }

    /// Copy of the mesh with every interior edge's left/right roles swapped and
    /// its normal negated. Boundary edges are unchanged.
    pub fn with_flipped_interior_normals(&self) -> Mesh {
        let mut m = self.clone();
        for e in m.edges.iter_mut().filter(|e| !e.is_boundary()) {
            let r = e.right.take().unwrap();
            let lr = e.local_right.take().unwrap();
            e.right = Some(e.left);
            e.local_right = Some(e.local_left);
            e.left = r;
            e.local_left = lr;
            e.normal = [-e.normal[0], -e.normal[1]];
        }
        m
    }

    /// JSON debug dump: vertices, element connectivity and the edge table.
    pub fn to_json(&self) -> serde_json::Value {
        let elements: Vec<_> = self
            .elements
            .iter()
            .map(|el| {
                serde_json::json!({
                    "kind": el.kind,
                    "vertices": el.vertex_ids,
                    "diameter": el.diameter,
                    "edges": el.edges,
                })
            })
            .collect();
        serde_json::json!({
            "vertices": self.vertices.iter().map(|p| [p.x1, p.x2]).collect::<Vec<_>>(),
            "elements": elements,
            "edges": self.edges,
            "boundary_edges": self.boundary_edges,
        })
    }
}

/// Uniform bucket grid over the unit square for point location.
#[derive(Debug)]
struct Locator {
    cells: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn new(mesh: &Mesh) -> Self {
        let cells = ((mesh.elements.len() as f64).sqrt().ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); cells * cells];
        let to_cell = |c: f64| ((c * cells as f64).floor().max(0.0) as usize).min(cells - 1);
        for (id, el) in mesh.elements.iter().enumerate() {
            let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for &v in &el.vertex_ids {
                let p = mesh.vertices[v];
                lo = [lo[0].min(p.x1), lo[1].min(p.x2)];
                hi = [hi[0].max(p.x1), hi[1].max(p.x2)];
            }
            let pad = 1e-9;
            for j in to_cell(lo[1] - pad)..=to_cell(hi[1] + pad) {
                for i in to_cell(lo[0] - pad)..=to_cell(hi[0] + pad) {
                    buckets[j * cells + i].push(id);
                }
            }
        }
        Locator { cells, buckets }
    }

    fn candidates(&self, x: Point2) -> &[usize] {
        if !(x.x1.is_finite() && x.x2.is_finite()) {
            return &[];
        }
        let n = self.cells as f64;
        let (fi, fj) = ((x.x1 * n).floor(), (x.x2 * n).floor());
        if fi < -1.0 || fj < -1.0 || fi > n || fj > n {
            return &[];
        }
        let i = (fi.max(0.0) as usize).min(self.cells - 1);
        let j = (fj.max(0.0) as usize).min(self.cells - 1);
        &self.buckets[j * self.cells + i]
    }
}

/// `n`×`n` axis-aligned squares of side `1/n`.
pub fn build_uniform_quad_mesh(n: usize) -> Mesh {
    assert!(n >= 1, "mesh resolution must be >= 1");
    let vid = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point2::new(i as f64 / n as f64, j as f64 / n as f64));
        }
    }
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push((
                ElementKind::Quad,
                vec![vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)],
            ));
        }
    }
    Mesh::from_parts(vertices, cells).expect("structured quad mesh is valid")
}

/// Triangulation of the `n`×`n` grid of the unit square.
pub fn build_uniform_tri_mesh(n: usize, split: TriangleSplit) -> Mesh {
    assert!(n >= 1, "mesh resolution must be >= 1");
    let vid = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point2::new(i as f64 / n as f64, j as f64 / n as f64));
        }
    }
    let mut cells = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            match split {
                TriangleSplit::Diagonal => {
                    cells.push((ElementKind::Triangle, vec![a, b, c]));
                    cells.push((ElementKind::Triangle, vec![a, c, d]));
                }
                TriangleSplit::Crisscross => {
                    let m = vertices.len();
                    vertices.push(Point2::new(
                        (2 * i + 1) as f64 / (2 * n) as f64,
                        (2 * j + 1) as f64 / (2 * n) as f64,
                    ));
                    cells.push((ElementKind::Triangle, vec![a, b, m]));
                    cells.push((ElementKind::Triangle, vec![b, c, m]));
                    cells.push((ElementKind::Triangle, vec![c, d, m]));
                    cells.push((ElementKind::Triangle, vec![d, a, m]));
                }
            }
        }
    }
    Mesh::from_parts(vertices, cells).expect("structured triangle mesh is valid")
}

/// Largest value of `h⁻¹‖F'‖ + h‖(F')⁻¹‖` over the elements (spectral norms).
pub fn shape_regularity(mesh: &Mesh) -> Result<f64, MeshError> {
    let mut worst: f64 = 0.0;
    for (id, el) in mesh.elements.iter().enumerate() {
        let jac = el.map.jacobian;
        let h = el.diameter;
        if h <= 0.0 || jac.determinant().abs() <= GEOM_TOL * h * h {
            return Err(MeshError::Degenerate(id));
        }
        let inv = jac.try_inverse().ok_or(MeshError::Degenerate(id))?;
        let value = jac.norm_spectral() / h + h * inv.norm_spectral();
        worst = worst.max(value);
    }
    Ok(worst)
}

trait SpectralNorm {
    fn norm_spectral(&self) -> f64;
}

impl SpectralNorm for Matrix2<f64> {
    fn norm_spectral(&self) -> f64 {
        // largest singular value of [[a, b], [c, d]]
        let (a, b, c, d) = (self[(0, 0)], self[(0, 1)], self[(1, 0)], self[(1, 1)]);
        0.5 * ((a + d).hypot(c - b) + (a - d).hypot(b + c))
    }
}

/// Per-element polynomial degrees with the neighbor ratio bound `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVector {
    degrees: Vec<usize>,
    gamma: f64,
}

impl DegreeVector {
    pub const DEFAULT_GAMMA: f64 = 2.0;

    pub fn uniform(num_elements: usize, p: usize) -> Self {
        Self {
            degrees: vec![p; num_elements],
            gamma: Self::DEFAULT_GAMMA,
        }
    }

    pub fn new(degrees: Vec<usize>, gamma: f64) -> Self {
        Self { degrees, gamma }
    }

    pub fn degree(&self, element: usize) -> usize {
        self.degrees[element]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.degrees
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }

    pub fn is_uniform(&self) -> bool {
        self.degrees.windows(2).all(|w| w[0] == w[1])
    }

    /// Checks length, `p >= 1`, and `p/γ <= p' <= γp` for every pair of
    /// elements whose closures intersect.
    pub fn check(&self, mesh: &Mesh) -> Result<(), MeshError> {
        if self.degrees.len() != mesh.num_elements() {
            return Err(MeshError::DegreeLength {
                expected: mesh.num_elements(),
                got: self.degrees.len(),
            });
        }
        if let Some((element, &degree)) = self.degrees.iter().enumerate().find(|(_, &p)| p < 1) {
            return Err(MeshError::DegreeTooLow { element, degree });
        }
        if self.is_uniform() {
            return Ok(());
        }
        for (a, nbrs) in mesh.vertex_neighbors().iter().enumerate() {
            for &b in nbrs {
                let (p, q) = (self.degrees[a] as f64, self.degrees[b] as f64);
                if q < p / self.gamma || q > self.gamma * p {
                    return Err(MeshError::DegreeRatio {
                        a,
                        b,
                        p: self.degrees[a],
                        q: self.degrees[b],
                        gamma: self.gamma,
                    });
                }
            }
        }
        Ok(())
    }

    /// Degree used to weight an edge: the larger of the adjacent element degrees.
    pub fn edge_degree(&self, edge: &Edge) -> usize {
        let l = self.degrees[edge.left];
        edge.right.map_or(l, |r| l.max(self.degrees[r]))
    }

    /// Degree carried by an edge's shared trace (minimum rule).
    pub fn conforming_edge_degree(&self, edge: &Edge) -> usize {
        let l = self.degrees[edge.left];
        edge.right.map_or(l, |r| l.min(self.degrees[r]))
    }
}
