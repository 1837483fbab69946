//! Nodal Lagrange bases of `P_k` (triangle) and `Q_k` (square) on equispaced nodes.
//!
//! Local node order: the element vertices, then the interior nodes of each
//! edge in edge direction (edge `k` runs from vertex `k` to vertex `k+1`), then
//! the element-interior nodes. With this layout the restriction of a basis
//! function to an edge is fixed by the `k+1` nodes on that edge.

use thiserror::Error;

use crate::mesh::ElementKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ElementError {
    #[error("degree must be >= 1, got {0}")]
    DegreeTooLow(usize),
    #[error("edge index {index} is invalid for a {kind:?} (has {count} edges)")]
    InvalidEdge {
        kind: ElementKind,
        index: usize,
        count: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeIndex {
    /// Tensor indices `(i, j)` of the node `(i/k, j/k)`.
    Tensor(usize, usize),
    /// Barycentric indices `(a, b, c)`, `a + b + c = k`, of the node `(b/k, c/k)`.
    Bary(usize, usize, usize),
}

/// Values, reference gradients and reference Hessians `[xx, xy, yy]` of every
/// shape function at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisValues {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
    pub hessians: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeBasis {
    kind: ElementKind,
    degree: usize,
    nodes: Vec<[f64; 2]>,
    index: Vec<NodeIndex>,
}

/// Dimension of `P_k` or `Q_k`.
pub fn basis_count(kind: ElementKind, k: usize) -> usize {
    match kind {
        ElementKind::Triangle => (k + 1) * (k + 2) / 2,
        ElementKind::Quad => (k + 1) * (k + 1),
    }
}

/// Number of element-interior nodes.
pub fn interior_count(kind: ElementKind, k: usize) -> usize {
    match kind {
        ElementKind::Triangle => k.saturating_sub(1) * k.saturating_sub(2) / 2,
        ElementKind::Quad => k.saturating_sub(1).pow(2),
    }
}

impl ShapeBasis {
    pub fn new(kind: ElementKind, degree: usize) -> Result<Self, ElementError> {
        if degree < 1 {
            return Err(ElementError::DegreeTooLow(degree));
        }
        let k = degree;
        let mut index = Vec::with_capacity(basis_count(kind, k));
        match kind {
            ElementKind::Quad => {
                index.extend([(0, 0), (k, 0), (k, k), (0, k)].map(|(i, j)| NodeIndex::Tensor(i, j)));
                for m in 1..k {
                    index.push(NodeIndex::Tensor(m, 0));
                }
                for m in 1..k {
                    index.push(NodeIndex::Tensor(k, m));
                }
                for m in 1..k {
                    index.push(NodeIndex::Tensor(k - m, k));
                }
                for m in 1..k {
                    index.push(NodeIndex::Tensor(0, k - m));
                }
                for j in 1..k {
                    for i in 1..k {
                        index.push(NodeIndex::Tensor(i, j));
                    }
                }
            }
            ElementKind::Triangle => {
                index.extend([(k, 0, 0), (0, k, 0), (0, 0, k)].map(|(a, b, c)| NodeIndex::Bary(a, b, c)));
                for m in 1..k {
                    index.push(NodeIndex::Bary(k - m, m, 0));
                }
                for m in 1..k {
                    index.push(NodeIndex::Bary(0, k - m, m));
                }
                for m in 1..k {
                    index.push(NodeIndex::Bary(m, 0, k - m));
                }
                for c in 1..k {
                    for b in 1..k - c {
                        index.push(NodeIndex::Bary(k - b - c, b, c));
                    }
                }
            }
        }
        debug_assert_eq!(index.len(), basis_count(kind, k));
        let kf = k as f64;
        let nodes = index
            .iter()
            .map(|ix| match *ix {
                NodeIndex::Tensor(i, j) => [i as f64 / kf, j as f64 / kf],
                NodeIndex::Bary(_, b, c) => [b as f64 / kf, c as f64 / kf],
            })
            .collect();
        Ok(Self {
            kind,
            degree,
            nodes,
            index,
        })
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn count(&self) -> usize {
        self.index.len()
    }

    /// Reference coordinates of the nodes, in local order.
    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn num_edges(&self) -> usize {
        self.kind.vertex_count()
    }

    /// Local nodes on edge `edge`, ordered from its start vertex to its end vertex.
    pub fn edge_nodes(&self, edge: usize) -> Result<Vec<usize>, ElementError> {
        let nv = self.check_edge(edge)?;
        let k = self.degree;
        let mut out = Vec::with_capacity(k + 1);
        out.push(edge);
        out.extend((0..k - 1).map(|m| nv + edge * (k - 1) + m));
        out.push((edge + 1) % nv);
        Ok(out)
    }

    fn check_edge(&self, edge: usize) -> Result<usize, ElementError> {
        let nv = self.kind.vertex_count();
        if edge >= nv {
            return Err(ElementError::InvalidEdge {
                kind: self.kind,
                index: edge,
                count: nv,
            });
        }
        Ok(nv)
    }

    /// Reference point at parameter `t ∈ [0, 1]` along local edge `edge`.
    pub fn edge_point(&self, edge: usize, t: f64) -> Result<[f64; 2], ElementError> {
        let nv = self.check_edge(edge)?;
        let v = self.kind.reference_vertices();
        let (a, b) = (v[edge], v[(edge + 1) % nv]);
        Ok([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])])
    }

    pub fn eval(&self, xi: [f64; 2]) -> BasisValues {
        let n = self.count();
        let mut out = BasisValues {
            values: Vec::with_capacity(n),
            grads: Vec::with_capacity(n),
            hessians: Vec::with_capacity(n),
        };
        let k = self.degree;
        match self.kind {
            ElementKind::Quad => {
                let lx: Vec<_> = (0..=k).map(|i| lagrange_1d(k, i, xi[0])).collect();
                let ly: Vec<_> = (0..=k).map(|j| lagrange_1d(k, j, xi[1])).collect();
                for ix in &self.index {
                    let NodeIndex::Tensor(i, j) = *ix else { unreachable!() };
                    let ([a, da, dda], [b, db, ddb]) = (lx[i], ly[j]);
                    out.values.push(a * b);
                    out.grads.push([da * b, a * db]);
                    out.hessians.push([dda * b, da * db, a * ddb]);
                }
            }
            ElementKind::Triangle => {
                let l = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
                let tab: Vec<[[f64; 3]; 3]> = (0..=k)
                    .map(|m| [0, 1, 2].map(|c| bary_factor(k, m, l[c])))
                    .collect();
                for ix in &self.index {
                    let NodeIndex::Bary(a, b, c) = *ix else { unreachable!() };
                    let [a0, a1, a2] = tab[a][0];
                    let [b0, b1, b2] = tab[b][1];
                    let [c0, c1, c2] = tab[c][2];
                    // ∂λ0 = (-1, -1), ∂λ1 = (1, 0), ∂λ2 = (0, 1)
                    out.values.push(a0 * b0 * c0);
                    out.grads.push([-a1 * b0 * c0 + a0 * b1 * c0, -a1 * b0 * c0 + a0 * b0 * c1]);
                    out.hessians.push([
                        a2 * b0 * c0 - 2.0 * a1 * b1 * c0 + a0 * b2 * c0,
                        a2 * b0 * c0 - a1 * b0 * c1 - a1 * b1 * c0 + a0 * b1 * c1,
                        a2 * b0 * c0 - 2.0 * a1 * b0 * c1 + a0 * b0 * c2,
                    ]);
                }
            }
        }
        out
    }

    /// Shape values and reference gradients at points `ts` along edge `edge`.
    pub fn edge_trace(&self, edge: usize, ts: &[f64]) -> Result<Vec<BasisValues>, ElementError> {
        ts.iter()
            .map(|&t| Ok(self.eval(self.edge_point(edge, t)?)))
            .collect()
    }
}

/// Value, first and second derivative of the 1D Lagrange polynomial of node
/// `i/k` on the equispaced nodes `0, 1/k, …, 1`.
pub fn lagrange_1d(k: usize, i: usize, s: f64) -> [f64; 3] {
    let (mut v, mut d, mut dd) = (1.0, 0.0, 0.0);
    let kf = k as f64;
    for m in 0..=k {
        if m == i {
            continue;
        }
        let denom = i as f64 - m as f64;
        let f = (kf * s - m as f64) / denom;
        let df = kf / denom;
        dd = dd * f + 2.0 * d * df;
        d = d * f + v * df;
        v *= f;
    }
    [v, d, dd]
}

/// `Π_{m<a} (k s - m)/(m + 1)` with its first two derivatives.
fn bary_factor(k: usize, a: usize, s: f64) -> [f64; 3] {
    let (mut v, mut d, mut dd) = (1.0, 0.0, 0.0);
    let kf = k as f64;
    for m in 0..a {
        let denom = (m + 1) as f64;
        let f = (kf * s - m as f64) / denom;
        let df = kf / denom;
        dd = dd * f + 2.0 * d * df;
        d = d * f + v * df;
        v *= f;
    }
    [v, d, dd]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::quadrature::gauss_legendre_01;

    fn sample_points(kind: ElementKind) -> Vec<[f64; 2]> {
        let mut pts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.2, 0.3], [0.1, 0.7], [0.45, 0.45]];
        if kind == ElementKind::Quad {
            pts.extend([[1.0, 1.0], [0.9, 0.8], [0.33, 0.91]]);
        }
        pts
    }

    fn kinds() -> [ElementKind; 2] {
        [ElementKind::Triangle, ElementKind::Quad]
    }

    #[test]
    fn counts() {
        for k in 1..=6 {
            assert_eq!(ShapeBasis::new(ElementKind::Triangle, k).unwrap().count(), (k + 1) * (k + 2) / 2);
            assert_eq!(ShapeBasis::new(ElementKind::Quad, k).unwrap().count(), (k + 1) * (k + 1));
        }
        assert_eq!(ShapeBasis::new(ElementKind::Quad, 0), Err(ElementError::DegreeTooLow(0)));
    }

    #[test]
    fn p1_partition_and_constant_gradients() {
        let b = ShapeBasis::new(ElementKind::Triangle, 1).unwrap();
        let r0 = b.eval([0.1, 0.2]);
        for x in sample_points(ElementKind::Triangle) {
            let r = b.eval(x);
            assert!((r.values.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert_eq!(r.grads, r0.grads);
            assert!(r.hessians.iter().flatten().all(|&h| h == 0.0));
        }
    }

    #[test]
    fn q1_nodal_at_origin() {
        let b = ShapeBasis::new(ElementKind::Quad, 1).unwrap();
        assert_eq!(b.eval([0.0, 0.0]).values, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn q2_reproduces_second_derivative_of_x2y2() {
        let b = ShapeBasis::new(ElementKind::Quad, 2).unwrap();
        assert_eq!(b.count(), 9);
        // x²y² ∈ Q2: interpolate at the nodes, differentiate via the basis
        let coeffs: Vec<f64> = b.nodes().iter().map(|n| n[0] * n[0] * n[1] * n[1]).collect();
        let r = b.eval([1.0, 1.0]);
        let dxx: f64 = coeffs.iter().zip(&r.hessians).map(|(c, h)| c * h[0]).sum();
        assert!((dxx - 2.0).abs() < 1e-12, "{dxx}");
    }

    #[test]
    fn nodal_property() {
        for kind in kinds() {
            for k in 1..=5 {
                let b = ShapeBasis::new(kind, k).unwrap();
                for (i, &n) in b.nodes().iter().enumerate() {
                    let r = b.eval(n);
                    for (j, &v) in r.values.iter().enumerate() {
                        let expected = if i == j { 1.0 } else { 0.0 };
                        assert!((v - expected).abs() < 1e-12, "{kind:?} k={k} node {i} fn {j}: {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        for kind in kinds() {
            for k in 1..=6 {
                let b = ShapeBasis::new(kind, k).unwrap();
                for x in sample_points(kind) {
                    let r = b.eval(x);
                    assert!((r.values.iter().sum::<f64>() - 1.0).abs() < 1e-13);
                    let g = r.grads.iter().fold([0.0, 0.0], |a, g| [a[0] + g[0], a[1] + g[1]]);
                    assert!(g[0].abs() < 1e-10 && g[1].abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for kind in kinds() {
            for k in 1..=4 {
                let b = ShapeBasis::new(kind, k).unwrap();
                for x in [[0.2, 0.3], [0.15, 0.6], [0.4, 0.1]] {
                    let r = b.eval(x);
                    let px = b.eval([x[0] + h, x[1]]);
                    let mx = b.eval([x[0] - h, x[1]]);
                    let py = b.eval([x[0], x[1] + h]);
                    let my = b.eval([x[0], x[1] - h]);
                    for i in 0..b.count() {
                        let gx = (px.values[i] - mx.values[i]) / (2.0 * h);
                        let gy = (py.values[i] - my.values[i]) / (2.0 * h);
                        assert!((gx - r.grads[i][0]).abs() < 1e-6);
                        assert!((gy - r.grads[i][1]).abs() < 1e-6);
                        let hxx = (px.grads[i][0] - mx.grads[i][0]) / (2.0 * h);
                        let hxy = (py.grads[i][0] - my.grads[i][0]) / (2.0 * h);
                        let hyy = (py.grads[i][1] - my.grads[i][1]) / (2.0 * h);
                        assert!((hxx - r.hessians[i][0]).abs() < 1e-5);
                        assert!((hxy - r.hessians[i][1]).abs() < 1e-5);
                        assert!((hyy - r.hessians[i][2]).abs() < 1e-5);
                    }
                }
            }
        }
    }

    #[test]
    fn reproduces_the_polynomial_space() {
        // every monomial of the space is interpolated exactly
        for kind in kinds() {
            for k in 1..=4 {
                let b = ShapeBasis::new(kind, k).unwrap();
                for i in 0..=k as i32 {
                    for j in 0..=k as i32 {
                        if kind == ElementKind::Triangle && i + j > k as i32 {
                            continue;
                        }
                        let f = |p: [f64; 2]| p[0].powi(i) * p[1].powi(j);
                        let c: Vec<f64> = b.nodes().iter().map(|&n| f(n)).collect();
                        for x in sample_points(kind) {
                            let r = b.eval(x);
                            let v: f64 = c.iter().zip(&r.values).map(|(a, b)| a * b).sum();
                            assert!((v - f(x)).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn p1_bottom_edge_midpoint() {
        let b = ShapeBasis::new(ElementKind::Triangle, 1).unwrap();
        let tr = b.edge_trace(0, &[0.5]).unwrap();
        assert_eq!(tr[0].values, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn q1_right_edge_start() {
        let b = ShapeBasis::new(ElementKind::Quad, 1).unwrap();
        let tr = b.edge_trace(1, &[0.0]).unwrap();
        assert_eq!(tr[0].values, vec![0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(b.edge_trace(4, &[0.0]), Err(ElementError::InvalidEdge { index: 4, .. })));
    }

    #[test]
    fn q2_edge_mass_matches_simpson() {
        // ∫_0^1 φ_i along the bottom edge: Simpson weights 1/6, 2/3, 1/6 for the edge nodes
        let b = ShapeBasis::new(ElementKind::Quad, 2).unwrap();
        let (t, w) = gauss_legendre_01(3);
        let tr = b.edge_trace(0, &t).unwrap();
        let mut mass = vec![0.0; b.count()];
        for (q, vals) in tr.iter().enumerate() {
            for (i, v) in vals.values.iter().enumerate() {
                mass[i] += w[q] * v;
            }
        }
        let nodes = b.edge_nodes(0).unwrap();
        let simpson = [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0];
        for (m, &i) in nodes.iter().enumerate() {
            assert!((mass[i] - simpson[m]).abs() < 1e-14);
        }
        let on_edge: f64 = nodes.iter().map(|&i| mass[i]).sum();
        assert!((on_edge - 1.0).abs() < 1e-14);
        assert!((mass.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn edge_nodes_lie_on_their_edge_in_order() {
        for kind in kinds() {
            for k in 1..=4 {
                let b = ShapeBasis::new(kind, k).unwrap();
                for e in 0..b.num_edges() {
                    let nodes = b.edge_nodes(e).unwrap();
                    assert_eq!(nodes.len(), k + 1);
                    for (m, &i) in nodes.iter().enumerate() {
                        let expect = b.edge_point(e, m as f64 / k as f64).unwrap();
                        let got = b.nodes()[i];
                        assert!((expect[0] - got[0]).abs() < 1e-15 && (expect[1] - got[1]).abs() < 1e-15);
                    }
                }
            }
        }
    }
}
