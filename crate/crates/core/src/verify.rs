//! Reference solutions, cross-mesh error norms, convergence studies and the
//! manufactured-solution check of the forward solver.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assembly::{assemble_boundary_load, assemble_load, assemble_robin_stiffness, AssemblyError};
use crate::element::default_exactness;
use crate::estimator::{estimate, EstimatorBreakdown, EstimatorError};
use crate::export::fmt_sci;
use crate::linsolve::{SpdSolver, DEFAULT_TOL};
use crate::mesh::{build_uniform_quad_mesh, build_uniform_tri_mesh, DegreeVector, Mesh, MeshError, Point2, TriangleSplit};
use crate::optimizer::{DiscreteProblem, IterationLog, OptimizerConfig, OptimizerError, Triple};
use crate::problem::ProblemData;
use crate::space::{build_control_space, build_state_space, grad_to_physical, tabulate, Field, SpaceError};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("point location failed: {0}")]
    Locate(#[from] MeshError),
    #[error("{0}")]
    Invalid(String),
    #[error("reference cache: {0}")]
    Cache(String),
}

/// Structured mesh of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeshSpec {
    Quad { n: usize },
    Tri { n: usize, split: TriangleSplit },
}

impl MeshSpec {
    /// Crisscross triangulation with `elements = 4n²` triangles.
    pub fn crisscross_with_elements(elements: usize) -> Option<Self> {
        let n = ((elements / 4) as f64).sqrt().round() as usize;
        (n >= 1 && 4 * n * n == elements).then_some(MeshSpec::Tri { n, split: TriangleSplit::Crisscross })
    }

    pub fn n(&self) -> usize {
        match *self {
            MeshSpec::Quad { n } | MeshSpec::Tri { n, .. } => n,
        }
    }

    pub fn num_elements(&self) -> usize {
        match *self {
            MeshSpec::Quad { n } => n * n,
            MeshSpec::Tri { n, split: TriangleSplit::Diagonal } => 2 * n * n,
            MeshSpec::Tri { n, split: TriangleSplit::Crisscross } => 4 * n * n,
        }
    }

    pub fn kind_label(&self) -> &'static str {
        match self {
            MeshSpec::Quad { .. } => "quad",
            MeshSpec::Tri { split: TriangleSplit::Diagonal, .. } => "tri-diagonal",
            MeshSpec::Tri { split: TriangleSplit::Crisscross, .. } => "tri-crisscross",
        }
    }

    pub fn with_n(&self, n: usize) -> Self {
        match *self {
            MeshSpec::Quad { .. } => MeshSpec::Quad { n },
            MeshSpec::Tri { split, .. } => MeshSpec::Tri { n, split },
        }
    }

    /// Parses `quad`, `tri-diagonal` or `tri-crisscross` with resolution `n`.
    pub fn from_kind(kind: &str, n: usize) -> Result<Self, VerifyError> {
        if n == 0 {
            return Err(VerifyError::Invalid("mesh resolution n must be >= 1".into()));
        }
        match kind {
            "quad" => Ok(MeshSpec::Quad { n }),
            "tri-diagonal" => Ok(MeshSpec::Tri { n, split: TriangleSplit::Diagonal }),
            "tri-crisscross" | "tri" => Ok(MeshSpec::Tri { n, split: TriangleSplit::Crisscross }),
            other => Err(VerifyError::Invalid(format!(
                "unknown mesh kind '{other}' (expected quad, tri-diagonal or tri-crisscross)"
            ))),
        }
    }

    pub fn build(&self) -> Mesh {
        match *self {
            MeshSpec::Quad { n } => build_uniform_quad_mesh(n),
            MeshSpec::Tri { n, split } => build_uniform_tri_mesh(n, split),
        }
    }
}

impl fmt::Display for MeshSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind_label(), self.n())
    }
}

impl FromStr for MeshSpec {
    type Err = VerifyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, n) = s
            .split_once(':')
            .ok_or_else(|| VerifyError::Invalid(format!("mesh spec '{s}' must look like kind:n")))?;
        let n = n
            .trim()
            .parse()
            .map_err(|_| VerifyError::Invalid(format!("bad mesh resolution in '{s}'")))?;
        MeshSpec::from_kind(kind.trim(), n)
    }
}

/// Solves the discrete problem on `mesh` with uniform degree `p`.
pub fn solve_on(
    data: &ProblemData,
    mesh: MeshSpec,
    p: usize,
    config: &OptimizerConfig,
) -> Result<(DiscreteProblem, Triple, IterationLog), VerifyError> {
    if p == 0 {
        return Err(VerifyError::Invalid("degree must be >= 1".into()));
    }
    let mesh = Arc::new(mesh.build());
    let deg = DegreeVector::uniform(mesh.num_elements(), p);
    let state = build_state_space(mesh.clone(), deg.clone())?;
    let control = build_control_space(mesh, deg)?;
    let dp = DiscreteProblem::new(state, control, data.clone(), config.solver_tol)?;
    let (t, log) = dp.run(config)?;
    Ok((dp, t, log))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceConfig {
    pub n_ref: usize,
    pub p_ref: usize,
    pub tol_ref: f64,
    pub max_iter: usize,
    /// Directory for the on-disk cache; falls back to `REFERENCE_CACHE_DIR`.
    pub cache_dir: Option<PathBuf>,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            n_ref: 50,
            p_ref: 3,
            tol_ref: 1e-12,
            max_iter: 2000,
            cache_dir: None,
        }
    }
}

impl ReferenceConfig {
    pub fn validate(&self) -> Result<(), VerifyError> {
        if self.n_ref == 0 || self.p_ref == 0 {
            return Err(VerifyError::Invalid("reference n and p must be >= 1".into()));
        }
        if !(self.tol_ref > 0.0) {
            return Err(VerifyError::Invalid(format!("reference tolerance must be positive, got {}", self.tol_ref)));
        }
        Ok(())
    }

    pub fn mesh(&self) -> MeshSpec {
        MeshSpec::Quad { n: self.n_ref }
    }

    fn cache_dir(&self) -> Option<PathBuf> {
        self.cache_dir
            .clone()
            .or_else(|| std::env::var_os("REFERENCE_CACHE_DIR").map(PathBuf::from))
    }
}

#[derive(Debug, Clone)]
pub struct Reference {
    pub triple: Triple,
    pub iterations: usize,
    pub final_increment: f64,
    pub j: f64,
    pub key: String,
}

/// Hex SHA-256 of the canonical description of a reference computation.
pub fn reference_key(data: &ProblemData, cfg: &ReferenceConfig) -> String {
    let text = format!(
        "{};n_ref={};p_ref={};tol_ref={:?};max_iter={}",
        data.canonical_key(),
        cfg.n_ref,
        cfg.p_ref,
        cfg.tol_ref,
        cfg.max_iter
    );
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Serialize, Deserialize)]
struct CachedReference {
    key: String,
    iterations: usize,
    final_increment: f64,
    j: f64,
    u: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

type Slot = Arc<Mutex<Option<Arc<Reference>>>>;

fn memory_cache() -> &'static Mutex<HashMap<String, Slot>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Slot>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Runs the optimizer on the `n_ref × n_ref` quad mesh with degree `p_ref`.
/// Results are cached in memory and, if a cache directory is configured, on
/// disk, keyed by a hash of the problem data and configuration.
pub fn compute_reference(data: &ProblemData, cfg: &ReferenceConfig) -> Result<Arc<Reference>, VerifyError> {
    cfg.validate()?;
    let key = reference_key(data, cfg);
    let slot = memory_cache().lock().unwrap().entry(key.clone()).or_default().clone();
    // one writer per key; concurrent callers wait for the first result
    let mut guard = slot.lock().unwrap();
    if let Some(r) = guard.as_ref() {
        return Ok(r.clone());
    }
    let mesh = Arc::new(cfg.mesh().build());
    let deg = DegreeVector::uniform(mesh.num_elements(), cfg.p_ref);
    let state = build_state_space(mesh.clone(), deg.clone())?;
    let control = build_control_space(mesh, deg)?;

    let path = cfg.cache_dir().map(|d| d.join(format!("reference-{key}.json")));
    if let Some(cached) = path.as_ref().and_then(|p| std::fs::read(p).ok()) {
        let c: CachedReference = serde_json::from_slice(&cached).map_err(|e| VerifyError::Cache(e.to_string()))?;
        if c.key == key {
            let r = Arc::new(Reference {
                triple: Triple {
                    u: Field::from_coeffs(control, c.u)?,
                    y: Field::from_coeffs(state.clone(), c.y)?,
                    z: Field::from_coeffs(state, c.z)?,
                },
                iterations: c.iterations,
                final_increment: c.final_increment,
                j: c.j,
                key,
            });
            *guard = Some(r.clone());
            return Ok(r);
        }
    }

    let dp = DiscreteProblem::new(state, control, data.clone(), DEFAULT_TOL)?;
    let opt = OptimizerConfig {
        tol: cfg.tol_ref,
        max_iter: cfg.max_iter,
        ..Default::default()
    };
    let (triple, log) = dp.run(&opt)?;
    let j = log.records.last().map_or(log.initial_j, |r| r.j);
    let r = Arc::new(Reference {
        triple,
        iterations: log.iterations(),
        final_increment: log.last_increment(),
        j,
        key: key.clone(),
    });
    if let Some(path) = path {
        let c = CachedReference {
            key,
            iterations: r.iterations,
            final_increment: r.final_increment,
            j,
            u: r.triple.u.coeffs().to_vec(),
            y: r.triple.y.coeffs().to_vec(),
            z: r.triple.z.coeffs().to_vec(),
        };
        let write = || -> std::io::Result<()> {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, serde_json::to_vec(&c).expect("numeric data"))?;
            std::fs::rename(tmp, &path)
        };
        write().map_err(|e| VerifyError::Cache(e.to_string()))?;
    }
    *guard = Some(r.clone());
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorReport {
    pub u_l2: f64,
    pub y_l2: f64,
    pub y_h1: f64,
    pub z_l2: f64,
    pub z_h1: f64,
}

impl ErrorReport {
    pub fn as_array(&self) -> [f64; 5] {
        [self.u_l2, self.y_l2, self.y_h1, self.z_l2, self.z_h1]
    }

    /// `‖u−u_hp‖² + ‖y−y_hp‖²_{H¹} + ‖z−z_hp‖²_{H¹}`.
    pub fn total_sq(&self) -> f64 {
        self.u_l2 * self.u_l2 + self.y_h1 * self.y_h1 + self.z_h1 * self.z_h1
    }
}

/// Errors of `coarse` against `reference`, integrated with the reference
/// mesh's quadrature; coarse fields are evaluated by point location.
pub fn error_norms(coarse: &Triple, reference: &Triple) -> Result<ErrorReport, VerifyError> {
    let rspace = reference.y.space();
    let rmesh = rspace.mesh();
    let cmesh = coarse.y.space().mesh();
    let parts: Vec<Result<[f64; 5], VerifyError>> = (0..rmesh.num_elements())
        .into_par_iter()
        .map(|el| {
            let element = &rmesh.elements[el];
            let p = rspace.degree(el);
            let pu = reference.u.space().degree(el);
            let ex = default_exactness(p.max(pu));
            let ty = tabulate(element.kind, p, ex);
            let tu = tabulate(element.kind, pu, ex);
            let det = element.map.det().abs();
            let inv = element.inv_jacobian();
            let (yl, zl, ul) = (
                reference.y.local_coeffs(el),
                reference.z.local_coeffs(el),
                reference.u.local_coeffs(el),
            );
            let mut acc = [0.0; 5];
            for q in 0..ty.rule.len() {
                let w = ty.rule.weights[q] * det;
                let x = element.map.apply(ty.rule.points[q]);
                let (cel, xi) = cmesh.locate(x)?;
                let val = |c: &[f64], v: &[f64]| -> f64 { c.iter().zip(v).map(|(a, b)| a * b).sum() };
                let grad = |c: &[f64]| -> [f64; 2] {
                    let mut g = [0.0; 2];
                    for (ci, gi) in c.iter().zip(&ty.at[q].grads) {
                        g[0] += ci * gi[0];
                        g[1] += ci * gi[1];
                    }
                    grad_to_physical(inv, g)
                };
                let ru = val(&ul, &tu.at[q].values);
                let (ry, rz) = (val(&yl, &ty.at[q].values), val(&zl, &ty.at[q].values));
                let (gy, gz) = (grad(&yl), grad(&zl));
                let cu = coarse.u.eval_in_element(cel, xi).value;
                let cy = coarse.y.eval_in_element(cel, xi);
                let cz = coarse.z.eval_in_element(cel, xi);
                let sq = |a: f64| a * a;
                acc[0] += w * sq(ru - cu);
                acc[1] += w * sq(ry - cy.value);
                acc[2] += w * (sq(gy[0] - cy.grad[0]) + sq(gy[1] - cy.grad[1]));
                acc[3] += w * sq(rz - cz.value);
                acc[4] += w * (sq(gz[0] - cz.grad[0]) + sq(gz[1] - cz.grad[1]));
            }
            Ok(acc)
        })
        .collect();
    let mut s = [0.0; 5];
    for part in parts {
        for (a, b) in s.iter_mut().zip(part?) {
            *a += b;
        }
    }
    Ok(ErrorReport {
        u_l2: s[0].sqrt(),
        y_l2: s[1].sqrt(),
        y_h1: (s[1] + s[2]).sqrt(),
        z_l2: s[3].sqrt(),
        z_h1: (s[3] + s[4]).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub mesh: MeshSpec,
    pub p: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub mesh: String,
    pub elements: usize,
    pub h: f64,
    pub p: usize,
    pub iterations: usize,
    pub errors: ErrorReport,
    pub estimator: EstimatorBreakdown,
    /// `(‖u−u_hp‖² + ‖y−y_hp‖²_{H¹} + ‖z−z_hp‖²_{H¹}) / η²`.
    pub reliability: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Rate {
    pub from: usize,
    pub to: usize,
    /// `h` when both rows share `p`, `p` when both share the mesh.
    pub kind: &'static str,
    /// Observed `log(e₁/e₂)/log(h₁/h₂)` for h-rates, `e₁/e₂` for p-comparisons.
    pub values: [f64; 5],
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<StudyRow>,
}

pub const ERROR_COLUMNS: &str = "u_L2,y_L2,y_H1,z_L2,z_H1";

impl ConvergenceTable {
    /// Rates between consecutive rows sharing `p` (h-rates) or sharing the
    /// mesh (p-comparisons).
    pub fn rates(&self) -> Vec<Rate> {
        let mut out = Vec::new();
        for (i, a) in self.rows.iter().enumerate() {
            let Some((j, b)) = self.rows.iter().enumerate().skip(i + 1).find(|(_, b)| b.p == a.p || b.mesh == a.mesh) else {
                continue;
            };
            let (ea, eb) = (a.errors.as_array(), b.errors.as_array());
            if b.p == a.p && b.mesh != a.mesh {
                let lh = (a.h / b.h).ln();
                out.push(Rate {
                    from: i,
                    to: j,
                    kind: "h",
                    values: std::array::from_fn(|k| (ea[k] / eb[k]).ln() / lh),
                });
            } else if b.mesh == a.mesh && b.p != a.p {
                out.push(Rate {
                    from: i,
                    to: j,
                    kind: "p",
                    values: std::array::from_fn(|k| ea[k] / eb[k]),
                });
            }
        }
        out
    }

    /// Full study table: mesh, N, p, the five error norms, η² and the
    /// reliability ratio.
    pub fn to_csv(&self) -> String {
        let mut s = format!("mesh,N,p,{ERROR_COLUMNS},eta_sq,reliability\n");
        for r in &self.rows {
            let errs: Vec<String> = r.errors.as_array().iter().map(|&v| fmt_sci(v)).collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.mesh,
                r.elements,
                r.p,
                errs.join(","),
                fmt_sci(r.estimator.total_sq),
                fmt_sci(r.reliability)
            );
        }
        s
    }

    /// Rows in paper table layout: a leading key column (`p` or `N`)
    /// followed by the five error norms.
    pub fn to_table_csv(&self, key: TableKey) -> String {
        let mut s = format!("{},{ERROR_COLUMNS}\n", key.header());
        for r in &self.rows {
            let errs: Vec<String> = r.errors.as_array().iter().map(|&v| fmt_sci(v)).collect();
            let k = match key {
                TableKey::Degree => r.p,
                TableKey::Elements => r.elements,
            };
            let _ = writeln!(s, "{k},{}", errs.join(","));
        }
        s
    }

    pub fn reliability_json(&self) -> serde_json::Value {
        let ratios: Vec<f64> = self.rows.iter().map(|r| r.reliability).collect();
        let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        serde_json::json!({
            "runs": self.rows.iter().map(|r| serde_json::json!({
                "mesh": r.mesh,
                "N": r.elements,
                "p": r.p,
                "error_sq": r.errors.total_sq(),
                "eta_sq": r.estimator.total_sq,
                "ratio": r.reliability,
            })).collect::<Vec<_>>(),
            "empirical_constant": max,
            "spread": max / min,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKey {
    Degree,
    Elements,
}

impl TableKey {
    fn header(self) -> &'static str {
        match self {
            TableKey::Degree => "p",
            TableKey::Elements => "N",
        }
    }
}

/// Solves every run, measures errors against the reference and evaluates
/// the estimator. Runs execute in parallel; rows keep the input order.
pub fn convergence_study(
    data: &ProblemData,
    runs: &[RunSpec],
    reference: &ReferenceConfig,
    config: &OptimizerConfig,
) -> Result<ConvergenceTable, VerifyError> {
    if runs.len() < 2 {
        return Err(VerifyError::Invalid("a study needs at least two runs".into()));
    }
    for r in runs {
        if r.p == 0 {
            return Err(VerifyError::Invalid("degree must be >= 1".into()));
        }
        if r.mesh.n() * r.p >= reference.n_ref * reference.p_ref {
            return Err(VerifyError::Invalid(format!(
                "reference ({}x{}, p={}) is not finer than run {} p={}",
                reference.n_ref, reference.n_ref, reference.p_ref, r.mesh, r.p
            )));
        }
    }
    let reference = compute_reference(data, reference)?;
    let rows: Vec<Result<StudyRow, VerifyError>> = runs
        .par_iter()
        .map(|run| {
            let (_, t, log) = solve_on(data, run.mesh, run.p, config)?;
            let errors = error_norms(&t, &reference.triple)?;
            let est = estimate(&t, data)?;
            let mesh = t.y.space().mesh();
            let h = mesh.elements.iter().map(|e| e.diameter).fold(0.0, f64::max);
            Ok(StudyRow {
                mesh: run.mesh.to_string(),
                elements: mesh.num_elements(),
                h,
                p: run.p,
                iterations: log.iterations(),
                reliability: errors.total_sq() / est.total_sq,
                errors,
                estimator: est,
            })
        })
        .collect();
    Ok(ConvergenceTable {
        rows: rows.into_iter().collect::<Result<_, _>>()?,
    })
}

/// A closed-form solution of `−Δy = f`, `∂ₙy + αy = g` on the unit square.
#[derive(Clone, Copy)]
pub struct Manufactured {
    pub y: fn(Point2) -> f64,
    pub grad: fn(Point2) -> [f64; 2],
    /// `−Δy`.
    pub f: fn(Point2) -> f64,
}

impl Manufactured {
    /// `y* = sin(πx₁)sin(πx₂) + x₁x₂`.
    pub fn smooth() -> Self {
        use std::f64::consts::PI;
        Manufactured {
            y: |p| (PI * p.x1).sin() * (PI * p.x2).sin() + p.x1 * p.x2,
            grad: |p| {
                [
                    PI * (PI * p.x1).cos() * (PI * p.x2).sin() + p.x2,
                    PI * (PI * p.x1).sin() * (PI * p.x2).cos() + p.x1,
                ]
            },
            f: |p| 2.0 * PI * PI * (PI * p.x1).sin() * (PI * p.x2).sin(),
        }
    }

    /// `y* = x₁x₂`, contained in every discrete space.
    pub fn bilinear() -> Self {
        Manufactured {
            y: |p| p.x1 * p.x2,
            grad: |p| [p.x2, p.x1],
            f: |_| 0.0,
        }
    }

    /// Robin datum `g = ∂ₙy + αy` at a boundary point.
    pub fn robin_data(&self, p: Point2, alpha: f64) -> f64 {
        let g = (self.grad)(p);
        let tol = 1e-12;
        // corners are measure zero on Γ; pick any adjacent side
        let n = if p.x1 < tol {
            [-1.0, 0.0]
        } else if p.x1 > 1.0 - tol {
            [1.0, 0.0]
        } else if p.x2 < tol {
            [0.0, -1.0]
        } else {
            [0.0, 1.0]
        };
        g[0] * n[0] + g[1] * n[1] + alpha * (self.y)(p)
    }
}

/// Solves the forward problem with load `f` and Robin data `g`, returning
/// `(L², H¹)` errors against the closed form.
pub fn manufactured_errors(m: &Manufactured, mesh: MeshSpec, p: usize, alpha: f64) -> Result<(f64, f64), VerifyError> {
    let mesh = Arc::new(mesh.build());
    let space = build_state_space(mesh.clone(), DegreeVector::uniform(mesh.num_elements(), p))?;
    let data = ProblemData { alpha, ..ProblemData::unit() };
    let a = assemble_robin_stiffness(&space, &data)?;
    let mut b = assemble_load(&space, m.f);
    for (bi, gi) in b.iter_mut().zip(assemble_boundary_load(&space, |x| m.robin_data(x, alpha))) {
        *bi += gi;
    }
    let (x, _) = SpdSolver::new(a, DEFAULT_TOL)
        .and_then(|s| s.solve(&b))
        .map_err(OptimizerError::from)?;
    let y = Field::from_coeffs(space.clone(), x)?;
    let parts: Vec<(f64, f64)> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|el| {
            let element = &mesh.elements[el];
            let tab = tabulate(element.kind, p, default_exactness(p) + 4);
            let det = element.map.det().abs();
            let c = y.local_coeffs(el);
            let (mut l2, mut semi) = (0.0, 0.0);
            for q in 0..tab.rule.len() {
                let w = tab.rule.weights[q] * det;
                let x = element.map.apply(tab.rule.points[q]);
                let v = crate::space::combine(element, &c, &tab.at[q].values, &tab.at[q].grads, &tab.at[q].hessians);
                let g = (m.grad)(x);
                l2 += w * (v.value - (m.y)(x)).powi(2);
                semi += w * ((v.grad[0] - g[0]).powi(2) + (v.grad[1] - g[1]).powi(2));
            }
            (l2, semi)
        })
        .collect();
    let (l2, semi) = parts.iter().fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    Ok((l2.sqrt(), (l2 + semi).sqrt()))
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub p: usize,
    pub levels: Vec<usize>,
    pub h: Vec<f64>,
    pub l2: Vec<f64>,
    pub h1: Vec<f64>,
    /// Least-squares slope of `log e` against `log h`.
    pub l2_slope: f64,
    pub h1_slope: f64,
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Convergence of the forward solver for `y* = sin(πx₁)sin(πx₂) + x₁x₂`.
pub fn manufactured_check(p: usize, levels: &[usize]) -> Result<RateReport, VerifyError> {
    manufactured_check_on(p, levels, MeshSpec::Quad { n: 1 }, &Manufactured::smooth())
}

/// As [`manufactured_check`] for a chosen mesh family (its `n` is replaced
/// by each level) and solution.
pub fn manufactured_check_on(p: usize, levels: &[usize], family: MeshSpec, m: &Manufactured) -> Result<RateReport, VerifyError> {
    if p == 0 {
        return Err(VerifyError::Invalid("degree must be >= 1".into()));
    }
    if levels.len() < 3 {
        return Err(VerifyError::Invalid("rate estimation needs at least three levels".into()));
    }
    let mut report = RateReport {
        p,
        levels: levels.to_vec(),
        h: Vec::new(),
        l2: Vec::new(),
        h1: Vec::new(),
        l2_slope: 0.0,
        h1_slope: 0.0,
    };
    for &n in levels {
        let (l2, h1) = manufactured_errors(m, family.with_n(n), p, 1.0)?;
        report.h.push(1.0 / n as f64);
        report.l2.push(l2);
        report.h1.push(h1);
    }
    let lh: Vec<f64> = report.h.iter().map(|h| h.ln()).collect();
    report.l2_slope = ls_slope(&lh, &report.l2.iter().map(|e| e.ln()).collect::<Vec<_>>());
    report.h1_slope = ls_slope(&lh, &report.h1.iter().map(|e| e.ln()).collect::<Vec<_>>());
    Ok(report)
}
