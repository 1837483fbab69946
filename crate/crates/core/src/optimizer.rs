//! Projected fixed-point iteration for the discrete optimality system.
//!
//! Each sweep computes `u ← max{u_a, −(β/λ) z}` at the control nodes, then
//! solves the state and adjoint equations, and stops once the adjoint moves
//! by less than `tol` in `H¹`.

use std::fmt::Write as _;
use std::io;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::assembly::{
    assemble_adjoint_rhs, assemble_boundary_load, assemble_boundary_mass, assemble_domain_mass,
    assemble_h1_gram, assemble_load, assemble_robin_stiffness, evaluate_j, AssemblyError,
};
use crate::linsolve::{SolveError, SolveReport, SpdSolver, DEFAULT_TOL};
use crate::problem::ProblemData;
use crate::space::{FeSpace, Field, SpaceError, SpaceKind};
use crate::sparse::{SparseMatrix, TripletBuilder};

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("linear solve failed: {0}")]
    Solve(#[from] SolveError),
    #[error("invalid optimizer configuration: {0}")]
    Config(String),
    #[error("no convergence after {} iterations (last increment {:e})", .log.records.len(), .log.last_increment())]
    NotConverged { log: IterationLog },
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Threshold on `‖z^{n+1} − z^n‖_{H¹}`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation factor θ in `(0, 1]`.
    pub relaxation: f64,
    /// Starting control; `None` uses the constant `max{u_a, 0}`.
    pub initial_control: Option<Field>,
    /// Relative tolerance of the linear solves.
    pub solver_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
            relaxation: 1.0,
            initial_control: None,
            solver_tol: DEFAULT_TOL,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        if !(self.tol > 0.0) {
            return Err(OptimizerError::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(OptimizerError::Config("max_iter must be at least 1".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(OptimizerError::Config(format!(
                "relaxation must lie in (0, 1], got {}",
                self.relaxation
            )));
        }
        if !(self.solver_tol > 0.0) {
            return Err(OptimizerError::Config(format!(
                "solver tolerance must be positive, got {}",
                self.solver_tol
            )));
        }
        Ok(())
    }
}

/// Discrete control, state and adjoint.
#[derive(Debug, Clone)]
pub struct Triple {
    pub u: Field,
    pub y: Field,
    pub z: Field,
}

impl Triple {
    pub fn zeros(state: Arc<FeSpace>, control: Arc<FeSpace>) -> Self {
        Self {
            u: Field::zeros(control),
            y: Field::zeros(state.clone()),
            z: Field::zeros(state),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub z_increment_h1: f64,
    pub j: f64,
    pub active_nodes: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IterationLog {
    /// Objective at the initial control.
    pub initial_j: f64,
    pub records: Vec<IterationRecord>,
}

impl IterationLog {
    pub fn last_increment(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.z_increment_h1)
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,z_increment_H1,J,active_nodes\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.iter,
                crate::export::fmt_sci(r.z_increment_h1),
                crate::export::fmt_sci(r.j),
                r.active_nodes
            );
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

/// Matrices and factorization shared by every sweep on one discretization.
#[derive(Debug)]
pub struct DiscreteProblem {
    state: Arc<FeSpace>,
    control: Arc<FeSpace>,
    data: ProblemData,
    solver: SpdSolver,
    /// `(β u, v)` as a state × control matrix.
    coupling: SparseMatrix,
    /// `λ_Ω M + λ_Γ M_Γ`.
    observation: SparseMatrix,
    /// `λ_Ω ∫ y_Ω φ + λ_Γ ∫_Γ y_Γ φ`.
    observation_load: Vec<f64>,
    gram: SparseMatrix,
    /// State basis sampled at control nodes.
    sampling: SparseMatrix,
}

/// Matrix taking state coefficients to their values at the control nodes.
pub fn control_node_sampling(state: &FeSpace, control: &FeSpace) -> Result<SparseMatrix, SpaceError> {
    if !state.shares_mesh(control) {
        return Err(SpaceError::MeshMismatch);
    }
    let mut b = TripletBuilder::new(control.dim(), state.dim());
    for el in 0..state.mesh().num_elements() {
        let sb = state.basis(el);
        let smap = state.local_map(el);
        for (node, entries) in control.basis(el).nodes().iter().zip(control.local_map(el)) {
            let row = entries[0].0;
            let vals = sb.eval(*node).values;
            for (v, dofs) in vals.iter().zip(smap) {
                for &(g, c) in dofs {
                    b.push(row, g, c * v);
                }
            }
        }
    }
    Ok(b.build())
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

impl DiscreteProblem {
    pub fn new(state: Arc<FeSpace>, control: Arc<FeSpace>, data: ProblemData, solver_tol: f64) -> Result<Self, OptimizerError> {
        data.validate().map_err(AssemblyError::from)?;
        state.expect_kind(SpaceKind::State)?;
        control.expect_kind(SpaceKind::Control)?;
        if !state.shares_mesh(&control) {
            return Err(SpaceError::MeshMismatch.into());
        }
        let stiffness = assemble_robin_stiffness(&state, &data)?;
        let solver = SpdSolver::new(stiffness, solver_tol)?;
        let coupling = assemble_domain_mass(&state, &control, data.beta)?;
        let observation = assemble_domain_mass(&state, &state, data.lambda_omega)?
            .add_scaled(data.lambda_gamma, &assemble_boundary_mass(&state, 1.0)?);
        let mut observation_load = vec![0.0; state.dim()];
        if data.lambda_omega != 0.0 {
            let y = data.y_omega.clone();
            for (o, v) in observation_load.iter_mut().zip(assemble_load(&state, |p| y.eval(p))) {
                *o += data.lambda_omega * v;
            }
        }
        if data.lambda_gamma != 0.0 {
            let y = data.y_gamma.clone();
            for (o, v) in observation_load.iter_mut().zip(assemble_boundary_load(&state, |p| y.eval(p))) {
                *o += data.lambda_gamma * v;
            }
        }
        let gram = assemble_h1_gram(&state)?;
        let sampling = control_node_sampling(&state, &control)?;
        Ok(Self {
            state,
            control,
            data,
            solver,
            coupling,
            observation,
            observation_load,
            gram,
            sampling,
        })
    }

    pub fn state_space(&self) -> &Arc<FeSpace> {
        &self.state
    }

    pub fn control_space(&self) -> &Arc<FeSpace> {
        &self.control
    }

    pub fn data(&self) -> &ProblemData {
        &self.data
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        self.solver.matrix()
    }

    pub fn coupling(&self) -> &SparseMatrix {
        &self.coupling
    }

    /// `H¹` norm of a state-space coefficient vector.
    pub fn h1_norm(&self, v: &[f64]) -> f64 {
        self.gram.bilinear(v, v).max(0.0).sqrt()
    }

    pub fn solve_state_with_report(&self, u: &Field) -> Result<(Field, SolveReport), OptimizerError> {
        u.space().expect_kind(SpaceKind::Control)?;
        if u.space().dim() != self.control.dim() {
            return Err(SpaceError::MeshMismatch.into());
        }
        let rhs = self.coupling.mul_vec(u.coeffs());
        let (x, rep) = self.solver.solve(&rhs)?;
        Ok((Field::from_coeffs(self.state.clone(), x)?, rep))
    }

    /// `a(y, v) = (βu, v)` for all discrete `v`.
    pub fn solve_state(&self, u: &Field) -> Result<Field, OptimizerError> {
        Ok(self.solve_state_with_report(u)?.0)
    }

    pub fn adjoint_rhs(&self, y: &Field) -> Vec<f64> {
        sub(&self.observation.mul_vec(y.coeffs()), &self.observation_load)
    }

    /// `a(q, z) = (λ_Ω(y − y_Ω), q) + (λ_Γ(y − y_Γ), q)_Γ`.
    pub fn solve_adjoint(&self, y: &Field) -> Result<Field, OptimizerError> {
        if y.space().dim() != self.state.dim() {
            return Err(SpaceError::MeshMismatch.into());
        }
        let (x, _) = self.solver.solve(&self.adjoint_rhs(y))?;
        Ok(Field::from_coeffs(self.state.clone(), x)?)
    }

    /// Samples `max{u_a, −(β/λ) z}` at the control nodes; returns the field
    /// and the number of nodes where the bound is active.
    pub fn update_control(&self, z: &Field) -> (Field, usize) {
        let zn = self.sampling.mul_vec(z.coeffs());
        project_nodal(&zn, &self.data, self.control.clone())
    }

    pub fn objective(&self, u: &Field, y: &Field) -> Result<f64, OptimizerError> {
        Ok(evaluate_j(u, y, &self.data)?)
    }

    /// Runs the fixed-point iteration from the configured initial control.
    pub fn run(&self, config: &OptimizerConfig) -> Result<(Triple, IterationLog), OptimizerError> {
        config.validate()?;
        let mut u = match &config.initial_control {
            Some(u0) => {
                u0.space().expect_kind(SpaceKind::Control)?;
                Field::from_coeffs(self.control.clone(), u0.coeffs().to_vec())?
            }
            None => Field::constant(self.control.clone(), self.data.u_a.max(0.0)),
        };
        let mut y = self.solve_state(&u)?;
        let mut z = self.solve_adjoint(&y)?;
        let mut log = IterationLog {
            initial_j: self.objective(&u, &y)?,
            records: Vec::new(),
        };
        let theta = config.relaxation;
        for iter in 1..=config.max_iter {
            let (target, active) = self.update_control(&z);
            if theta == 1.0 {
                u = target;
            } else {
                let ua = self.data.u_a;
                for (c, t) in u.coeffs_mut().iter_mut().zip(target.coeffs()) {
                    *c = ((1.0 - theta) * *c + theta * t).max(ua);
                }
            }
            y = self.solve_state(&u)?;
            let z_next = self.solve_adjoint(&y)?;
            let inc = self.h1_norm(&sub(z_next.coeffs(), z.coeffs()));
            z = z_next;
            log.records.push(IterationRecord {
                iter,
                z_increment_h1: inc,
                j: self.objective(&u, &y)?,
                active_nodes: active,
            });
            if inc <= config.tol {
                return Ok((Triple { u, y, z }, log));
            }
        }
        Err(OptimizerError::NotConverged { log })
    }

    pub fn check_discrete_optimality(&self, t: &Triple) -> Result<OptimalityDiagnostics, OptimizerError> {
        let d = &self.data;
        let state_res = sub(
            &self.stiffness().mul_vec(t.y.coeffs()),
            &self.coupling.mul_vec(t.u.coeffs()),
        );
        let adj_res = sub(&self.stiffness().mul_vec(t.z.coeffs()), &self.adjoint_rhs(&t.y));

        // r_i = (βz + λu, χ_i)
        let mass_u = assemble_domain_mass(&self.control, &self.control, d.lambda)?;
        let unit_coupling = assemble_domain_mass(&self.state, &self.control, d.beta)?;
        let r: Vec<f64> = unit_coupling
            .transpose()
            .mul_vec(t.z.coeffs())
            .iter()
            .zip(mass_u.mul_vec(t.u.coeffs()))
            .map(|(a, b)| a + b)
            .collect();
        let uc = t.u.coeffs();
        let mut min_var = r.iter().sum::<f64>();
        // w = u_a everywhere
        min_var = min_var.min(r.iter().zip(uc).map(|(ri, ui)| ri * (d.u_a - ui)).sum());
        for (ri, &ui) in r.iter().zip(uc) {
            min_var = min_var.min(*ri);
            let room = (ui - d.u_a).min(1.0);
            if room > 0.0 {
                min_var = min_var.min(-room * ri);
            }
        }

        let zn = self.sampling.mul_vec(t.z.coeffs());
        let stationarity = uc
            .iter()
            .zip(&zn)
            .filter(|(&u, _)| u > d.u_a)
            .map(|(u, z)| (d.lambda * u + d.beta * z).abs())
            .fold(0.0, f64::max);
        let min_slack = uc.iter().map(|u| u - d.u_a).fold(f64::INFINITY, f64::min);
        Ok(OptimalityDiagnostics {
            state_residual: norm(&state_res),
            adjoint_residual: norm(&adj_res),
            min_variational: min_var,
            max_inactive_stationarity: stationarity,
            min_feasibility_slack: min_slack,
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn project_nodal(z_at_nodes: &[f64], data: &ProblemData, control: Arc<FeSpace>) -> (Field, usize) {
    let ratio = data.beta / data.lambda;
    let mut active = 0;
    let coeffs = z_at_nodes
        .iter()
        .map(|&z| {
            let c = -ratio * z;
            if c < data.u_a {
                active += 1;
                data.u_a
            } else {
                c
            }
        })
        .collect();
    (Field::from_coeffs(control, coeffs).expect("finite nodal values"), active)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalityDiagnostics {
    /// `‖A y − B u‖₂`.
    pub state_residual: f64,
    /// `‖A z − (adjoint right-hand side)‖₂`.
    pub adjoint_residual: f64,
    /// Smallest `(βz + λu, w − u)` over the probe directions.
    pub min_variational: f64,
    /// Largest `|λu + βz|` over control nodes where `u > u_a`.
    pub max_inactive_stationarity: f64,
    /// `min (u − u_a)` over control nodes.
    pub min_feasibility_slack: f64,
}

/// `a(y, v) = (βu, v)` on the state space over `u`'s mesh.
pub fn solve_state(state: &Arc<FeSpace>, u: &Field, data: &ProblemData) -> Result<Field, OptimizerError> {
    DiscreteProblem::new(state.clone(), u.space().clone(), data.clone(), DEFAULT_TOL)?.solve_state(u)
}

/// Adjoint solve with the right-hand side assembled by quadrature.
pub fn solve_adjoint(y: &Field, data: &ProblemData) -> Result<Field, OptimizerError> {
    let state = y.space().clone();
    state.expect_kind(SpaceKind::State)?;
    let a = assemble_robin_stiffness(&state, data)?;
    let rhs = assemble_adjoint_rhs(&state, y, data)?;
    let (x, _) = SpdSolver::new(a, DEFAULT_TOL)?.solve(&rhs)?;
    Ok(Field::from_coeffs(state, x)?)
}

/// Nodal `max{u_a, −(β/λ) z}` on `control`.
pub fn update_control(z: &Field, control: &Arc<FeSpace>, data: &ProblemData) -> Result<Field, OptimizerError> {
    data.validate().map_err(AssemblyError::from)?;
    let sampling = control_node_sampling(z.space(), control)?;
    Ok(project_nodal(&sampling.mul_vec(z.coeffs()), data, control.clone()).0)
}

pub fn run(
    data: &ProblemData,
    config: &OptimizerConfig,
    state: Arc<FeSpace>,
    control: Arc<FeSpace>,
) -> Result<(Triple, IterationLog), OptimizerError> {
    DiscreteProblem::new(state, control, data.clone(), config.solver_tol)?.run(config)
}
