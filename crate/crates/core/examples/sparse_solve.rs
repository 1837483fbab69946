//! Direct (envelope Cholesky after reverse Cuthill-McKee) and preconditioned
//! CG solves of a Robin stiffness system.
use std::sync::Arc;

use robin_ocp::assembly::{assemble_load, assemble_robin_stiffness};
use robin_ocp::linsolve::{pcg, reverse_cuthill_mckee, EnvelopeCholesky, SpdSolver};
use robin_ocp::mesh::{build_uniform_quad_mesh, DegreeVector};
use robin_ocp::problem::ProblemData;
use robin_ocp::space::build_state_space;

fn main() {
    let mesh = Arc::new(build_uniform_quad_mesh(20));
    let space = build_state_space(mesh.clone(), DegreeVector::uniform(mesh.num_elements(), 3)).unwrap();
    let a = assemble_robin_stiffness(&space, &ProblemData::unit()).unwrap();
    let b = assemble_load(&space, |x| x.x1 * (1.0 - x.x2));
    println!("dofs {}, nonzeros {}", a.nrows(), a.nnz());

    let perm = reverse_cuthill_mckee(&a);
    println!("RCM permutation of length {}", perm.len());
    let chol = EnvelopeCholesky::factor(&a).unwrap();
    println!("envelope size {}", chol.envelope_size());

    let (x, report) = SpdSolver::new(a.clone(), 1e-12).unwrap().solve(&b).unwrap();
    println!("direct: {:?}", report);
    let (y, report) = pcg(&a, &b, 1e-12, 10_000).unwrap();
    println!("pcg:    {:?}", report);
    let diff = x.iter().zip(&y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    println!("max difference {diff:.2e}");
}
