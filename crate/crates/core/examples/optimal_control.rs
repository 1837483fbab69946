//! Fixed-point solution of Example 2 (active lower bound), with the iteration
//! log and VTK/CSV field export.
use robin_ocp::export::export_fields;
use robin_ocp::optimizer::OptimizerConfig;
use robin_ocp::problem::ProblemData;
use robin_ocp::verify::{solve_on, MeshSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = ProblemData::example2();
    let mesh: MeshSpec = "tri-crisscross:4".parse()?;
    let (dp, t, log) = solve_on(&data, mesh, 2, &OptimizerConfig::default())?;
    for r in log.records.iter().step_by(5) {
        println!("iter {:>3}  |dz|_H1 {:.3e}  J {:.10}  active {}", r.iter, r.z_increment_h1, r.j, r.active_nodes);
    }
    let d = dp.check_discrete_optimality(&t)?;
    println!("{d:#?}");
    let dir = std::env::temp_dir().join("robin-ocp-example");
    for p in export_fields(&t, dir.join("example2"))? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
