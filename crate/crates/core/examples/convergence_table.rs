//! Degree and mesh refinement study for both example problems against a
//! fine reference solution.
use robin_ocp::mesh::TriangleSplit;
use robin_ocp::optimizer::OptimizerConfig;
use robin_ocp::problem::ProblemData;
use robin_ocp::verify::{convergence_study, MeshSpec, ReferenceConfig, RunSpec, TableKey};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tri = |n| MeshSpec::Tri { n, split: TriangleSplit::Crisscross };
    let reference = ReferenceConfig::default();
    let config = OptimizerConfig::default();
    for (name, data) in [("example 1", ProblemData::example1()), ("example 2", ProblemData::example2())] {
        let by_degree = convergence_study(&data, &[RunSpec { mesh: tri(4), p: 1 }, RunSpec { mesh: tri(4), p: 2 }], &reference, &config)?;
        let by_mesh = convergence_study(&data, &[RunSpec { mesh: tri(2), p: 2 }, RunSpec { mesh: tri(4), p: 2 }], &reference, &config)?;
        println!("{name}, N = 64\n{}", by_degree.to_table_csv(TableKey::Degree));
        println!("{name}, p = 2\n{}", by_mesh.to_table_csv(TableKey::Elements));
        for row in &by_degree.rows {
            let eta: Vec<String> = row.estimator.eta_sq.iter().map(|v| format!("{v:.6e}")).collect();
            println!("p={} eta_sq [{}] total {:.6e} ratio {:.3}", row.p, eta.join(", "), row.estimator.total_sq, row.reliability);
        }
        println!();
    }
    Ok(())
}
