//! Residual estimator components and the largest local indicators.
use robin_ocp::estimator::estimate;
use robin_ocp::optimizer::OptimizerConfig;
use robin_ocp::problem::ProblemData;
use robin_ocp::verify::{solve_on, MeshSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (name, data) in [("example 1", ProblemData::example1()), ("example 2", ProblemData::example2())] {
        let (_, t, _) = solve_on(&data, MeshSpec::from_kind("tri-crisscross", 4)?, 2, &OptimizerConfig::default())?;
        let b = estimate(&t, &data)?;
        println!("{name}\n{}", b.to_csv());
        let mut local: Vec<(usize, f64)> = (0..b.per_element.len()).map(|e| (e, b.local_indicator(e).unwrap())).collect();
        local.sort_by(|a, b| b.1.total_cmp(&a.1));
        for (e, v) in &local[..4] {
            println!("  element {e:>2}: {v:.4e}");
        }
    }
    Ok(())
}
