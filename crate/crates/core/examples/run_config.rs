//! Building a run from configuration text and writing it back out.
use robin_ocp::config::RunConfig;

const TEXT: &str = "
[problem]
example = custom
lambda = 0.25
u_a = 0.1
y_omega = x1*sin(pi*x2)

[mesh]
kind = quad
n = 6
p = 2

[optimizer]
relaxation = 0.8
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = RunConfig::parse(TEXT)?;
    let data = config.problem_data()?;
    println!("{}", data.canonical_key());
    print!("{}", config.to_text());
    assert_eq!(RunConfig::parse(&config.to_text())?, config);
    Ok(())
}
