//! Command-line front end.
//!
//! Exit status: 0 on success, 1 for configuration, usage and I/O errors,
//! 2 for numerical failures (solver breakdown, non-convergence).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{ConfigError, Example, RunConfig};
use crate::estimator::{estimate, EstimatorError};
use crate::export::{export_fields, fmt_sci};
use crate::mesh::TriangleSplit;
use crate::optimizer::OptimizerError;
use crate::verify::{
    compute_reference, convergence_study, solve_on, ConvergenceTable, MeshSpec, RunSpec, TableKey, VerifyError,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<OptimizerError> for CliError {
    fn from(e: OptimizerError) -> Self {
        match e {
            OptimizerError::Config(msg) => CliError::Config(msg),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Optimizer(o) => o.into(),
            VerifyError::Invalid(msg) => CliError::Config(msg),
            VerifyError::Cache(msg) => CliError::Io(msg),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "robin-ocp", version, about = "hp-FEM optimal control with Robin boundary and boundary observation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the optimizer and export u, y, z.
    Solve(RunArgs),
    /// Solve, then evaluate the residual error estimator.
    Estimate(RunArgs),
    /// Error norms and estimator for a list of runs against the reference.
    Study {
        #[command(flatten)]
        args: RunArgs,
        /// Comma-separated runs `kind:n/p`, e.g. `tri-crisscross:4/2`.
        #[arg(long, default_value = "tri-crisscross:2/1,tri-crisscross:2/2,tri-crisscross:4/1,tri-crisscross:4/2")]
        runs: String,
    },
    /// Build (or load from cache) the fine reference solution.
    Reference(RunArgs),
    /// Error tables for p = 1, 2 at 64 elements, 16 and 64 elements at
    /// p = 2, and the estimator breakdown at 64 elements, p = 2.
    Tables(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem preset: 1, 2 or custom.
    #[arg(long)]
    example: Option<String>,
    /// quad, tri-diagonal or tri-crisscross.
    #[arg(long)]
    mesh: Option<String>,
    /// Squares per side of the mesh.
    #[arg(long)]
    n: Option<usize>,
    /// Polynomial degree.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    relaxation: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_omega: Option<f64>,
    #[arg(long)]
    lambda_gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    u_a: Option<f64>,
    /// Interior target, e.g. `x1*sin(pi*x2)`.
    #[arg(long)]
    y_omega: Option<String>,
    /// Boundary target; defaults to the interior target.
    #[arg(long)]
    y_gamma: Option<String>,
    #[arg(long)]
    n_ref: Option<usize>,
    #[arg(long)]
    p_ref: Option<usize>,
    #[arg(long)]
    tol_ref: Option<f64>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                RunConfig::parse(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(ex) = &self.example {
            c.set_example(ex.parse()?);
        }
        let overrides = [
            ("lambda", self.lambda),
            ("lambda_omega", self.lambda_omega),
            ("lambda_gamma", self.lambda_gamma),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("u_a", self.u_a),
        ];
        let targets = self.y_omega.is_some() || self.y_gamma.is_some();
        if let Some((name, _)) = overrides.iter().find(|(_, v)| v.is_some()) {
            if c.example != Example::Custom {
                return Err(CliError::Config(format!("--{} requires --example custom", name.replace('_', "-"))));
            }
        }
        if targets && c.example != Example::Custom {
            return Err(CliError::Config("target expressions require --example custom".into()));
        }
        let k = &mut c.coefficients;
        for (slot, v) in [
            (&mut k.lambda, self.lambda),
            (&mut k.lambda_omega, self.lambda_omega),
            (&mut k.lambda_gamma, self.lambda_gamma),
            (&mut k.alpha, self.alpha),
            (&mut k.beta, self.beta),
            (&mut k.u_a, self.u_a),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if let Some(y) = &self.y_omega {
            c.y_omega = y.clone();
        }
        if let Some(y) = &self.y_gamma {
            c.y_gamma = Some(y.clone());
        }
        if self.mesh.is_some() || self.n.is_some() {
            let kind = self.mesh.clone().unwrap_or_else(|| c.mesh.kind_label().to_string());
            c.mesh = MeshSpec::from_kind(&kind, self.n.unwrap_or(c.mesh.n()))?;
        }
        if let Some(p) = self.p {
            c.p = p;
        }
        if let Some(v) = self.tol {
            c.optimizer.tol = v;
        }
        if let Some(v) = self.max_iter {
            c.optimizer.max_iter = v;
        }
        if let Some(v) = self.relaxation {
            c.optimizer.relaxation = v;
        }
        if let Some(v) = self.n_ref {
            c.reference.n_ref = v;
        }
        if let Some(v) = self.p_ref {
            c.reference.p_ref = v;
        }
        if let Some(v) = self.tol_ref {
            c.reference.tol_ref = v;
        }
        if let Some(v) = &self.cache_dir {
            c.reference.cache_dir = Some(v.clone());
        }
        if let Some(v) = &self.out {
            c.output_dir = v.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

/// Parses `argv` (including the program name) and runs the subcommand,
/// printing results to `out` and diagnostics to `err`. Returns the exit
/// status.
pub fn run_command_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_command_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Solve(args) => solve(&args.resolve()?, out, false),
        Command::Estimate(args) => solve(&args.resolve()?, out, true),
        Command::Study { args, runs } => study(&args.resolve()?, &runs, out),
        Command::Reference(args) => reference(&args.resolve()?, out),
        Command::Tables(args) => tables(&args.resolve()?, out),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn solve(c: &RunConfig, out: &mut dyn Write, with_estimate: bool) -> Result<(), CliError> {
    let data = c.problem_data()?;
    let (_, t, log) = solve_on(&data, c.mesh, c.p, &c.optimizer_config())?;
    let mut written = export_fields(&t, c.output_dir.join("solution"))?;
    let log_path = c.output_dir.join("iterations.csv");
    write_file(&log_path, &log.to_csv())?;
    written.push(log_path);
    let last = log.records.last();
    writeln!(out, "mesh {} ({} elements), p = {}", c.mesh, c.mesh.num_elements(), c.p)?;
    writeln!(out, "iterations: {}", log.iterations())?;
    writeln!(out, "final z increment (H1): {}", fmt_sci(log.last_increment()))?;
    writeln!(out, "J: {}", fmt_sci(last.map_or(log.initial_j, |r| r.j)))?;
    writeln!(out, "active control nodes: {}", last.map_or(0, |r| r.active_nodes))?;
    if with_estimate {
        let est = estimate(&t, &data)?;
        let csv = est.to_csv();
        let (json_path, csv_path) = (c.output_dir.join("estimator.json"), c.output_dir.join("estimator.csv"));
        write_file(&json_path, &serde_json::to_string_pretty(&est.to_json()).expect("numeric json"))?;
        write_file(&csv_path, &csv)?;
        written.extend([json_path, csv_path]);
        write!(out, "{csv}")?;
    }
    for p in written {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

fn parse_runs(text: &str) -> Result<Vec<RunSpec>, CliError> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (mesh, p) = item
                .trim()
                .split_once('/')
                .ok_or_else(|| CliError::Config(format!("run '{item}' must look like kind:n/p")))?;
            let p = p
                .parse()
                .map_err(|_| CliError::Config(format!("bad degree in run '{item}'")))?;
            if p == 0 {
                return Err(CliError::Config("degree must be ≥ 1".into()));
            }
            Ok(RunSpec { mesh: mesh.parse()?, p })
        })
        .collect()
}

fn print_reference(c: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let r = &c.reference;
    writeln!(out, "reference: {}x{} quads, p = {}, tol = {}", r.n_ref, r.n_ref, r.p_ref, fmt_sci(r.tol_ref))?;
    Ok(())
}

fn study(c: &RunConfig, runs: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let runs = parse_runs(runs)?;
    let data = c.problem_data()?;
    let table = convergence_study(&data, &runs, &c.reference, &c.optimizer_config())?;
    let csv = table.to_csv();
    let (csv_path, json_path) = (c.output_dir.join("study.csv"), c.output_dir.join("reliability.json"));
    write_file(&csv_path, &csv)?;
    write_file(&json_path, &serde_json::to_string_pretty(&table.reliability_json()).expect("numeric json"))?;
    print_reference(c, out)?;
    write!(out, "{csv}")?;
    for r in table.rates() {
        let v: Vec<String> = r.values.iter().map(|&x| format!("{x:.3}")).collect();
        let what = if r.kind == "h" { "h-rate" } else { "p-ratio" };
        writeln!(out, "{what} rows {}->{}: {}", r.from, r.to, v.join(","))?;
    }
    writeln!(out, "wrote {}\nwrote {}", csv_path.display(), json_path.display())?;
    Ok(())
}

fn reference(c: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let data = c.problem_data()?;
    let start = Instant::now();
    let r = compute_reference(&data, &c.reference)?;
    print_reference(c, out)?;
    writeln!(out, "key: {}", r.key)?;
    writeln!(out, "iterations: {}", r.iterations)?;
    writeln!(out, "final z increment (H1): {}", fmt_sci(r.final_increment))?;
    writeln!(out, "J: {}", fmt_sci(r.j))?;
    writeln!(out, "elapsed: {:.2} s", start.elapsed().as_secs_f64())?;
    Ok(())
}

/// Meshes of the configured family with 16 and 64 elements.
fn table_meshes(mesh: MeshSpec) -> Result<(MeshSpec, MeshSpec), CliError> {
    match mesh {
        MeshSpec::Quad { .. } => Ok((MeshSpec::Quad { n: 4 }, MeshSpec::Quad { n: 8 })),
        MeshSpec::Tri { split: TriangleSplit::Crisscross, .. } => Ok((mesh.with_n(2), mesh.with_n(4))),
        MeshSpec::Tri { split: TriangleSplit::Diagonal, .. } => Err(CliError::Config(
            "no diagonal triangulation has 16 or 64 elements; use tri-crisscross or quad".into(),
        )),
    }
}

fn tables(c: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let (coarse, fine) = table_meshes(c.mesh)?;
    let data = c.problem_data()?;
    let runs = [
        RunSpec { mesh: fine, p: 1 },
        RunSpec { mesh: fine, p: 2 },
        RunSpec { mesh: coarse, p: 2 },
    ];
    let table = convergence_study(&data, &runs, &c.reference, &c.optimizer_config())?;
    let rows = &table.rows;
    let by_degree = ConvergenceTable { rows: vec![rows[0].clone(), rows[1].clone()] };
    let by_mesh = ConvergenceTable { rows: vec![rows[2].clone(), rows[1].clone()] };
    let first = if c.example == Example::Two { 4 } else { 1 };
    let files = [
        (first, by_degree.to_table_csv(TableKey::Degree)),
        (first + 1, by_mesh.to_table_csv(TableKey::Elements)),
        (first + 2, rows[1].estimator.to_csv()),
    ];
    print_reference(c, out)?;
    for (k, csv) in &files {
        let path = c.output_dir.join(format!("table{k}.csv"));
        write_file(&path, csv)?;
        writeln!(out, "table {k}\n{csv}")?;
    }
    let json_path = c.output_dir.join("reliability.json");
    write_file(&json_path, &serde_json::to_string_pretty(&table.reliability_json()).expect("numeric json"))?;
    for (k, _) in &files {
        writeln!(out, "wrote {}", c.output_dir.join(format!("table{k}.csv")).display())?;
    }
    writeln!(out, "wrote {}", json_path.display())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run_command_with(std::iter::once("robin-ocp").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn runs_parse() {
        let r = parse_runs("quad:3/2, tri-crisscross:2/1").unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].mesh, MeshSpec::Quad { n: 3 });
        assert!(parse_runs("quad:3").is_err());
        assert!(parse_runs("quad:3/0").is_err());
    }

    #[test]
    fn usage_and_config_errors_exit_1() {
        assert_eq!(run(&["frobnicate"]).0, 1);
        let (code, _, err) = run(&["solve", "--p", "0"]);
        assert_eq!(code, 1);
        assert!(err.contains("degree must be ≥ 1"), "{err}");
        let (code, _, err) = run(&["solve", "--lambda", "2"]);
        assert_eq!(code, 1);
        assert!(err.contains("--example custom"));
        assert_eq!(run(&["solve", "--example", "3"]).0, 1);
        assert_eq!(run(&["solve", "--config", "/nonexistent/run.cfg"]).0, 1);
        assert_eq!(run(&["tables", "--mesh", "tri-diagonal"]).0, 1);
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = run(&["--help"]);
        assert_eq!(code, 0);
        for sub in ["solve", "estimate", "study", "reference", "tables"] {
            assert!(out.contains(sub));
        }
    }

    #[test]
    fn non_convergence_exits_2() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let (code, _, err) = run(&["solve", "--n", "2", "--p", "1", "--max-iter", "2", "--out", out]);
        assert_eq!(code, 2, "{err}");
    }
}
