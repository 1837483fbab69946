//! Run configuration as flat `key = value` text with `[section]` headers.
//!
//! ```text
//! [problem]
//! example = custom        # 1, 2 or custom
//! lambda = 0.5
//! lambda_omega = 1
//! lambda_gamma = 1
//! alpha = 1
//! beta = 1
//! u_a = 0
//! y_omega = 10*x1*x2*sin(pi*x1)*sin(pi*x2)
//! y_gamma = x1*x2         # optional, defaults to y_omega
//!
//! [mesh]
//! kind = tri-crisscross   # quad, tri-diagonal or tri-crisscross
//! n = 4
//! p = 2
//!
//! [optimizer]
//! tol = 1e-10
//! max_iter = 500
//! relaxation = 1
//!
//! [reference]
//! n = 50
//! p = 3
//! tol = 1e-12
//! max_iter = 2000
//! cache_dir = /tmp/ref    # optional
//!
//! [output]
//! dir = out
//! ```
//!
//! With `example = 1` or `2` the coefficients and targets are fixed and may
//! not appear in the file.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::expr::parse_expr;
use crate::optimizer::OptimizerConfig;
use crate::problem::{ProblemData, Target, EXAMPLE1_TARGET, EXAMPLE2_TARGET};
use crate::verify::{MeshSpec, ReferenceConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    One,
    Two,
    Custom,
}

impl FromStr for Example {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s.trim() {
            "1" | "preset1" => Ok(Example::One),
            "2" | "preset2" => Ok(Example::Two),
            "custom" => Ok(Example::Custom),
            other => Err(invalid(format!("unknown example '{other}' (expected 1, 2 or custom)"))),
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Example::One => "1",
            Example::Two => "2",
            Example::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub lambda: f64,
    pub lambda_omega: f64,
    pub lambda_gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub u_a: f64,
}

impl Coefficients {
    const KEYS: [&'static str; 6] = ["lambda", "lambda_omega", "lambda_gamma", "alpha", "beta", "u_a"];

    fn get_mut(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "lambda" => &mut self.lambda,
            "lambda_omega" => &mut self.lambda_omega,
            "lambda_gamma" => &mut self.lambda_gamma,
            "alpha" => &mut self.alpha,
            "beta" => &mut self.beta,
            "u_a" => &mut self.u_a,
            _ => return None,
        })
    }

    fn values(&self) -> [f64; 6] {
        [self.lambda, self.lambda_omega, self.lambda_gamma, self.alpha, self.beta, self.u_a]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub relaxation: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            relaxation: d.relaxation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub example: Example,
    pub coefficients: Coefficients,
    pub y_omega: String,
    pub y_gamma: Option<String>,
    pub mesh: MeshSpec,
    pub p: usize,
    pub optimizer: OptimizerSettings,
    pub reference: ReferenceConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset(Example::One)
    }
}

impl RunConfig {
    /// Example 1 or 2 data on the 64-triangle crisscross mesh with `p = 2`.
    /// `Custom` starts from Example 1's values.
    pub fn preset(example: Example) -> Self {
        let mut c = Self {
            example,
            coefficients: Coefficients {
                lambda: 0.5,
                lambda_omega: 1.0,
                lambda_gamma: 1.0,
                alpha: 1.0,
                beta: 1.0,
                u_a: 0.0,
            },
            y_omega: EXAMPLE1_TARGET.to_string(),
            y_gamma: None,
            mesh: MeshSpec::Tri {
                n: 4,
                split: crate::mesh::TriangleSplit::Crisscross,
            },
            p: 2,
            optimizer: OptimizerSettings::default(),
            reference: ReferenceConfig::default(),
            output_dir: PathBuf::from("out"),
        };
        c.set_example(example);
        c
    }

    /// Switches the problem preset. Named examples reset the coefficients
    /// and targets.
    pub fn set_example(&mut self, example: Example) {
        self.example = example;
        match example {
            Example::One | Example::Two => {
                self.coefficients = Coefficients {
                    lambda: 0.5,
                    lambda_omega: 1.0,
                    lambda_gamma: 1.0,
                    alpha: 1.0,
                    beta: 1.0,
                    u_a: if example == Example::Two { 0.3 } else { 0.0 },
                };
                self.y_omega = if example == Example::Two { EXAMPLE2_TARGET } else { EXAMPLE1_TARGET }.to_string();
                self.y_gamma = None;
            }
            Example::Custom => {}
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ConfigError::Line { line: i + 1, msg };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err("unterminated section header".into()))?;
                section = name.trim().to_string();
                if !["problem", "mesh", "optimizer", "reference", "output"].contains(&section.as_str()) {
                    return Err(err(format!("unknown section [{section}]")));
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
            if section.is_empty() {
                return Err(err("key outside of a section".into()));
            }
            entries.push((i + 1, section.clone(), key.trim().to_string(), value.trim().to_string()));
        }

        // the preset has to be known before coefficients are checked
        let example = entries
            .iter()
            .find(|(_, s, k, _)| s == "problem" && k == "example")
            .map(|(line, _, _, v)| v.parse().map_err(|e: ConfigError| ConfigError::Line { line: *line, msg: e.to_string() }))
            .transpose()?
            .unwrap_or(Example::Custom);
        let mut c = Self::preset(example);
        let (mut kind, mut n) = (c.mesh.kind_label().to_string(), c.mesh.n());
        for (line, section, key, value) in &entries {
            let err = |msg: String| ConfigError::Line { line: *line, msg };
            let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("{key}: expected a number, got '{v}'")));
            let int = |v: &str| v.parse::<usize>().map_err(|_| err(format!("{key}: expected a non-negative integer, got '{v}'")));
            match (section.as_str(), key.as_str()) {
                ("problem", "example") => {}
                ("problem", k) if Coefficients::KEYS.contains(&k) || k == "y_omega" || k == "y_gamma" => {
                    if example != Example::Custom {
                        return Err(err(format!("{k} is fixed by example {example}; use example = custom")));
                    }
                    match k {
                        "y_omega" => c.y_omega = value.clone(),
                        "y_gamma" => c.y_gamma = Some(value.clone()),
                        _ => *c.coefficients.get_mut(k).expect("listed key") = num(value)?,
                    }
                }
                ("mesh", "kind") => kind = value.clone(),
                ("mesh", "n") => n = int(value)?,
                ("mesh", "p") => c.p = int(value)?,
                ("optimizer", "tol") => c.optimizer.tol = num(value)?,
                ("optimizer", "max_iter") => c.optimizer.max_iter = int(value)?,
                ("optimizer", "relaxation") => c.optimizer.relaxation = num(value)?,
                ("reference", "n") => c.reference.n_ref = int(value)?,
                ("reference", "p") => c.reference.p_ref = int(value)?,
                ("reference", "tol") => c.reference.tol_ref = num(value)?,
                ("reference", "max_iter") => c.reference.max_iter = int(value)?,
                ("reference", "cache_dir") => c.reference.cache_dir = Some(PathBuf::from(value)),
                ("output", "dir") => c.output_dir = PathBuf::from(value),
                (s, k) => return Err(err(format!("unknown key '{k}' in [{s}]"))),
            }
        }
        c.mesh = MeshSpec::from_kind(&kind, n).map_err(|e| invalid(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("[problem]\n");
        let _ = writeln!(s, "example = {}", self.example);
        if self.example == Example::Custom {
            for (k, v) in Coefficients::KEYS.iter().zip(self.coefficients.values()) {
                let _ = writeln!(s, "{k} = {v:?}");
            }
            let _ = writeln!(s, "y_omega = {}", self.y_omega);
            if let Some(g) = &self.y_gamma {
                let _ = writeln!(s, "y_gamma = {g}");
            }
        }
        let _ = writeln!(s, "\n[mesh]\nkind = {}\nn = {}\np = {}", self.mesh.kind_label(), self.mesh.n(), self.p);
        let o = &self.optimizer;
        let _ = writeln!(s, "\n[optimizer]\ntol = {:?}\nmax_iter = {}\nrelaxation = {:?}", o.tol, o.max_iter, o.relaxation);
        let r = &self.reference;
        let _ = writeln!(s, "\n[reference]\nn = {}\np = {}\ntol = {:?}\nmax_iter = {}", r.n_ref, r.p_ref, r.tol_ref, r.max_iter);
        if let Some(d) = &r.cache_dir {
            let _ = writeln!(s, "cache_dir = {}", d.display());
        }
        let _ = writeln!(s, "\n[output]\ndir = {}", self.output_dir.display());
        s
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.p == 0 {
            return Err(invalid("degree must be ≥ 1"));
        }
        if self.mesh.n() == 0 {
            return Err(invalid("mesh resolution n must be ≥ 1"));
        }
        self.problem_data()?;
        self.optimizer_config().validate().map_err(|e| invalid(e.to_string()))?;
        self.reference.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    pub fn problem_data(&self) -> Result<ProblemData, ConfigError> {
        let target = |label: &str, text: &str| {
            parse_expr(text)
                .map(Target::from_expr)
                .map_err(|e| invalid(format!("{label}: {e}")))
        };
        let y_omega = target("y_omega", &self.y_omega)?;
        let y_gamma = match &self.y_gamma {
            Some(g) => target("y_gamma", g)?,
            None => y_omega.clone(),
        };
        let c = self.coefficients;
        let data = ProblemData {
            lambda: c.lambda,
            lambda_omega: c.lambda_omega,
            lambda_gamma: c.lambda_gamma,
            alpha: c.alpha,
            beta: c.beta,
            u_a: c.u_a,
            y_omega,
            y_gamma,
        };
        data.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(data)
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            tol: self.optimizer.tol,
            max_iter: self.optimizer.max_iter,
            relaxation: self.optimizer.relaxation,
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::TriangleSplit;

    #[test]
    fn presets_match_problem_data() {
        let c = RunConfig::preset(Example::Two);
        let d = c.problem_data().unwrap();
        assert_eq!(d.canonical_key(), ProblemData::example2().canonical_key());
        let d = RunConfig::preset(Example::One).problem_data().unwrap();
        assert_eq!(d.canonical_key(), ProblemData::example1().canonical_key());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::preset(Example::Custom);
        c.coefficients.lambda = 0.1 + 0.2;
        c.y_gamma = Some("x1*x2".into());
        c.mesh = MeshSpec::Quad { n: 7 };
        c.p = 3;
        c.optimizer.relaxation = 0.7;
        c.reference.cache_dir = Some("/tmp/cache".into());
        let text = c.to_text();
        assert_eq!(RunConfig::parse(&text).unwrap(), c);
        let preset = RunConfig::preset(Example::Two);
        assert_eq!(RunConfig::parse(&preset.to_text()).unwrap(), preset);
    }

    #[test]
    fn parses_documented_example() {
        let text = "# run\n[problem]\nexample = custom\nu_a = 0.25\n\n[mesh]\nkind = tri-diagonal # two per square\nn = 3\np = 1\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.coefficients.u_a, 0.25);
        assert_eq!(c.mesh, MeshSpec::Tri { n: 3, split: TriangleSplit::Diagonal });
        assert_eq!(c.p, 1);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = |text: &str| RunConfig::parse(text).unwrap_err().to_string();
        assert_eq!(bad("[mesh]\np = two\n"), "line 2: p: expected a non-negative integer, got 'two'");
        assert!(bad("[problem]\nexample = 1\nlambda = 2\n").starts_with("line 3: lambda is fixed"));
        assert!(bad("[solver]\n").contains("unknown section"));
        assert!(bad("[mesh]\nsize = 3\n").contains("unknown key 'size'"));
        assert!(bad("n = 3\n").contains("outside of a section"));
        assert_eq!(bad("[mesh]\np = 0\n"), "degree must be ≥ 1");
        assert!(bad("[problem]\nexample = custom\ny_omega = sin(\n").contains("offset 4"));
        assert!(bad("[problem]\nexample = custom\nlambda = 0\n").contains("lambda"));
    }
}
