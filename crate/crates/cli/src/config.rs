//! Run configuration: a line-oriented `key = value` grammar with `#`
//! comments and `[quadrature]` / `[output]` sections.
//!
//! ```text
//! command = lp-sweep
//! model = thickened        # thickened | heisenberg | abelian-<n>
//! epsilon = 0.1
//! taus = 0.5, 1, 1.5, 2.5, 3
//!
//! [quadrature]
//! samples = 1048576
//!
//! [output]
//! dir = out/lp
//! ```

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use grauert::gauge::GaugeModel;
use grauert::quadrature::QuadratureSpec;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: unknown key `{key}` in section [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: invalid value for `{key}`: {reason}")]
    Value { line: usize, key: String, reason: String },
    #[error("constraint violated: {constraint} ({detail})")]
    Constraint { constraint: &'static str, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    GaugeCheck,
    CertifySpc,
    LeviBounds,
    LpSweep,
    L1Group,
    Amenability,
    RepUnitarity,
    RepContinuity,
    GramRank,
    SliceFubini,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::GaugeCheck,
        Command::CertifySpc,
        Command::LeviBounds,
        Command::LpSweep,
        Command::L1Group,
        Command::Amenability,
        Command::RepUnitarity,
        Command::RepContinuity,
        Command::GramRank,
        Command::SliceFubini,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::GaugeCheck => "gauge-check",
            Command::CertifySpc => "certify-spc",
            Command::LeviBounds => "levi-bounds",
            Command::LpSweep => "lp-sweep",
            Command::L1Group => "l1-group",
            Command::Amenability => "amenability",
            Command::RepUnitarity => "rep-unitarity",
            Command::RepContinuity => "rep-continuity",
            Command::GramRank => "gram-rank",
            Command::SliceFubini => "slice-fubini",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    Thickened,
    Heisenberg,
    Abelian(usize),
}

impl ModelChoice {
    pub fn build(self, epsilon: f64) -> GaugeModel {
        match self {
            ModelChoice::Thickened => GaugeModel::thickened(epsilon),
            ModelChoice::Heisenberg => GaugeModel::heisenberg(epsilon),
            ModelChoice::Abelian(n) => GaugeModel::abelian(n, epsilon),
        }
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelChoice::Thickened => f.write_str("thickened"),
            ModelChoice::Heisenberg => f.write_str("heisenberg"),
            ModelChoice::Abelian(n) => write!(f, "abelian-{n}"),
        }
    }
}

impl FromStr for ModelChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "thickened" => Ok(ModelChoice::Thickened),
            "heisenberg" => Ok(ModelChoice::Heisenberg),
            _ => match s.strip_prefix("abelian-").map(str::parse::<usize>) {
                Some(Ok(n)) if n >= 1 => Ok(ModelChoice::Abelian(n)),
                _ => Err(format!("unknown model `{s}` (thickened, heisenberg or abelian-<n>)")),
            },
        }
    }
}

/// Verdict a campaign is expected to reach; overrides the built-in rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    Convergent,
    Divergent,
    Blowup,
    Bounded,
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Expectation::Convergent => "convergent",
            Expectation::Divergent => "divergent",
            Expectation::Blowup => "blowup",
            Expectation::Bounded => "bounded",
        })
    }
}

impl FromStr for Expectation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "convergent" => Ok(Expectation::Convergent),
            "divergent" => Ok(Expectation::Divergent),
            "blowup" => Ok(Expectation::Blowup),
            "bounded" => Ok(Expectation::Bounded),
            _ => Err(format!("unknown expectation `{s}`")),
        }
    }
}

/// Integration settings; `samples` falls back to a per-command default.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    pub samples: Option<usize>,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        let d = QuadratureSpec::default();
        Self {
            abs_tol: d.abs_tol,
            rel_tol: d.rel_tol,
            max_subdivisions: d.max_subdivisions,
            samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub model: ModelChoice,
    pub epsilon: f64,
    pub delta: f64,
    pub tau: f64,
    /// Several exponents for the threshold sweeps; `tau` when absent.
    pub taus: Option<Vec<f64>>,
    pub p: f64,
    pub k: u32,
    pub levels: Option<usize>,
    /// Trials, sequence length or largest Gram size, per command.
    pub count: Option<usize>,
    pub expect: Option<Expectation>,
    pub seed: u64,
    pub quadrature: QuadratureConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            model: ModelChoice::Thickened,
            epsilon: 0.1,
            delta: 0.1,
            tau: 1.0,
            taus: None,
            p: 2.0,
            k: 3,
            levels: None,
            count: None,
            expect: None,
            seed: 0,
            quadrature: QuadratureConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn gauge_model(&self) -> GaugeModel {
        self.model.build(self.epsilon)
    }

    pub fn taus(&self) -> Vec<f64> {
        self.taus.clone().unwrap_or_else(|| vec![self.tau])
    }

    /// Quadrature settings with the given sample default.
    pub fn spec(&self, default_samples: usize) -> QuadratureSpec {
        QuadratureSpec {
            abs_tol: self.quadrature.abs_tol,
            rel_tol: self.quadrature.rel_tol,
            max_subdivisions: self.quadrature.max_subdivisions,
            samples: self.quadrature.samples.unwrap_or(default_samples),
            seed: self.seed,
            ..QuadratureSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Constraint { constraint: name, detail: format!("got {v}") })
            }
        };
        positive("epsilon > 0", self.epsilon)?;
        if !matches!(self.model, ModelChoice::Abelian(_)) && self.epsilon >= 1.0 {
            return Err(ConfigError::Constraint {
                constraint: "epsilon < 1",
                detail: format!("the {} gauge needs ε < 1, got ε = {}", self.model, self.epsilon),
            });
        }
        positive("delta > 0", self.delta)?;
        if !(self.tau >= 0.0 && self.tau.is_finite()) || self.taus().iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(ConfigError::Constraint { constraint: "tau >= 0", detail: format!("got {:?}", self.taus()) });
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(ConfigError::Constraint { constraint: "p >= 1", detail: format!("got {}", self.p) });
        }
        if self.k > 4 {
            return Err(ConfigError::Constraint { constraint: "k <= 4", detail: format!("got {}", self.k) });
        }
        positive("abs_tol > 0", self.quadrature.abs_tol)?;
        positive("rel_tol > 0", self.quadrature.rel_tol)?;
        if self.quadrature.max_subdivisions == 0 || self.quadrature.samples == Some(0) {
            return Err(ConfigError::Constraint {
                constraint: "quadrature budgets > 0",
                detail: "max_subdivisions and samples must be positive".into(),
            });
        }
        Ok(())
    }

    /// Canonical text form; `parse(&emit())` reproduces `self`.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        if let Some(c) = self.command {
            let _ = writeln!(s, "command = {c}");
        }
        let _ = writeln!(s, "model = {}", self.model);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "tau = {}", self.tau);
        if let Some(t) = &self.taus {
            let list: Vec<String> = t.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "taus = {}", list.join(", "));
        }
        let _ = writeln!(s, "p = {}", self.p);
        let _ = writeln!(s, "k = {}", self.k);
        if let Some(l) = self.levels {
            let _ = writeln!(s, "levels = {l}");
        }
        if let Some(c) = self.count {
            let _ = writeln!(s, "count = {c}");
        }
        if let Some(e) = self.expect {
            let _ = writeln!(s, "expect = {e}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        let q = &self.quadrature;
        let _ = writeln!(s, "\n[quadrature]");
        let _ = writeln!(s, "abs_tol = {}", q.abs_tol);
        let _ = writeln!(s, "rel_tol = {}", q.rel_tol);
        let _ = writeln!(s, "max_subdivisions = {}", q.max_subdivisions);
        if let Some(n) = q.samples {
            let _ = writeln!(s, "samples = {n}");
        }
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", self.output.dir.display());
        s
    }
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>().map_err(|e| ConfigError::Value {
        line,
        key: key.to_string(),
        reason: e.to_string(),
    })
}

/// Parse and validate a configuration, filling defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut section = String::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line,
                reason: "unterminated section header".into(),
            })?;
            let name = name.trim();
            if !matches!(name, "quadrature" | "output") {
                return Err(ConfigError::Syntax { line, reason: format!("unknown section [{name}]") });
            }
            section = name.to_string();
            continue;
        }
        let (key, raw) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            reason: format!("expected `key = value`, found `{content}`"),
        })?;
        let (key, raw) = (key.trim(), raw.trim());
        if key.is_empty() || raw.is_empty() {
            return Err(ConfigError::Syntax { line, reason: "empty key or value".into() });
        }
        match (section.as_str(), key) {
            ("", "command") => cfg.command = Some(value(line, key, raw)?),
            ("", "model") => cfg.model = value(line, key, raw)?,
            ("", "epsilon") => cfg.epsilon = value(line, key, raw)?,
            ("", "delta") => cfg.delta = value(line, key, raw)?,
            ("", "tau") => cfg.tau = value(line, key, raw)?,
            ("", "taus") => {
                let list = raw
                    .split(',')
                    .map(|v| value::<f64>(line, key, v.trim()))
                    .collect::<Result<Vec<_>, _>>()?;
                cfg.taus = Some(list);
            }
            ("", "p") => cfg.p = value(line, key, raw)?,
            ("", "k") => cfg.k = value(line, key, raw)?,
            ("", "levels") => cfg.levels = Some(value(line, key, raw)?),
            ("", "count") => cfg.count = Some(value(line, key, raw)?),
            ("", "expect") => cfg.expect = Some(value(line, key, raw)?),
            ("", "seed") => cfg.seed = value(line, key, raw)?,
            ("quadrature", "abs_tol") => cfg.quadrature.abs_tol = value(line, key, raw)?,
            ("quadrature", "rel_tol") => cfg.quadrature.rel_tol = value(line, key, raw)?,
            ("quadrature", "max_subdivisions") => cfg.quadrature.max_subdivisions = value(line, key, raw)?,
            ("quadrature", "samples") => cfg.quadrature.samples = Some(value(line, key, raw)?),
            ("output", "dir") => cfg.output.dir = PathBuf::from(raw),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    section: if section.is_empty() { "top".into() } else { section.clone() },
                    key: key.to_string(),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.epsilon, c.tau, c.p, c.seed), (0.1, 1.0, 2.0, 0));
    }

    #[test]
    fn comments_sections_and_lists() {
        let text = "# campaign\ncommand = lp-sweep  # inline\ntaus = 0.5, 1,3\n\n[quadrature]\nsamples = 4096\n[output]\ndir = runs/a\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.command, Some(Command::LpSweep));
        assert_eq!(c.taus, Some(vec![0.5, 1.0, 3.0]));
        assert_eq!(c.quadrature.samples, Some(4096));
        assert_eq!(c.output.dir, PathBuf::from("runs/a"));
    }

    #[test]
    fn epsilon_at_least_one_is_rejected_for_the_heisenberg_gauge() {
        let e = parse_config("model = heisenberg\nepsilon = 1.5").unwrap_err();
        assert!(matches!(e, ConfigError::Constraint { constraint: "epsilon < 1", .. }), "{e}");
        assert!(e.to_string().contains("ε < 1"));
        assert!(parse_config("model = abelian-2\nepsilon = 1.5").is_ok());
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(
            parse_config("epsilon = 0.1\nbogus = 3").unwrap_err(),
            ConfigError::UnknownKey { line: 2, section: "top".into(), key: "bogus".into() }
        );
        assert!(matches!(parse_config("\n\nseed 4").unwrap_err(), ConfigError::Syntax { line: 3, .. }));
        assert!(matches!(parse_config("[quadrature]\nepsilon = 0.2").unwrap_err(), ConfigError::UnknownKey { line: 2, .. }));
        assert!(matches!(parse_config("tau = x").unwrap_err(), ConfigError::Value { line: 1, .. }));
        assert!(matches!(parse_config("[plots]").unwrap_err(), ConfigError::Syntax { line: 1, .. }));
    }

    #[test]
    fn model_names() {
        for m in [ModelChoice::Thickened, ModelChoice::Heisenberg, ModelChoice::Abelian(3)] {
            assert_eq!(m.to_string().parse::<ModelChoice>().unwrap(), m);
        }
        assert!("abelian-0".parse::<ModelChoice>().is_err());
    }
}
