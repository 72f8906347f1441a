//! Scenario files: TOML with `[weight]`, `[nonlinearity]`, `[forcing]`, `[grid]`
//! and an optional `[run]` section. See `docs/config.md` for the grammar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Sections every scenario must define, in the order they are reported when missing.
pub const REQUIRED_SECTIONS: [&str; 4] = ["weight", "nonlinearity", "forcing", "grid"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightConfig {
    /// `(1 + r²)^{-3}`.
    Canonical,
    Rational { power: f64 },
    Exponential { rate: f64 },
    Constant { value: f64 },
    /// Linear interpolation of tabulated values, constant past the last radius.
    Table { radii: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityConfig {
    /// Softplus blend with slopes `λ₁/2` and `2λ₁` and offset 1.
    Canonical,
    /// `g(s) = μ̲s + (μ̄ - μ̲)ln(1 + eˢ) - offset`; slopes are multiples of λ₁
    /// when `relative` is true.
    Softplus {
        mu_lower: f64,
        mu_upper: f64,
        #[serde(default = "one")]
        offset: f64,
        #[serde(default = "yes")]
        relative: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingConfig {
    Zero,
    /// `amplitude·exp(-((r - center)/width)²)`; its φ₁ component is projected out.
    Gaussian { amplitude: f64, center: f64, width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FarFieldConfig {
    RobinDecay,
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "three")]
    pub dim: usize,
    pub radius: f64,
    pub nodes: usize,
    #[serde(default = "one")]
    pub stretch: f64,
    #[serde(default = "robin")]
    pub far_field: FarFieldConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Defaults to the config file stem.
    pub scenario: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    /// Forcing coefficient for `solve` and `two`.
    pub t: Option<f64>,
    /// Start of the branch trace; defaults to `-10·|τ*|`.
    pub t_start: Option<f64>,
    pub eigen_tol: f64,
    pub newton_tol: f64,
    pub residual_tol: f64,
    pub representation_tol: f64,
    pub ds: f64,
    pub ds_max: f64,
    pub max_points: usize,
    pub newton_starts: usize,
    pub picard_starts: usize,
    pub start_amplitude: f64,
    /// Stages run by `sweep`, in order.
    pub stages: Vec<String>,
    /// Threads for this scenario's parallel work; 0 uses the global pool.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            output_dir: None,
            seed: 0,
            t: None,
            t_start: None,
            eigen_tol: 1e-12,
            newton_tol: 1e-12,
            residual_tol: 1e-8,
            representation_tol: 1e-3,
            ds: 0.1,
            ds_max: 1.0,
            max_points: 2000,
            newton_starts: 20,
            picard_starts: 5,
            start_amplitude: 5.0,
            stages: vec!["check".into(), "eigen".into(), "alpha".into()],
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub weight: WeightConfig,
    pub nonlinearity: NonlinearityConfig,
    pub forcing: ForcingConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub run: RunConfig,
}

fn one() -> f64 {
    1.0
}

fn three() -> usize {
    3
}

fn yes() -> bool {
    true
}

fn robin() -> FarFieldConfig {
    FarFieldConfig::RobinDecay
}

/// Stage names accepted in `run.stages`.
pub const STAGES: [&str; 6] = ["check", "eigen", "solve", "branch", "alpha", "two"];

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ScenarioConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let err = |line: Option<usize>, field: &str, message: String| CliError::Config {
            path: origin.to_path_buf(),
            line,
            field: field.to_string(),
            message,
        };
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| err(e.span().map(|s| line_of(text, s.start)), "", e.message().to_string()))?;
        if let Some(missing) = REQUIRED_SECTIONS.iter().find(|s| !table.contains_key(**s)) {
            return Err(err(None, missing, format!("missing section [{missing}]")));
        }
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            let field = e.span().map(|s| section_at(text, s.start)).unwrap_or_default();
            err(line, &field, e.message().to_string())
        })?;
        config.validate().map_err(|(field, message)| err(None, &field, message))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    /// SHA-256 of the normalized serialization, so formatting and comments do
    /// not change it.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn scenario_id(&self, origin: &Path) -> String {
        self.run.scenario.clone().unwrap_or_else(|| {
            origin.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into())
        })
    }

    fn validate(&self) -> Result<(), (String, String)> {
        let bad = |field: &str, message: String| Err((field.to_string(), message));
        let run = &self.run;
        let positive = [
            ("run.eigen_tol", run.eigen_tol),
            ("run.newton_tol", run.newton_tol),
            ("run.residual_tol", run.residual_tol),
            ("run.representation_tol", run.representation_tol),
            ("run.ds", run.ds),
            ("run.ds_max", run.ds_max),
            ("run.start_amplitude", run.start_amplitude),
            ("grid.radius", self.grid.radius),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return bad(field, format!("must be positive and finite, got {value}"));
            }
        }
        if run.max_points < 3 {
            return bad("run.max_points", format!("need at least 3 points, got {}", run.max_points));
        }
        if let Some(stage) = run.stages.iter().find(|s| !STAGES.contains(&s.as_str())) {
            return bad("run.stages", format!("unknown stage {stage:?}; expected one of {STAGES:?}"));
        }
        if let WeightConfig::Table { radii, values } = &self.weight {
            if radii.len() != values.len() || radii.len() < 2 {
                return bad("weight.radii", "table needs at least two radii and one value per radius".into());
            }
        }
        if let ForcingConfig::Gaussian { width, .. } = self.forcing {
            if width.is_nan() || width <= 0.0 {
                return bad("forcing.width", format!("must be positive, got {width}"));
            }
        }
        Ok(())
    }
}

/// Name of the `[section]` enclosing byte `offset`.
fn section_at(text: &str, offset: usize) -> String {
    text[..offset.min(text.len())]
        .lines()
        .rev()
        .find_map(|l| {
            let l = l.trim();
            l.strip_prefix('[').and_then(|r| r.strip_suffix(']')).map(str::to_string)
        })
        .unwrap_or_default()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str = r#"
[weight]
preset = "canonical"

[nonlinearity]
preset = "canonical"

[forcing]
kind = "zero"

[grid]
radius = 40.0
nodes = 2001
"#;

    fn parse(text: &str) -> Result<ScenarioConfig, CliError> {
        ScenarioConfig::parse(text, Path::new("test.toml"))
    }

    #[test]
    fn canonical_parses_with_defaults() {
        let c = parse(CANONICAL).unwrap();
        assert_eq!(c.grid.dim, 3);
        assert_eq!(c.grid.far_field, FarFieldConfig::RobinDecay);
        assert_eq!(c.run.seed, 0);
        assert_eq!(c.scenario_id(Path::new("dir/canonical.toml")), "canonical");
    }

    #[test]
    fn round_trip_is_identity() {
        let c = parse(CANONICAL).unwrap();
        let again = parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
    }

    #[test]
    fn empty_config_names_first_missing_section() {
        match parse("") {
            Err(CliError::Config { field, message, .. }) => {
                assert_eq!(field, "weight");
                assert!(message.contains("[weight]"));
            }
            other => panic!("{other:?}"),
        }
        let partial = "[weight]\npreset = \"canonical\"\n";
        assert!(matches!(parse(partial), Err(CliError::Config { field, .. }) if field == "nonlinearity"));
    }

    #[test]
    fn errors_carry_line_and_section() {
        let text = CANONICAL.replace("nodes = 2001", "nodes = \"many\"");
        match parse(&text) {
            Err(CliError::Config { line: Some(line), field, .. }) => {
                assert_eq!(field, "grid");
                assert_eq!(text.lines().nth(line - 1).unwrap().trim(), "nodes = \"many\"");
            }
            other => panic!("{other:?}"),
        }
        let text = CANONICAL.replace("preset = \"canonical\"\n\n[nonlinearity]", "preset = \"bogus\"\n\n[nonlinearity]");
        assert!(matches!(parse(&text), Err(CliError::Config { line: Some(_), .. })));
    }

    #[test]
    fn nonpositive_tolerance_rejected() {
        let text = format!("{CANONICAL}\n[run]\nnewton_tol = 0.0\n");
        assert!(matches!(parse(&text), Err(CliError::Config { field, .. }) if field == "run.newton_tol"));
        let text = format!("{CANONICAL}\n[run]\nstages = [\"eigen\", \"plot\"]\n");
        assert!(matches!(parse(&text), Err(CliError::Config { field, .. }) if field == "run.stages"));
    }
}
