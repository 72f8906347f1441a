//! Output directory, CSV/JSON writers and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use apfold::continuation::BranchPoint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, ScenarioConfig};
use crate::error::CliError;

/// Environment variable naming the base output directory.
pub const OUTPUT_DIR_VAR: &str = "APFOLD_OUTPUT_DIR";

/// Column order of `branch.csv`.
pub const BRANCH_COLUMNS: [&str; 9] =
    ["index", "arclength", "t", "u_at_0", "e0_norm", "coordinate", "stability_mu", "negative_modes", "residual_inf"];

/// `--out` wins, then `$APFOLD_OUTPUT_DIR/<scenario>`, then `run.output_dir`,
/// then `out/<scenario>`.
pub fn resolve_output_dir(flag: Option<&Path>, config: &ScenarioConfig, scenario: &str) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Some(base) = std::env::var_os(OUTPUT_DIR_VAR).filter(|v| !v.is_empty()) {
        return PathBuf::from(base).join(scenario);
    }
    config.run.output_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(scenario))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versions {
    pub apfold: String,
    pub apfold_cli: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub versions: Versions,
    pub config_hash: String,
    pub seed: u64,
    /// Sorted by path.
    pub files: Vec<FileEntry>,
    pub stages: Vec<StageTiming>,
}

/// Collects every file written during a run so the manifest can list them.
pub struct Output {
    dir: PathBuf,
    files: Vec<FileEntry>,
    stages: Vec<StageTiming>,
}

fn csv_float(x: f64) -> String {
    // shortest representation that round-trips
    format!("{x}")
}

impl Output {
    pub fn create(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
        Ok(Self { dir, files: Vec::new(), stages: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        fs::write(&path, bytes).map_err(CliError::io(&path))?;
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry { path: rel.to_string(), sha256: hex(&Sha256::digest(bytes)), bytes: bytes.len() });
        Ok(path)
    }

    pub fn write_json<S: Serialize>(&mut self, rel: &str, value: &S) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.write_bytes(rel, text.as_bytes())
    }

    pub fn write_csv(&mut self, rel: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_io = |e: csv::Error| CliError::Io { path: self.dir.join(rel), source: e.into() };
        w.write_record(header).map_err(to_io)?;
        for row in rows {
            w.write_record(&row).map_err(to_io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io { path: self.dir.join(rel), source: e.into_error() })?;
        self.write_bytes(rel, &bytes)
    }

    /// `index,r,u` for one grid function.
    pub fn write_profile(&mut self, rel: &str, nodes: &[f64], u: &[f64]) -> Result<PathBuf, CliError> {
        let rows = nodes
            .iter()
            .zip(u)
            .enumerate()
            .map(|(i, (r, x))| vec![i.to_string(), csv_float(*r), csv_float(*x)]);
        self.write_csv(rel, &["index", "r", "u"], rows)
    }

    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T, CliError>) -> Result<T, CliError> {
        let start = Instant::now();
        let out = f(self);
        self.stages.push(StageTiming { stage: stage.to_string(), seconds: start.elapsed().as_secs_f64() });
        out
    }

    /// Writes `manifest.json`, keeping entries from earlier runs of the same
    /// config in this directory unless a file was rewritten.
    pub fn finish(mut self, scenario: &str, config: &ScenarioConfig) -> Result<RunManifest, CliError> {
        let path = self.dir.join("manifest.json");
        let hash = config.hash();
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(old) = serde_json::from_str::<RunManifest>(&text) {
                if old.config_hash == hash {
                    for f in old.files {
                        if !self.files.iter().any(|g| g.path == f.path) {
                            self.files.push(f);
                        }
                    }
                }
            }
        }
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            scenario: scenario.to_string(),
            versions: Versions { apfold: apfold::VERSION.to_string(), apfold_cli: env!("CARGO_PKG_VERSION").to_string() },
            config_hash: hash,
            seed: config.run.seed,
            files: self.files,
            stages: self.stages,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(CliError::io(&path))?;
        Ok(manifest)
    }
}

/// Branch rows in arclength order, columns as in [`BRANCH_COLUMNS`].
pub fn branch_rows(points: &[BranchPoint<f64>]) -> Vec<Vec<String>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            vec![
                i.to_string(),
                csv_float(p.arclength),
                csv_float(p.t),
                csv_float(p.u_at_0),
                csv_float(p.e0_norm),
                csv_float(p.coordinate),
                csv_float(p.stability_mu),
                p.negative_modes.to_string(),
                csv_float(p.residual_inf),
            ]
        })
        .collect()
}

pub fn emit_bifurcation(out: &mut Output, rel: &str, points: &[BranchPoint<f64>]) -> Result<PathBuf, CliError> {
    if points.is_empty() {
        return Err(CliError::Numerical { stage: "branch", source: apfold::Error::NoFoldInBranch });
    }
    out.write_csv(rel, &BRANCH_COLUMNS, branch_rows(points))
}

/// Sidecar for a stored solution; `verify` reads these.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionMeta {
    pub id: String,
    pub t: f64,
    /// Profile CSV, relative to the sidecar.
    pub profile: String,
    pub nodes: usize,
    pub residual_inf: f64,
    pub e0_norm: f64,
    pub stability_mu: Option<f64>,
}

/// Writes `solutions/<id>.csv` and `solutions/<id>.json`.
pub fn emit_solution(out: &mut Output, id: &str, t: f64, nodes: &[f64], profile: &apfold::Profile) -> Result<(), CliError> {
    let csv = format!("{id}.csv");
    out.write_profile(&format!("solutions/{csv}"), nodes, &profile.u)?;
    let meta = SolutionMeta {
        id: id.to_string(),
        t,
        profile: csv,
        nodes: nodes.len(),
        residual_inf: profile.residual_inf,
        e0_norm: profile.e0_norm,
        stability_mu: profile.stability_mu,
    };
    out.write_json(&format!("solutions/{id}.json"), &meta)?;
    Ok(())
}

/// Reads the `u` column of a profile CSV.
pub fn read_profile(path: &Path) -> Result<Vec<f64>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e.into() })?;
    let bad = |message: String| CliError::Config { path: path.to_path_buf(), line: None, field: "u".into(), message };
    let column = r
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .position(|h| h == "u")
        .ok_or_else(|| bad("profile has no `u` column".into()))?;
    let mut u = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let x = rec.get(column).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| CliError::Config {
            path: path.to_path_buf(),
            line: Some(k + 2),
            field: "u".into(),
            message: "not a number".into(),
        })?;
        u.push(x);
    }
    Ok(u)
}
