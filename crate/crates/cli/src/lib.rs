//! Scenario driver behind the `apfold` binary: config loading, stage
//! orchestration and artifact emission.

pub mod commands;
pub mod config;
pub mod emit;
pub mod error;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::emit::{resolve_output_dir, Output, RunManifest};
use crate::error::CliError;

/// A finished run: its manifest and any check that did not pass.
#[derive(Debug)]
pub struct RunResult {
    pub manifest: RunManifest,
    pub output_dir: PathBuf,
    pub verification_failure: Option<String>,
}

impl RunResult {
    pub fn exit_code(&self) -> u8 {
        if self.verification_failure.is_some() {
            3
        } else {
            0
        }
    }
}

/// What to run for one scenario.
#[derive(Debug, Clone)]
pub enum Request {
    Stages(Vec<String>),
    Verify { solutions: Option<PathBuf> },
}

/// Loads the config, runs the requested stages in order and writes the manifest.
/// A failed check stops later stages but still produces a manifest.
pub fn run_scenario(config_path: &Path, request: &Request, out_flag: Option<&Path>) -> Result<RunResult, CliError> {
    let config = ScenarioConfig::load(config_path)?;
    let scenario = config.scenario_id(config_path);
    let dir = resolve_output_dir(out_flag, &config, &scenario);
    if config.run.workers == 0 {
        return run_stages(&config, config_path, &scenario, dir, request);
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.run.workers).build().map_err(|e| CliError::Config {
        path: config_path.to_path_buf(),
        line: None,
        field: "run.workers".into(),
        message: e.to_string(),
    })?;
    pool.install(|| run_stages(&config, config_path, &scenario, dir, request))
}

fn run_stages(config: &ScenarioConfig, config_path: &Path, scenario: &str, dir: PathBuf, request: &Request) -> Result<RunResult, CliError> {
    let mut out = Output::create(dir.clone())?;
    let mut failure = None;
    match request {
        Request::Stages(stages) => {
            for stage in stages {
                let outcome = out.timed(stage, |o| commands::run_stage(stage, config, config_path, o))?;
                if outcome.verification_failure.is_some() {
                    failure = outcome.verification_failure;
                    break;
                }
            }
        }
        Request::Verify { solutions } => {
            let source = solutions.clone().unwrap_or_else(|| dir.join("solutions"));
            let outcome = out.timed("verify", |o| commands::verify(config, scenario, &source, o))?;
            failure = outcome.verification_failure;
        }
    }
    let manifest = out.finish(scenario, config)?;
    Ok(RunResult { manifest, output_dir: dir, verification_failure: failure })
}

#[derive(Debug, Serialize)]
pub struct SweepEntry {
    pub config: PathBuf,
    pub exit_code: u8,
    pub output_dir: Option<PathBuf>,
    pub message: Option<String>,
}

/// Runs every config's `run.stages` on a bounded pool; entries keep input order.
/// With `out_base`, scenario `s` writes to `out_base/s`.
pub fn sweep(configs: &[PathBuf], workers: usize, out_base: Option<&Path>) -> Result<Vec<SweepEntry>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| CliError::Config {
        path: PathBuf::new(),
        line: None,
        field: "workers".into(),
        message: e.to_string(),
    })?;
    let entries = pool.install(|| {
        configs
            .par_iter()
            .map(|path| {
                let run = || -> Result<RunResult, CliError> {
                    let config = ScenarioConfig::load(path)?;
                    let dir = out_base.map(|b| b.join(config.scenario_id(path)));
                    run_scenario(path, &Request::Stages(config.run.stages.clone()), dir.as_deref())
                };
                match run() {
                    Ok(r) => SweepEntry {
                        config: path.clone(),
                        exit_code: r.exit_code(),
                        output_dir: Some(r.output_dir),
                        message: r.verification_failure,
                    },
                    Err(e) => SweepEntry { config: path.clone(), exit_code: e.exit_code(), output_dir: None, message: Some(e.to_string()) },
                }
            })
            .collect()
    });
    Ok(entries)
}
