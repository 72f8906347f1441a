//! One function per subcommand. Each writes its files through [`Output`] and
//! returns an error tagged with the failing stage.

use std::path::{Path, PathBuf};

use apfold::continuation::{analyze_fold, lower_branch_start, trace_lower_branch, two_solutions, ContinuationOptions, FoldAnalysisOptions};
use apfold::eigen::{first_eigenpair, EigenOptions};
use apfold::nonlinear::{deflated_solve, probe_nonexistence, random_starts, NewtonOptions, NonlinearSystem};
use apfold::problem::{
    check_p1, check_p2, check_sigma_growth, derive_slack_constants, NonlinearitySpec, ProblemInstance, WeightProfile, WeightSpec,
    SLACK_SAMPLES,
};
use apfold::radial::{build_grid, BoundaryCondition};
use apfold::verify::{tau_star, verify_solution, VerificationReport, VerifyOptions};
use apfold::Instance;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{FarFieldConfig, ForcingConfig, NonlinearityConfig, ScenarioConfig, WeightConfig};
use crate::emit::{emit_bifurcation, emit_solution, read_profile, Output, SolutionMeta};
use crate::error::{CliError, StageContext};

/// Range over which slack constants are sampled.
const SLACK_RANGE: (f64, f64) = (-50.0, 50.0);

pub fn weight_spec(config: &ScenarioConfig) -> WeightSpec<f64> {
    let profile = match &config.weight {
        WeightConfig::Canonical => WeightProfile::RationalDecay { power: 3.0 },
        WeightConfig::Rational { power } => WeightProfile::RationalDecay { power: *power },
        WeightConfig::Exponential { rate } => WeightProfile::Exponential { rate: *rate },
        WeightConfig::Constant { value } => WeightProfile::Constant { value: *value },
        WeightConfig::Table { radii, values } => WeightProfile::Table { radii: radii.clone(), values: values.clone() },
    };
    WeightSpec::new(config.grid.dim, profile)
}

fn boundary(config: &ScenarioConfig) -> BoundaryCondition {
    match config.grid.far_field {
        FarFieldConfig::RobinDecay => BoundaryCondition::robin_decay(),
        FarFieldConfig::Dirichlet => BoundaryCondition::dirichlet(),
    }
}

fn eigen_options(config: &ScenarioConfig) -> EigenOptions<f64> {
    EigenOptions { tol: config.run.eigen_tol, ..Default::default() }
}

fn newton_options(config: &ScenarioConfig) -> NewtonOptions<f64> {
    NewtonOptions { tol: config.run.newton_tol, ..Default::default() }
}

fn fold_options(config: &ScenarioConfig) -> FoldAnalysisOptions<f64> {
    FoldAnalysisOptions {
        t_start: config.run.t_start,
        continuation: ContinuationOptions {
            ds: config.run.ds,
            ds_max: config.run.ds_max,
            max_points: config.run.max_points,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn nonlinearity(config: &ScenarioConfig, lambda1: f64) -> NonlinearitySpec<f64> {
    match config.nonlinearity {
        NonlinearityConfig::Canonical => NonlinearitySpec::softplus(0.5 * lambda1, 2.0 * lambda1, 1.0),
        NonlinearityConfig::Softplus { mu_lower, mu_upper, offset, relative } => {
            let scale = if relative { lambda1 } else { 1.0 };
            NonlinearitySpec::softplus(mu_lower * scale, mu_upper * scale, offset)
        }
    }
}

/// Builds the discretized instance: grid, weight, eigenpair, nonlinearity with
/// its slack constant and the projected forcing.
pub fn build_instance(config: &ScenarioConfig) -> Result<Instance, CliError> {
    let g = &config.grid;
    let grid = build_grid(g.dim, g.radius, g.nodes, g.stretch).stage("instance")?;
    let base = ProblemInstance::new(weight_spec(config), NonlinearitySpec::zero(), grid, boundary(config)).stage("instance")?;
    let eig = first_eigenpair(&base.grid, &base.laplacian, &base.mass, &eigen_options(config)).stage("eigen")?;
    let nl = nonlinearity(config, eig.lambda1);
    let slack = derive_slack_constants(&*nl.g, nl.mu_lower, nl.mu_upper, SLACK_RANGE, SLACK_SAMPLES).stage("instance")?;
    let instance = ProblemInstance { nonlinearity: nl.with_theta(slack.theta), ..base }.attach_eigen(eig).stage("instance")?;
    match config.forcing {
        ForcingConfig::Zero => Ok(instance),
        ForcingConfig::Gaussian { amplitude, center, width } => {
            let f: Vec<f64> = instance.grid.nodes().iter().map(|&r| amplitude * (-((r - center) / width).powi(2)).exp()).collect();
            instance.with_forcing(&f).stage("instance")
        }
    }
}

/// What a subcommand produced, beyond its files.
pub struct Outcome {
    /// Set when a check ran to completion but did not pass.
    pub verification_failure: Option<String>,
}

impl Outcome {
    fn ok() -> Self {
        Self { verification_failure: None }
    }

    fn failed_if(failed: bool, message: impl FnOnce() -> String) -> Self {
        Self { verification_failure: failed.then(message) }
    }
}

#[derive(Serialize)]
struct HypothesisEntry {
    name: &'static str,
    pass: bool,
    detail: Value,
}

fn entry<S: Serialize>(name: &'static str, pass: bool, detail: &S) -> HypothesisEntry {
    HypothesisEntry { name, pass, detail: serde_json::to_value(detail).unwrap_or(Value::Null) }
}

fn failed_entry(name: &'static str, err: &apfold::Error) -> HypothesisEntry {
    HypothesisEntry { name, pass: false, detail: json!({ "error": err.to_string() }) }
}

/// Weight moments, potential bound, slack constants, growth and the eigenvalue
/// straddle. Hypothesis failures are recorded rather than aborting.
pub fn check(config: &ScenarioConfig, out: &mut Output) -> Result<Outcome, CliError> {
    let g = &config.grid;
    let grid = build_grid(g.dim, g.radius, g.nodes, g.stretch).stage("check")?;
    let weight = weight_spec(config);
    let mut entries = Vec::new();
    entries.push(match check_p1(&weight, &grid) {
        Ok(r) => entry("weight_moments", true, &r),
        Err(e) => failed_entry("weight_moments", &e),
    });
    let probes: Vec<f64> = [1e-6, 0.125, 0.25, 0.5, 1.0].iter().map(|f| f * g.radius).collect();
    entries.push(match check_p2(&weight, &grid, &probes) {
        Ok(r) => entry("potential_bound", r.plateau, &r),
        Err(e) => failed_entry("potential_bound", &e),
    });
    let instance = build_instance(config);
    match &instance {
        Ok(inst) => {
            let nl = &inst.nonlinearity;
            let lambda = inst.eigen().stage("check")?.lambda1;
            let straddle = nl.mu_lower < lambda && lambda < nl.mu_upper;
            entries.push(entry(
                "slopes_straddle_lambda1",
                straddle,
                &json!({ "mu_lower": nl.mu_lower, "lambda1": lambda, "mu_upper": nl.mu_upper }),
            ));
            let slack = derive_slack_constants(&*nl.g, nl.mu_lower, nl.mu_upper, SLACK_RANGE, SLACK_SAMPLES).stage("check")?;
            entries.push(entry("slack_constants", !slack.boundary_warning, &slack));
            entries.push(match check_sigma_growth(&*nl.g, g.dim, SLACK_RANGE.1, SLACK_SAMPLES) {
                Ok(r) => entry("sigma_growth", r.compliant, &r),
                Err(e) => failed_entry("sigma_growth", &e),
            });
            let tau = tau_star(inst).stage("check")?;
            entries.push(entry("tau_star", tau.weighted.is_finite(), &tau));
        }
        Err(CliError::Numerical { source, .. }) => entries.push(failed_entry("instance", source)),
        Err(_) => {}
    }
    let failed: Vec<&str> = entries.iter().filter(|e| !e.pass).map(|e| e.name).collect();
    out.write_json("check.json", &json!({ "entries": entries, "passed": failed.is_empty() }))?;
    Ok(Outcome::failed_if(!failed.is_empty(), || format!("hypotheses not met: {}", failed.join(", "))))
}

pub fn eigen(config: &ScenarioConfig, out: &mut Output) -> Result<Outcome, CliError> {
    let inst = build_instance(config)?;
    let eig = inst.eigen().stage("eigen")?;
    let p = inst.grid.dim() as i32 - 2;
    let rows = inst.grid.nodes().iter().zip(&eig.phi1).enumerate().map(|(i, (&r, &phi))| {
        vec![i.to_string(), r.to_string(), phi.to_string(), (r.powi(p) * phi).to_string()]
    });
    out.write_csv("eigen.csv", &["index", "r", "phi1", "decay_profile"], rows)?;
    let tau = tau_star(&inst).stage("eigen")?;
    out.write_json(
        "eigen.json",
        &json!({
            "lambda1": eig.lambda1,
            "second_eigenvalue": eig.second_eigenvalue,
            "non_simple": eig.non_simple,
            "residual": eig.residual,
            "normalization_residual": eig.normalization_residual,
            "iterations": eig.iterations,
            "decay_c1": eig.decay_c1,
            "decay_c2": eig.decay_c2,
            "plateau": eig.plateau,
            "theta": inst.nonlinearity.theta,
            "tau_star": tau.weighted,
            "tau_star_unweighted_truncated": tau.unweighted_truncated,
        }),
    )?;
    Ok(Outcome::ok())
}

fn require_t(config: &ScenarioConfig, origin: &Path) -> Result<f64, CliError> {
    config.run.t.ok_or_else(|| CliError::Config {
        path: origin.to_path_buf(),
        line: None,
        field: "run.t".into(),
        message: "this command needs a forcing coefficient".into(),
    })
}

/// Lower-branch solution at `run.t`, Newton from the subsolution.
pub fn solve(config: &ScenarioConfig, origin: &Path, out: &mut Output) -> Result<Outcome, CliError> {
    let t = require_t(config, origin)?;
    let inst = build_instance(config)?;
    let profile = lower_branch_start(&inst, t, &newton_options(config)).stage("solve")?;
    out.write_profile("solution.csv", inst.grid.nodes(), &profile.u)?;
    out.write_json("solution.json", &profile_summary(&profile))?;
    emit_solution(out, "solution", t, inst.grid.nodes(), &profile)?;
    Ok(Outcome::ok())
}

fn profile_summary(p: &apfold::Profile) -> Value {
    json!({
        "t": p.t,
        "residual_inf": p.residual_inf,
        "e0_norm": p.e0_norm,
        "decay_coeff": p.decay_coeff,
        "stability_mu": p.stability_mu,
        "u_at_0": p.u.first(),
    })
}

fn emit_branch_solutions(out: &mut Output, inst: &Instance, branch: &apfold::Branch) -> Result<(), CliError> {
    for (k, p) in branch.points.iter().enumerate() {
        let sys = NonlinearSystem::new(inst, p.t).stage("branch")?;
        let profile = sys.profile(p.u.clone());
        let profile = apfold::Profile { stability_mu: Some(p.stability_mu), ..profile };
        emit_solution(out, &format!("point_{k:04}"), p.t, inst.grid.nodes(), &profile)?;
    }
    Ok(())
}

pub fn branch(config: &ScenarioConfig, out: &mut Output) -> Result<Outcome, CliError> {
    let inst = build_instance(config)?;
    let trace = trace_lower_branch(&inst, &fold_options(config)).stage("branch")?;
    emit_bifurcation(out, "branch.csv", &trace.branch.points)?;
    emit_branch_solutions(out, &inst, &trace.branch)?;
    out.write_json(
        "branch.json",
        &json!({
            "points": trace.branch.len(),
            "stop": trace.branch.stop,
            "t_start": trace.t_start,
            "tau_star": trace.tau_star,
            "turning_index": trace.branch.turning_index(),
        }),
    )?;
    Ok(Outcome::ok())
}

pub fn alpha(config: &ScenarioConfig, out: &mut Output) -> Result<Outcome, CliError> {
    let inst = build_instance(config)?;
    let fa = analyze_fold(&inst, &fold_options(config)).stage("alpha")?;
    emit_bifurcation(out, "branch.csv", &fa.branch.points)?;
    let alpha = fa.arclength.alpha;
    let tolerance = 1e-3 * (1.0 + alpha.abs());
    let agree = fa.agreement_gap <= tolerance;
    let below = alpha <= fa.tau_star && fa.bisection.alpha <= fa.tau_star;
    out.write_json(
        "alpha.json",
        &json!({
            "alpha": alpha,
            "alpha_arclength": alpha,
            "alpha_bisection": fa.bisection.alpha,
            "alpha_fit": fa.arclength.alpha_fit,
            "agreement_gap": fa.agreement_gap,
            "agreement_tolerance": tolerance,
            "agree": agree,
            "tau_star": fa.tau_star,
            "below_tau_star": below,
            "bisection_capped": fa.bisection.capped,
            "stability_mu_at_fold": fa.arclength.stability_mu,
            "t_start": fa.t_start,
            "branch_points": fa.branch.len(),
        }),
    )?;
    out.write_profile("fold.csv", inst.grid.nodes(), &fa.arclength.u_fold)?;
    Ok(Outcome::failed_if(!(agree && below), || {
        format!("fold estimates disagree or exceed tau*: gap {:.3e}, alpha {alpha}, tau* {}", fa.agreement_gap, fa.tau_star)
    }))
}

/// Both solutions below the fold, their order-set membership, a deflated
/// Newton cross-check of the upper one and a nonexistence probe past `τ*`.
pub fn two(config: &ScenarioConfig, out: &mut Output) -> Result<Outcome, CliError> {
    let inst = build_instance(config)?;
    let fa = analyze_fold(&inst, &fold_options(config)).stage("two")?;
    let alpha = fa.arclength.alpha;
    let t = config.run.t.unwrap_or(alpha - 0.5 * (1.0 + alpha.abs()));
    let pair = two_solutions(&inst, t, &fa.branch, &fa.arclength).stage("two")?;
    emit_solution(out, "lower", t, inst.grid.nodes(), &pair.lower)?;
    emit_solution(out, "upper", t, inst.grid.nodes(), &pair.upper)?;

    let sys = NonlinearSystem::new(&inst, t).stage("two")?;
    let opts = NewtonOptions { maxit: 200, ..newton_options(config) };
    let known = std::slice::from_ref(&pair.lower.u);
    let phi = inst.phi().stage("two")?;
    let deflated = [0.0, 1.0, 3.0, 10.0].iter().find_map(|&k| {
        let u0: Vec<f64> = phi.iter().map(|p| k * p).collect();
        deflated_solve(&sys, known, &u0, &opts).ok()
    });
    let upper_norm = pair.upper.u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let deflated_gap = deflated.as_ref().map(|d| {
        d.u.iter().zip(&pair.upper.u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / upper_norm
    });

    let probe_t = fa.tau_star + 1.0;
    let probe_sys = NonlinearSystem::new(&inst, probe_t).stage("two")?;
    let newton_starts = random_starts(&inst.grid, config.run.newton_starts, config.run.seed, config.run.start_amplitude);
    let picard_starts = random_starts(&inst.grid, config.run.picard_starts, config.run.seed + 1, config.run.start_amplitude);
    let probe = probe_nonexistence(&probe_sys, &newton_starts, &picard_starts, &newton_options(config), 2000);

    let (mu1, mu2) = (pair.lower.stability_mu, pair.upper.stability_mu);
    let separated = pair.separation >= 1e-3 * (1.0 + pair.lower.u.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    let signs = matches!((mu1, mu2), (Some(a), Some(b)) if a > 0.0 && b < 0.0);
    let reproduced = deflated_gap.is_some_and(|g| g <= 1e-6);
    let pass = separated && signs && reproduced && pair.lower_order.member && !pair.upper_order.member && !probe.any_converged();
    out.write_json(
        "two.json",
        &json!({
            "t": t,
            "alpha": alpha,
            "separation": pair.separation,
            "lower": { "summary": profile_summary(&pair.lower), "order": pair.lower_order },
            "upper": { "summary": profile_summary(&pair.upper), "order": pair.upper_order },
            "t_upper_function": pair.t_upper_function,
            "deflated_relative_gap": deflated_gap,
            "nonexistence_probe": probe,
            "pass": pass,
        }),
    )?;
    Ok(Outcome::failed_if(!pass, || "two-solution checks failed; see two.json".into()))
}

#[derive(Serialize)]
struct VerifySummary {
    total: usize,
    passed: usize,
    failed: Vec<String>,
    /// Failure count per check name.
    failed_checks: std::collections::BTreeMap<String, usize>,
}

/// Verifies every solution sidecar in `dir` against the scenario's instance.
pub fn verify(config: &ScenarioConfig, scenario: &str, dir: &Path, out: &mut Output) -> Result<Outcome, CliError> {
    let inst = build_instance(config)?;
    let mut metas: Vec<(PathBuf, SolutionMeta)> = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(CliError::io(dir))?;
    for e in entries {
        let path = e.map_err(CliError::io(dir))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            let text = std::fs::read_to_string(&path).map_err(CliError::io(&path))?;
            let meta: SolutionMeta = serde_json::from_str(&text).map_err(|e| CliError::Config {
                path: path.clone(),
                line: Some(e.line()),
                field: String::new(),
                message: e.to_string(),
            })?;
            metas.push((path, meta));
        }
    }
    metas.sort_by(|a, b| a.1.id.cmp(&b.1.id));
    let mut profiles = Vec::with_capacity(metas.len());
    for (path, meta) in &metas {
        let csv = path.parent().unwrap_or(dir).join(&meta.profile);
        let u = read_profile(&csv)?;
        if u.len() != inst.len() {
            return Err(CliError::Config {
                path: csv,
                line: None,
                field: "u".into(),
                message: format!("{} values for a {}-node grid", u.len(), inst.len()),
            });
        }
        profiles.push(u);
    }
    let opts = VerifyOptions {
        residual_tol: config.run.residual_tol,
        representation_tol: config.run.representation_tol,
        ..Default::default()
    };
    let reports: Vec<VerificationReport> = metas
        .par_iter()
        .zip(&profiles)
        .map(|((_, meta), u)| verify_solution(&inst, meta.t, u, scenario, &meta.id, &opts))
        .collect::<apfold::Result<_>>()
        .stage("verify")?;
    let mut failed_checks = std::collections::BTreeMap::new();
    for r in &reports {
        for e in r.entries.iter().filter(|e| !e.pass) {
            *failed_checks.entry(e.name.clone()).or_insert(0) += 1;
        }
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed()).map(|r| r.solution_id.clone()).collect();
    let summary = VerifySummary { total: reports.len(), passed: reports.len() - failed.len(), failed: failed.clone(), failed_checks };
    out.write_json("report.json", &json!({ "reports": reports, "summary": summary }))?;
    Ok(Outcome::failed_if(!failed.is_empty(), || format!("{} of {} solutions failed: {}", failed.len(), reports.len(), failed.join(", "))))
}

/// Runs one named stage.
pub fn run_stage(stage: &str, config: &ScenarioConfig, origin: &Path, out: &mut Output) -> Result<Outcome, CliError> {
    match stage {
        "check" => check(config, out),
        "eigen" => eigen(config, out),
        "solve" => solve(config, origin, out),
        "branch" => branch(config, out),
        "alpha" => alpha(config, out),
        "two" => two(config, out),
        other => Err(CliError::Config {
            path: origin.to_path_buf(),
            line: None,
            field: "run.stages".into(),
            message: format!("unknown stage {other:?}"),
        }),
    }
}
