//! Estimate checks on computed solutions: controls, closed forms and domain doubling.

mod common;

use apfold::continuation::lower_branch_start;
use apfold::eigen::{first_eigenpair, EigenOptions};
use apfold::nonlinear::{newton_solve, NewtonOptions, NonlinearSystem};
use apfold::problem::{canonical_instance, NonlinearitySpec, ProblemInstance, WeightSpec};
use apfold::radial::{build_grid, BoundaryCondition};
use apfold::verify::{representation_residual, tau_star, verify_solution, weighted_source_functional, VerifyOptions};
use common::RADIUS;

fn linear_instance(slope: f64, intercept: f64, n: usize, radius: f64) -> ProblemInstance<f64> {
    let grid = build_grid(3, radius, n, 1.0).unwrap();
    let p = ProblemInstance::new(WeightSpec::canonical(), NonlinearitySpec::linear(slope, intercept), grid, BoundaryCondition::robin_decay()).unwrap();
    let e = first_eigenpair(&p.grid, &p.laplacian, &p.mass, &EigenOptions::default()).unwrap();
    p.attach_eigen_unchecked(e)
}

#[test]
fn affine_solution_matches_its_potential() {
    let inst = linear_instance(1.0, 0.5, 2001, RADIUS);
    let sys = NonlinearSystem::new(&inst, -2.0).unwrap();
    let u = newton_solve(&sys, &vec![0.0; inst.len()], &NewtonOptions::default()).unwrap().u;
    let gap = representation_residual(&inst, -2.0, &u).unwrap();
    assert!(gap <= 1e-3, "{gap}");
    let shifted: Vec<f64> = u.iter().map(|x| x + 1.0).collect();
    assert!(representation_residual(&inst, -2.0, &shifted).unwrap() > 0.1);
}

#[test]
fn zero_problem_has_zero_representation_gap() {
    let inst = linear_instance(0.0, 0.0, 200, RADIUS);
    assert_eq!(representation_residual(&inst, 0.0, &vec![0.0; 200]).unwrap(), 0.0);
}

#[test]
fn tau_star_is_linear_in_theta() {
    let inst = canonical_instance::<f64>(500, RADIUS).unwrap();
    let tau = tau_star(&inst).unwrap().weighted;
    let theta = inst.nonlinearity.theta;
    let doubled = ProblemInstance { nonlinearity: inst.nonlinearity.clone().with_theta(2.0 * theta), ..inst.clone() };
    assert_eq!(tau_star(&doubled).unwrap().weighted, 2.0 * tau);
    let zero = ProblemInstance { nonlinearity: inst.nonlinearity.clone().with_theta(0.0), ..inst.clone() };
    assert_eq!(tau_star(&zero).unwrap().weighted, 0.0);
    // unweighted value over the truncated ball is much larger than the weighted one
    assert!(tau_star(&inst).unwrap().unweighted_truncated > 10.0 * tau);
}

#[test]
fn source_functional_is_constant_for_nonpositive_u() {
    let inst = canonical_instance::<f64>(500, RADIUS).unwrap();
    let a = weighted_source_functional(&inst, &vec![-1.0; 500]).unwrap();
    let b = weighted_source_functional(&inst, &vec![-7.0; 500]).unwrap();
    assert_eq!(a, b);
    let g0 = inst.nonlinearity.eval(0.0);
    let phi = inst.phi().unwrap();
    let pphi: Vec<f64> = (0..500).map(|i| inst.mass.diag[i] * g0 * phi[i]).collect();
    assert!((a - apfold::radial::weighted_integral(&inst.grid, &pphi)).abs() < 1e-14 * a.abs().max(1.0));
}

#[test]
fn report_flags_follow_their_bounds() {
    // the representation gap is a discretization error; it drops below 1e-3 near n = 2000
    let inst = canonical_instance::<f64>(2001, RADIUS).unwrap();
    let good = lower_branch_start(&inst, -10.0, &NewtonOptions::default()).unwrap();
    let rep = verify_solution(&inst, -10.0, &good.u, "canonical", "lower", &VerifyOptions::default()).unwrap();
    assert!(rep.passed(), "{rep:?}");
    for e in &rep.entries {
        assert_eq!(e.pass, e.value <= e.bound + e.tolerance);
    }
    let broken: Vec<f64> = good.u.iter().map(|x| x + 1.0).collect();
    let rep = verify_solution(&inst, -10.0, &broken, "canonical", "shifted", &VerifyOptions::default()).unwrap();
    assert!(!rep.entry("residual").unwrap().pass);
    assert!(!rep.entry("representation").unwrap().pass);
    let past = verify_solution(&inst, 5.0, &good.u, "canonical", "past", &VerifyOptions::default()).unwrap();
    assert!(!past.entry("tau_star").unwrap().pass);
}

/// `max r|u|` on `[R/2, R]` for the lower solution at a fixed `t`.
fn tail_constant(radius: f64, n: usize) -> f64 {
    let inst = canonical_instance::<f64>(n, radius).unwrap();
    let u = lower_branch_start(&inst, -10.0, &NewtonOptions::default()).unwrap().u;
    inst.grid.window(0.5 * radius, radius).map(|i| inst.grid.nodes()[i] * u[i].abs()).fold(0.0, f64::max)
}

#[test]
fn tail_bound_is_stable_under_domain_doubling() {
    let c1 = tail_constant(RADIUS, 2001);
    let c2 = tail_constant(2.0 * RADIUS, 4001);
    assert!(c1.is_finite() && c2.is_finite());
    assert!((c1 - c2).abs() <= 0.05 * c1, "{c1} vs {c2}");
}
