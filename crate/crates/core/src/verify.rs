//! Checkable forms of the a priori estimates, the nonexistence threshold, the
//! Newtonian potential representation and the comparison principle.

use serde::Serialize;

use crate::error::Result;
use crate::nonlinear::NonlinearSystem;
use crate::problem::ProblemInstance;
use crate::radial::{dirichlet_energy, weighted_integral, weighted_inner, RadialGrid, TridiagonalOperator, WeightMass};
use crate::scalar::{max_abs, min_value, Real};
use crate::subsuper::build_subsolution;

/// Tolerance of the pointwise lower bound on negative parts, relative to `1 + ‖w‖∞`.
pub const NEGATIVE_PART_TOLERANCE: f64 = 1e-8;

/// Largest accepted E₀-relative gap between a solution and the potential of its source.
pub const REPRESENTATION_TOLERANCE: f64 = 1e-3;

/// Nonexistence threshold `Θ∫Pφ₁`, with the unweighted `Θ∫φ₁` over the
/// truncated ball for comparison (it grows without bound in `R` when `N ≤ 4`).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TauStar<T> {
    pub weighted: T,
    pub unweighted_truncated: T,
}

pub fn tau_star<T: Real>(instance: &ProblemInstance<T>) -> Result<TauStar<T>> {
    let phi = instance.phi()?;
    let theta = instance.nonlinearity.theta;
    let pphi = instance.mass.apply(phi);
    Ok(TauStar {
        weighted: theta * weighted_integral(&instance.grid, &pphi),
        unweighted_truncated: theta * weighted_integral(&instance.grid, phi),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NegativePartCheck<T> {
    pub pass: bool,
    /// `max (|u⁻| - |w|)` over nodes where `u < 0`, or 0 if there are none.
    pub max_violation: T,
}

pub fn check_negative_part<T: Real>(u: &[T], w: &[T]) -> NegativePartCheck<T> {
    let mut worst = T::zero();
    for (&x, &y) in u.iter().zip(w) {
        if x < T::zero() {
            worst = worst.max(x.abs() - y.abs());
        }
    }
    let bound = T::lit(NEGATIVE_PART_TOLERANCE) * (T::one() + max_abs(w));
    NegativePartCheck { pass: worst <= bound, max_violation: worst }
}

/// `∫P g(u⁺) φ₁`.
pub fn weighted_source_functional<T: Real>(instance: &ProblemInstance<T>, u: &[T]) -> Result<T> {
    let phi = instance.phi()?;
    let g = &instance.nonlinearity.g;
    let v: Vec<T> = (0..u.len())
        .map(|i| instance.mass.diag[i] * g(u[i].max(T::zero())) * phi[i])
        .collect();
    Ok(weighted_integral(&instance.grid, &v))
}

/// Dirichlet energy of `u⁺` with the exponent bookkeeping of the estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GradientBound<T> {
    pub value: T,
    /// `N/(N-2)`.
    pub sigma: T,
    /// `(σ-1)/σ`.
    pub beta: T,
    /// `β/(1-β) = 2/(N-2)`.
    pub gamma: T,
}

pub fn gradient_bound<T: Real>(grid: &RadialGrid<T>, u: &[T]) -> GradientBound<T> {
    let plus: Vec<T> = u.iter().map(|&x| x.max(T::zero())).collect();
    let n = T::from_count(grid.dim());
    let sigma = n / (n - T::lit(2.0));
    let beta = (sigma - T::one()) / sigma;
    GradientBound { value: dirichlet_energy(grid, &plus), sigma, beta, gamma: beta / (T::one() - beta) }
}

/// `max|u| + max r^{N-2}|u|`.
pub fn e0_norm<T: Real>(grid: &RadialGrid<T>, u: &[T]) -> T {
    let p = grid.dim() as i32 - 2;
    let tail = grid
        .nodes()
        .iter()
        .zip(u)
        .fold(T::zero(), |m, (&r, &x)| m.max(r.powi(p) * x.abs()));
    max_abs(u) + tail
}

/// Newtonian potential of a radial density truncated to the ball of radius `R`:
/// `u(r) = [r^{-(N-2)}∫₀^r s^{N-1}ρ ds + ∫_r^R sρ ds]/(N-2)`, by cumulative
/// trapezoid sums.
pub fn riesz_potential<T: Real>(grid: &RadialGrid<T>, rho: &[T]) -> Vec<T> {
    let n = grid.len();
    let r = grid.nodes();
    let dim = grid.dim() as i32;
    let half = T::lit(0.5);
    let mut inner = vec![T::zero(); n];
    for i in 1..n {
        let a = r[i - 1].powi(dim - 1) * rho[i - 1];
        let b = r[i].powi(dim - 1) * rho[i];
        inner[i] = inner[i - 1] + half * (a + b) * grid.spacing(i - 1);
    }
    let mut outer = vec![T::zero(); n];
    for i in (0..n - 1).rev() {
        let a = r[i] * rho[i];
        let b = r[i + 1] * rho[i + 1];
        outer[i] = outer[i + 1] + half * (a + b) * grid.spacing(i);
    }
    let scale = T::from_count(grid.dim() - 2);
    (0..n)
        .map(|i| {
            let near = if i == 0 { T::zero() } else { inner[i] / r[i].powi(dim - 2) };
            (near + outer[i]) / scale
        })
        .collect()
}

/// E₀ gap between `u` and the Newtonian potential of its own source
/// `ρ = P(g(u) + tφ₁ + f₁)`, relative to the E₀ norm of the potential of `|ρ|`.
/// That scale bounds `u` and does not collapse where `u` changes sign.
pub fn representation_residual<T: Real>(instance: &ProblemInstance<T>, t: T, u: &[T]) -> Result<T> {
    let phi = instance.phi()?;
    let g = &instance.nonlinearity.g;
    let rho: Vec<T> = (0..u.len())
        .map(|i| instance.mass.diag[i] * (g(u[i]) + t * phi[i] + instance.f1[i]))
        .collect();
    let potential = riesz_potential(&instance.grid, &rho);
    let diff: Vec<T> = u.iter().zip(&potential).map(|(&a, &b)| a - b).collect();
    let gap = e0_norm(&instance.grid, &diff);
    let magnitude: Vec<T> = rho.iter().map(|x| x.abs()).collect();
    let size = e0_norm(&instance.grid, &riesz_potential(&instance.grid, &magnitude));
    Ok(if size > T::zero() { gap / size } else { gap })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ComparisonCheck<T> {
    pub min_u: T,
    pub pass: bool,
}

/// Solves `(A - μM_P)u = rhs` after certifying definiteness and checks `u ≥ 0`.
pub fn check_comparison<T: Real>(
    a: &TridiagonalOperator<T>,
    mass: &WeightMass<T>,
    mu: T,
    rhs: &[T],
) -> Result<ComparisonCheck<T>> {
    let op = a.shifted(mass, -mu);
    let mut b = rhs.to_vec();
    op.constrain(&mut b);
    let u = op.solve_definite(&b)?;
    let min_u = min_value(&u);
    Ok(ComparisonCheck { min_u, pass: min_u >= -T::lit(1e-12) * max_abs(&u) })
}

/// One checked estimate. `pass` is `value ≤ bound + tolerance`.
#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckEntry {
    pub fn upper(name: &str, value: f64, bound: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, bound, tolerance, pass: value <= bound + tolerance }
    }

    /// Passes iff the value is finite.
    pub fn finite(name: &str, value: f64) -> Self {
        Self::upper(name, value, f64::MAX, 0.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub instance_id: String,
    pub solution_id: String,
    pub t: f64,
    pub entries: Vec<CheckEntry>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn entry(&self, name: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Tolerances for [`verify_solution`].
#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    /// Residual bound relative to the row scale.
    pub residual_tol: f64,
    pub representation_tol: f64,
    /// Tail window as fractions of `R`.
    pub tail_window: (f64, f64),
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { residual_tol: 1e-8, representation_tol: REPRESENTATION_TOLERANCE, tail_window: (0.5, 1.0) }
    }
}

/// Runs every per-solution check on `u` at forcing coefficient `t`.
pub fn verify_solution<T: Real>(
    instance: &ProblemInstance<T>,
    t: T,
    u: &[T],
    instance_id: &str,
    solution_id: &str,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    let sys = NonlinearSystem::new(instance, t)?;
    let residual = sys.residual_inf(u);
    let scale = sys.row_scale(u);
    let w = build_subsolution(instance, t)?;
    let neg = check_negative_part(u, &w);
    let tau = tau_star(instance)?;
    let source = weighted_source_functional(instance, u)?;
    let grad = gradient_bound(&instance.grid, u);
    let rep = representation_residual(instance, t, u)?;
    let grid = &instance.grid;
    let radius = grid.radius();
    let range = grid.window(T::lit(opts.tail_window.0) * radius, T::lit(opts.tail_window.1) * radius);
    let p = grid.dim() as i32 - 2;
    let tail = range.fold(T::zero(), |m, i| m.max(grid.nodes()[i].powi(p) * u[i].abs()));
    let tau_w = tau.weighted.as_f64();
    let entries = vec![
        CheckEntry::upper("residual", residual.as_f64(), opts.residual_tol * scale.as_f64(), 0.0),
        CheckEntry::upper(
            "negative_part",
            neg.max_violation.as_f64(),
            0.0,
            NEGATIVE_PART_TOLERANCE * (1.0 + max_abs(&w).as_f64()),
        ),
        CheckEntry::upper("tau_star", t.as_f64(), tau_w, 1e-6 * (1.0 + tau_w.abs())),
        CheckEntry::finite("source_functional", source.abs().as_f64()),
        CheckEntry::finite("gradient_energy", grad.value.as_f64()),
        CheckEntry::finite("sup_norm", max_abs(u).as_f64()),
        CheckEntry::upper("representation", rep.as_f64(), opts.representation_tol, 0.0),
        CheckEntry::finite("tail_decay", tail.as_f64()),
    ];
    Ok(VerificationReport { instance_id: instance_id.into(), solution_id: solution_id.into(), t: t.as_f64(), entries })
}

/// `∫P u φ₁`, the coordinate of `u` along the first eigenfunction.
pub fn eigen_coordinate<T: Real>(instance: &ProblemInstance<T>, u: &[T]) -> Result<T> {
    Ok(weighted_inner(&instance.grid, &instance.mass, u, instance.phi()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::{assemble_laplacian, build_grid, BoundaryCondition};
    use crate::problem::WeightSpec;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn shell_formula_closed_forms() {
        let g = build_grid(3, 40.0_f64, 4000, 1.0).unwrap();
        let rho = WeightSpec::<f64>::canonical().sample(&g);
        let u = riesz_potential(&g, &rho);
        assert_relative_eq!(u[0], 0.25, max_relative = 1e-3);
        let range = g.window(20.0, 40.0);
        for i in range {
            assert_relative_eq!(g.nodes()[i] * u[i], PI / 16.0, max_relative = 1e-3);
        }
        assert!(riesz_potential(&g, &vec![0.0; g.len()]).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn shell_formula_inverts_laplacian() {
        let mut errs = Vec::new();
        for n in [401usize, 801, 1601] {
            let g = build_grid(3, 40.0_f64, n, 1.0).unwrap();
            let rho: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
            let u = riesz_potential(&g, &rho);
            let a = assemble_laplacian(&g, BoundaryCondition::robin_decay());
            let au = a.apply(&u);
            // the trapezoid near the origin is only O(h²) in u, which the
            // Laplacian amplifies to O(1) at the first few nodes
            let err = g.window(1.0, 39.0).map(|i| (au[i] - rho[i]).abs()).fold(0.0, f64::max);
            errs.push(err);
        }
        let order = (errs[1] / errs[2]).log2();
        assert!(order >= 1.8, "{errs:?}");
    }

    #[test]
    fn e0_norm_examples() {
        let g = build_grid(3, 40.0_f64, 401, 1.0).unwrap();
        assert_eq!(e0_norm(&g, &vec![0.0; 401]), 0.0);
        let u: Vec<f64> = g.nodes().iter().map(|r| 1.0 / (1.0 + r)).collect();
        assert_relative_eq!(e0_norm(&g, &u), 1.0 + 40.0 / 41.0, max_relative = 1e-14);
        let u2: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        assert_eq!(e0_norm(&g, &u2), 2.0 * e0_norm(&g, &u));
    }

    #[test]
    fn negative_part_cases() {
        let w: Vec<f64> = vec![-1.0, -0.5, 0.0];
        let c = check_negative_part(&w, &w);
        assert!(c.pass && c.max_violation == 0.0);
        let c = check_negative_part(&[0.1, 0.2, 0.3], &w);
        assert!(c.pass);
        let c = check_negative_part(&[-2.0, 0.0, 0.0], &w);
        assert!(!c.pass && (c.max_violation - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_bookkeeping() {
        let g = build_grid(3, 40.0_f64, 101, 1.0).unwrap();
        let gb = gradient_bound(&g, &vec![-1.0; 101]);
        assert_eq!(gb.value, 0.0);
        assert_eq!(gb.sigma, 3.0);
        assert_relative_eq!(gb.beta, 2.0 / 3.0);
        assert_relative_eq!(gb.gamma, 2.0);
    }

    #[test]
    fn comparison_principle_signs() {
        let g = build_grid(3, 40.0_f64, 500, 1.0).unwrap();
        let a = assemble_laplacian(&g, BoundaryCondition::robin_decay());
        let m = WeightSpec::canonical().mass(&g).unwrap();
        let c = check_comparison(&a, &m, 5.0, &vec![0.0; 500]).unwrap();
        assert!(c.pass && c.min_u == 0.0);
        let rhs: Vec<f64> = g.nodes().iter().map(|r| (-r).exp()).collect();
        assert!(check_comparison(&a, &m, 5.0, &rhs).unwrap().pass);
        assert!(check_comparison(&a, &m, 7.0, &rhs).is_err());
    }
}
