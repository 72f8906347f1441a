//! Explicit sub- and supersolutions, the shifted monotone iteration between
//! them, and membership in the order set they bound.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nonlinear::{NonlinearSystem, SolutionProfile};
use crate::problem::ProblemInstance;
use crate::scalar::{max_abs, max_value, min_value, Real};

/// Subsolution: the solution of the linear problem
/// `-Δw = P(μ̲w - Θ + tφ₁ + f₁)`.
pub fn build_subsolution<T: Real>(instance: &ProblemInstance<T>, t: T) -> Result<Vec<T>> {
    let phi = instance.phi()?;
    let nl = &instance.nonlinearity;
    let op = instance.laplacian.shifted(&instance.mass, -nl.mu_lower);
    let mut rhs: Vec<T> = (0..phi.len())
        .map(|i| instance.mass.diag[i] * (t * phi[i] + instance.f1[i] - nl.theta))
        .collect();
    op.constrain(&mut rhs);
    op.solve_definite(&rhs)
}

/// Plateau supersolution with the forcing coefficients it is valid for.
#[derive(Debug, Clone, Serialize)]
pub struct Supersolution<T> {
    pub v: Vec<T>,
    /// `v` is a strict supersolution for every `t ≤ t_threshold`.
    pub t_threshold: T,
    /// `m = max{g(s) + f₁(x) : 0 ≤ s ≤ L}`.
    pub level: T,
    pub inner_radius: T,
    pub outer_radius: T,
    pub margin: T,
    /// The ramp `F` on the grid.
    pub ramp: Vec<T>,
}

/// Growth factor applied to the inner ramp radius after each failed attempt.
pub const RAMP_GROWTH: f64 = 1.5;

fn smoothstep<T: Real>(x: T) -> T {
    let x = x.max(T::zero()).min(T::one());
    x * x * (T::lit(3.0) - T::lit(2.0) * x)
}

/// Solves `-Δv = P·F` for a ramp `F` rising from 0 on `[0, R1]` to the level
/// `m` on `[R2, R]`, enlarging `R1` (keeping the ramp width) until `‖v‖∞ ≤ L`.
pub fn build_supersolution<T: Real>(instance: &ProblemInstance<T>, cap: T, inner: T, outer: T) -> Result<Supersolution<T>> {
    let radius = instance.grid.radius();
    if !(cap > T::zero()) {
        return Err(Error::InvalidParameter(format!("supersolution cap L = {cap} must be positive")));
    }
    if !(inner > T::zero() && inner < outer && outer <= radius) {
        return Err(Error::InvalidParameter(format!("ramp radii need 0 < {inner} < {outer} <= {radius}")));
    }
    let phi = instance.phi()?;
    let g = &instance.nonlinearity.g;
    let samples = 2001;
    let top_g = (0..samples)
        .map(|k| g(cap * T::from_count(k) / T::from_count(samples - 1)))
        .fold(T::neg_infinity(), T::max);
    let level = top_g + max_value(&instance.f1);
    let height = level.max(T::zero());
    let margin = T::lit(1e-6) * (T::one() + level.abs());
    let width = outer - inner;
    let a = &instance.laplacian;
    let mut r1 = inner;
    loop {
        let r2 = (r1 + width).min(radius);
        let ramp: Vec<T> = instance
            .grid
            .nodes()
            .iter()
            .map(|&r| height * smoothstep((r - r1) / (r2 - r1)))
            .collect();
        let mut rhs = instance.mass.apply(&ramp);
        a.constrain(&mut rhs);
        let v = a.solve(&rhs)?;
        if max_abs(&v) <= cap {
            let rows = if a.constrained_last() { v.len() - 1 } else { v.len() };
            let t_threshold = (0..rows)
                .map(|i| (ramp[i] - margin - level) / phi[i])
                .fold(T::infinity(), T::min);
            return Ok(Supersolution { v, t_threshold, level, inner_radius: r1, outer_radius: r2, margin, ramp });
        }
        r1 = r1 * T::lit(RAMP_GROWTH);
        if r1 > radius * T::lit(0.5) || r1 >= radius {
            return Err(Error::RampFailed { level: cap.as_f64() });
        }
    }
}

/// Lower and upper functions with `lower ≤ upper`.
#[derive(Debug, Clone, Serialize)]
pub struct OrderedInterval<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    /// `min(upper - lower)`.
    pub margin: T,
}

impl<T: Real> OrderedInterval<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        let margin = lower.iter().zip(&upper).fold(T::infinity(), |m, (&a, &b)| m.min(b - a));
        let slack = T::lit(1e-12) * (T::one() + max_abs(&upper).max(max_abs(&lower)));
        if margin < -slack {
            return Err(Error::Unordered { margin: margin.as_f64() });
        }
        Ok(Self { lower, upper, margin })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotoneStart {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy)]
pub struct MonotoneOptions<T> {
    /// Shift `c`; defaults to `1.05·max(0, sup g')` over the interval hull.
    pub shift: Option<T>,
    /// Stop when `‖u_{k+1} - u_k‖∞ ≤ tol`.
    pub tol: T,
    pub maxit: usize,
    pub start: MonotoneStart,
    /// Allowed ordering violation per step, relative to `1 + ‖upper‖∞`.
    pub order_tol: T,
}

impl<T: Real> Default for MonotoneOptions<T> {
    fn default() -> Self {
        Self { shift: None, tol: T::lit(1e-12), maxit: 100_000, start: MonotoneStart::Lower, order_tol: T::lit(1e-10) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneReport<T> {
    pub profile: SolutionProfile<T>,
    pub iterations: usize,
    pub shift: T,
    pub interval_margin: T,
    /// Largest step against the expected direction, or outside the interval, over all steps.
    pub max_order_violation: T,
    /// Limit lies in the interval within the order tolerance.
    pub within_interval: bool,
}

/// Default shift `1.05·max(0, sup g')` over `[min lower, max upper]`.
pub fn default_shift<T: Real>(instance: &ProblemInstance<T>, interval: &OrderedInterval<T>) -> T {
    let lo = min_value(&interval.lower);
    let hi = max_value(&interval.upper);
    T::lit(1.05) * instance.nonlinearity.max_slope(lo, hi, 4001).max(T::zero())
}

/// Shifted Picard scheme `(A + cM_P)u_{k+1} = P(g(u_k) + c·u_k + tφ₁ + f₁)`
/// from one end of the interval, asserting order at every step.
pub fn monotone_iterate<T: Real>(
    instance: &ProblemInstance<T>,
    t: T,
    interval: &OrderedInterval<T>,
    opts: &MonotoneOptions<T>,
) -> Result<MonotoneReport<T>> {
    let sys = NonlinearSystem::new(instance, t)?;
    let shift = opts.shift.unwrap_or_else(|| default_shift(instance, interval));
    let op = instance.laplacian.shifted(&instance.mass, shift);
    let p = &instance.mass.diag;
    let allowed = opts.order_tol * (T::one() + max_abs(&interval.upper));
    let mut u = match opts.start {
        MonotoneStart::Lower => interval.lower.clone(),
        MonotoneStart::Upper => interval.upper.clone(),
    };
    let mut worst = T::zero();
    for step in 1..=opts.maxit {
        let mut rhs = sys.source(&u);
        for i in 0..u.len() {
            rhs[i] = rhs[i] + shift * p[i] * u[i];
        }
        op.constrain(&mut rhs);
        let next = op.solve(&rhs)?;
        let mut change = T::zero();
        let mut violation = T::zero();
        for i in 0..u.len() {
            let d = next[i] - u[i];
            change = change.max(d.abs());
            let against = match opts.start {
                MonotoneStart::Lower => (-d).max(next[i] - interval.upper[i]),
                MonotoneStart::Upper => d.max(interval.lower[i] - next[i]),
            };
            violation = violation.max(against);
        }
        worst = worst.max(violation);
        if violation > allowed {
            return Err(Error::MonotonicityBroken { step, violation: violation.as_f64() });
        }
        u = next;
        if change <= opts.tol {
            let within = u
                .iter()
                .enumerate()
                .all(|(i, &x)| x >= interval.lower[i] - allowed && x <= interval.upper[i] + allowed);
            return Ok(MonotoneReport {
                profile: sys.profile(u),
                iterations: step,
                shift,
                interval_margin: interval.margin,
                max_order_violation: worst,
                within_interval: within,
            });
        }
    }
    Err(Error::NoConvergence { iterations: opts.maxit, residual: sys.residual_inf(&u).as_f64() })
}

/// Membership of `u` in the order set between two functions.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OrderReport<T> {
    /// `lower < u < upper` at every equation node.
    pub strictly_ordered: bool,
    pub min_lower_gap: T,
    pub min_upper_gap: T,
    /// `min r^{N-2}(u - lower)` over the tail window.
    pub lower_tail_gap: T,
    /// `min r^{N-2}(upper - u)` over the tail window.
    pub upper_tail_gap: T,
    pub member: bool,
}

pub fn check_order_interval<T: Real>(
    instance: &ProblemInstance<T>,
    u: &[T],
    interval: &OrderedInterval<T>,
    tail_window: (T, T),
) -> OrderReport<T> {
    let grid = &instance.grid;
    let rows = if instance.laplacian.constrained_last() { u.len() - 1 } else { u.len() };
    let (w, v) = (&interval.lower, &interval.upper);
    let mut min_lower_gap = T::infinity();
    let mut min_upper_gap = T::infinity();
    for i in 0..rows {
        min_lower_gap = min_lower_gap.min(u[i] - w[i]);
        min_upper_gap = min_upper_gap.min(v[i] - u[i]);
    }
    let p = grid.dim() as i32 - 2;
    let mut lower_tail_gap = T::infinity();
    let mut upper_tail_gap = T::infinity();
    for i in grid.window(tail_window.0, tail_window.1).filter(|&i| i < rows) {
        let s = grid.nodes()[i].powi(p);
        lower_tail_gap = lower_tail_gap.min(s * (u[i] - w[i]));
        upper_tail_gap = upper_tail_gap.min(s * (v[i] - u[i]));
    }
    let strictly_ordered = min_lower_gap > T::zero() && min_upper_gap > T::zero();
    let member = strictly_ordered && lower_tail_gap > T::zero() && upper_tail_gap > T::zero();
    OrderReport { strictly_ordered, min_lower_gap, min_upper_gap, lower_tail_gap, upper_tail_gap, member }
}

/// Signs of `F(u) = Au - P(g(u) + tφ₁ + f₁)` at the interval ends: `F(lower) ≤ 0`
/// and `F(upper) ≥ 0` within `tol·row_scale`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DefectReport<T> {
    /// `max F(lower)`.
    pub lower_max: T,
    /// `min F(upper)`.
    pub upper_min: T,
    pub scale: T,
    pub pass: bool,
}

pub fn check_defect_signs<T: Real>(instance: &ProblemInstance<T>, t: T, interval: &OrderedInterval<T>, tol: T) -> Result<DefectReport<T>> {
    let sys = NonlinearSystem::new(instance, t)?;
    let lower_max = max_value(&sys.residual(&interval.lower));
    let upper_min = min_value(&sys.residual(&interval.upper));
    let scale = sys.row_scale(&interval.lower).max(sys.row_scale(&interval.upper));
    let pass = lower_max <= tol * scale && upper_min >= -tol * scale;
    Ok(DefectReport { lower_max, upper_min, scale, pass })
}

/// Minimal solution for `t` below the plateau supersolution's threshold:
/// monotone iteration upward from the subsolution.
pub fn minimal_solution<T: Real>(
    instance: &ProblemInstance<T>,
    t: T,
    supersolution: &Supersolution<T>,
    opts: &MonotoneOptions<T>,
) -> Result<MonotoneReport<T>> {
    if t > supersolution.t_threshold {
        return Err(Error::InvalidParameter(format!(
            "t = {t} exceeds the supersolution threshold {}",
            supersolution.t_threshold
        )));
    }
    let w = build_subsolution(instance, t)?;
    let interval = OrderedInterval::new(w, supersolution.v.clone())?;
    monotone_iterate(instance, t, &interval, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{first_eigenpair, EigenOptions};
    use crate::problem::{NonlinearitySpec, WeightSpec};
    use crate::radial::{build_grid, BoundaryCondition};

    fn instance(g: NonlinearitySpec<f64>, n: usize) -> ProblemInstance<f64> {
        let grid = build_grid(3, 40.0, n, 1.0).unwrap();
        let p = ProblemInstance::new(WeightSpec::canonical(), g, grid, BoundaryCondition::robin_decay()).unwrap();
        let eig = first_eigenpair(&p.grid, &p.laplacian, &p.mass, &EigenOptions::default()).unwrap();
        p.attach_eigen_unchecked(eig)
    }

    #[test]
    fn zero_slack_zero_forcing_gives_zero_subsolution() {
        let p = instance(NonlinearitySpec::softplus(1.0, 10.0, 0.0), 200);
        let p = ProblemInstance { nonlinearity: p.nonlinearity.clone().with_theta(0.0), ..p };
        assert!(build_subsolution(&p, 0.0).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn negative_slack_forces_negative_subsolution() {
        let p = instance(NonlinearitySpec::softplus(2.0, 10.0, 1.0), 400);
        let w = build_subsolution(&p, 0.0).unwrap();
        assert!(w.iter().all(|&x| x < 0.0));
        let bad = ProblemInstance { nonlinearity: NonlinearitySpec::softplus(7.0, 10.0, 1.0), ..p };
        assert!(build_subsolution(&bad, 0.0).is_err());
    }

    #[test]
    fn zero_nonlinearity_supersolution() {
        let p = instance(NonlinearitySpec::zero(), 300);
        let s = build_supersolution(&p, 1.0, 2.0, 4.0).unwrap();
        assert_eq!(s.level, 0.0);
        assert!(s.v.iter().all(|&x| x == 0.0));
        assert!(s.t_threshold < 0.0);
    }

    #[test]
    fn interval_must_be_ordered() {
        assert!(matches!(OrderedInterval::new(vec![1.0, 2.0], vec![0.0, 3.0]), Err(Error::Unordered { .. })));
        assert_eq!(OrderedInterval::new(vec![0.0, 2.0], vec![1.0, 3.0]).unwrap().margin, 1.0);
    }

    #[test]
    fn midpoint_is_member_and_endpoint_is_not() {
        let p = instance(NonlinearitySpec::zero(), 200);
        let w: Vec<f64> = p.grid.nodes().iter().map(|&r| -1.0 / (1.0 + r)).collect();
        let v: Vec<f64> = p.grid.nodes().iter().map(|&r| 1.0 / (1.0 + r)).collect();
        let mid: Vec<f64> = w.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
        let iv = OrderedInterval::new(w.clone(), v).unwrap();
        assert!(check_order_interval(&p, &mid, &iv, (20.0, 40.0)).member);
        assert!(!check_order_interval(&p, &w, &iv, (20.0, 40.0)).member);
    }
}
