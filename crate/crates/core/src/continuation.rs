//! Pseudo-arclength continuation in the forcing coefficient, fold location by
//! two independent estimators, and extraction of the two solutions below it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nonlinear::{newton_solve, NewtonOptions, NonlinearSystem, SolutionProfile};
use crate::problem::ProblemInstance;
use crate::radial::weighted_inner;
use crate::scalar::{all_finite, max_abs, Real};
use crate::subsuper::{build_subsolution, check_order_interval, OrderReport, OrderedInterval};
use crate::verify::{e0_norm, tau_star};

#[derive(Debug, Clone, Serialize)]
pub struct BranchPoint<T> {
    pub t: T,
    pub u: Vec<T>,
    /// Smallest eigenvalue of the pencil `(J(u), M_P)`.
    pub stability_mu: T,
    /// Number of negative pivots of `J(u)`.
    pub negative_modes: usize,
    pub arclength: T,
    pub residual_inf: T,
    pub u_at_0: T,
    pub e0_norm: T,
    /// `∫P u φ₁`.
    pub coordinate: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    WindowExit,
    MaxPoints,
    StepUnderflow,
}

#[derive(Debug, Clone, Serialize)]
pub struct Branch<T> {
    pub points: Vec<BranchPoint<T>>,
    pub stop: StopReason,
}

impl<T: Real> Branch<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Fails with `StepUnderflow` if the trace ended by step underflow.
    pub fn ensure_complete(&self) -> Result<()> {
        if self.stop == StopReason::StepUnderflow {
            let last = self.points.last();
            return Err(Error::StepUnderflow {
                t: last.map(|p| p.t.as_f64()).unwrap_or(f64::NAN),
                points: self.points.len(),
            });
        }
        Ok(())
    }

    /// Index of the interior point with the largest `t`, if it is a local maximum.
    pub fn turning_index(&self) -> Option<usize> {
        let n = self.points.len();
        if n < 3 {
            return None;
        }
        let k = (0..n).max_by(|&a, &b| self.points[a].t.partial_cmp(&self.points[b].t).unwrap())?;
        (k > 0 && k + 1 < n).then_some(k)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ContinuationOptions<T> {
    /// Initial signed step; positive steps start in the direction of increasing `t`.
    pub ds: T,
    pub ds_min: T,
    pub ds_max: T,
    /// Stop once `t` leaves this interval; unbounded if `None`.
    pub t_window: Option<(T, T)>,
    pub max_points: usize,
    /// Corrector convergence when `‖F‖∞ ≤ tol·row_scale`.
    pub tol: T,
    pub max_corrector: usize,
    /// Corrector iteration count regarded as easy for step growth.
    pub easy_iterations: usize,
    /// Compute the pencil stability eigenvalue at every point.
    pub stability: bool,
}

impl<T: Real> Default for ContinuationOptions<T> {
    fn default() -> Self {
        Self {
            ds: T::lit(0.1),
            ds_min: T::lit(1e-8),
            ds_max: T::one(),
            t_window: None,
            max_points: 2000,
            tol: T::lit(1e-11),
            max_corrector: 10,
            easy_iterations: 3,
            stability: true,
        }
    }
}

/// Inner product `Σ D P u v + t s` on `(u, t)` pairs.
struct Metric<'a, T: Real> {
    instance: &'a ProblemInstance<T>,
}

impl<T: Real> Metric<'_, T> {
    fn inner(&self, u: &[T], v: &[T]) -> T {
        weighted_inner(&self.instance.grid, &self.instance.mass, u, v)
    }

    fn normalize(&self, u: &mut [T], t: &mut T) -> bool {
        let norm = (self.inner(u, u) + *t * *t).sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return false;
        }
        for x in u.iter_mut() {
            *x = *x / norm;
        }
        *t = *t / norm;
        true
    }
}

/// Unit tangent `(J⁻¹Pφ, 1)` normalized in the branch metric.
fn tangent<T: Real>(sys: &NonlinearSystem<'_, T>, metric: &Metric<'_, T>, u: &[T]) -> Option<(Vec<T>, T)> {
    let mut du = sys.jacobian(u).solve(sys.forcing_direction()).ok()?;
    let mut dt = T::one();
    metric.normalize(&mut du, &mut dt).then_some((du, dt))
}

struct Corrected<T> {
    u: Vec<T>,
    t: T,
    iterations: usize,
}

/// Newton on `F(u, t) = 0`, `⟨τ_u, u - u₀⟩ + τ_t(t - t₀) = ds` by block
/// elimination of the bordered system.
#[allow(clippy::too_many_arguments)]
fn correct<T: Real>(
    sys: &NonlinearSystem<'_, T>,
    metric: &Metric<'_, T>,
    base: (&[T], T),
    tangent: (&[T], T),
    ds: T,
    guess: (Vec<T>, T),
    tol: T,
    maxit: usize,
) -> Option<Corrected<T>> {
    let (mut u, mut t) = guess;
    let (tu, tt) = tangent;
    for it in 0..=maxit {
        let s = sys.at(t);
        let f = s.residual(&u);
        let diff: Vec<T> = u.iter().zip(base.0).map(|(&a, &b)| a - b).collect();
        let n = metric.inner(tu, &diff) + tt * (t - base.1) - ds;
        if !all_finite(&f) || !n.is_finite() {
            return None;
        }
        if max_abs(&f) <= tol * s.row_scale(&u) && n.abs() <= tol * (T::one() + ds.abs()) {
            return Some(Corrected { u, t, iterations: it });
        }
        if it == maxit {
            break;
        }
        let j = s.jacobian(&u);
        let neg: Vec<T> = f.iter().map(|&x| -x).collect();
        let a = j.solve(&neg).ok()?;
        let b = j.solve(s.forcing_direction()).ok()?;
        let den = metric.inner(tu, &b) + tt;
        if !(den.abs() > T::min_positive_value()) {
            return None;
        }
        let dt = (-n - metric.inner(tu, &a)) / den;
        for i in 0..u.len() {
            u[i] = u[i] + a[i] + dt * b[i];
        }
        t = t + dt;
    }
    None
}

fn make_point<T: Real>(
    sys: &NonlinearSystem<'_, T>,
    metric: &Metric<'_, T>,
    u: Vec<T>,
    arclength: T,
    stability: bool,
) -> BranchPoint<T> {
    let (stability_mu, negative_modes) = if stability {
        match sys.stability(&u) {
            Ok(e) => (e.value, e.negative_modes),
            Err(_) => (T::nan(), sys.jacobian(&u).inertia().negative),
        }
    } else {
        (T::nan(), sys.jacobian(&u).inertia().negative)
    };
    let phi = sys.instance.phi().expect("system construction requires an eigenpair");
    BranchPoint {
        t: sys.t,
        residual_inf: sys.residual_inf(&u),
        u_at_0: u[0],
        e0_norm: e0_norm(sys.grid(), &u),
        coordinate: metric.inner(&u, phi),
        stability_mu,
        negative_modes,
        arclength,
        u,
    }
}

/// Traces the solution branch through `(t_start, u_start)`.
pub fn trace_branch<T: Real>(
    instance: &ProblemInstance<T>,
    t_start: T,
    u_start: &[T],
    opts: &ContinuationOptions<T>,
) -> Result<Branch<T>> {
    let sys = NonlinearSystem::new(instance, t_start)?;
    let residual = sys.residual_inf(u_start);
    if !(residual <= T::lit(1e-8) * sys.row_scale(u_start)) {
        return Err(Error::InitialPointInvalid { residual: residual.as_f64() });
    }
    let newton = NewtonOptions { tol: opts.tol, ..NewtonOptions::default() };
    let u0 = newton_solve(&sys, u_start, &newton)
        .map(|r| r.u)
        .unwrap_or_else(|_| u_start.to_vec());
    let metric = Metric { instance };
    let (mut tu, mut tt) = tangent(&sys, &metric, &u0).ok_or(Error::SingularOperator { row: 0, pivot: 0.0 })?;
    if opts.ds < T::zero() {
        tu.iter_mut().for_each(|x| *x = -*x);
        tt = -tt;
    }
    let mut ds = opts.ds.abs();
    let mut points = vec![make_point(&sys, &metric, u0, T::zero(), opts.stability)];
    let mut easy = 0usize;
    let stop = loop {
        if points.len() >= opts.max_points {
            break StopReason::MaxPoints;
        }
        let last = points.last().expect("branch is never empty");
        let (bu, bt) = (last.u.clone(), last.t);
        let guess: Vec<T> = bu.iter().zip(&tu).map(|(&a, &d)| a + ds * d).collect();
        let corrected = correct(
            &sys,
            &metric,
            (&bu, bt),
            (&tu, tt),
            ds,
            (guess, bt + ds * tt),
            opts.tol,
            opts.max_corrector,
        );
        let accepted = corrected.and_then(|c| {
            let s = sys.at(c.t);
            let (mut nu, mut nt) = match tangent(&s, &metric, &c.u) {
                Some(x) => x,
                None => {
                    let mut du: Vec<T> = c.u.iter().zip(&bu).map(|(&a, &b)| a - b).collect();
                    let mut dt = c.t - bt;
                    if !metric.normalize(&mut du, &mut dt) {
                        return None;
                    }
                    (du, dt)
                }
            };
            let mut cos = metric.inner(&nu, &tu) + nt * tt;
            if cos < T::zero() {
                nu.iter_mut().for_each(|x| *x = -*x);
                nt = -nt;
                cos = -cos;
            }
            (cos >= T::lit(0.8)).then_some((c, nu, nt))
        });
        match accepted {
            Some((c, nu, nt)) => {
                if opts.t_window.is_some_and(|(lo, hi)| c.t < lo || c.t > hi) {
                    break StopReason::WindowExit;
                }
                let du: Vec<T> = c.u.iter().zip(&bu).map(|(&a, &b)| a - b).collect();
                let step = (metric.inner(&du, &du) + (c.t - bt) * (c.t - bt)).sqrt();
                let arclength = last.arclength + step;
                let s = sys.at(c.t);
                points.push(make_point(&s, &metric, c.u, arclength, opts.stability));
                tu = nu;
                tt = nt;
                if c.iterations <= opts.easy_iterations {
                    easy += 1;
                    if easy >= 4 {
                        ds = (ds * T::lit(2.0)).min(opts.ds_max);
                        easy = 0;
                    }
                } else {
                    easy = 0;
                }
            }
            None => {
                easy = 0;
                ds = ds * T::lit(0.5);
                if ds < opts.ds_min {
                    break StopReason::StepUnderflow;
                }
            }
        }
    };
    Ok(Branch { points, stop })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldMethod {
    Arclength,
    Bisection,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldResult<T> {
    pub alpha: T,
    pub u_fold: Vec<T>,
    pub method: FoldMethod,
    /// `|alpha_arclength - alpha_bisection|` once both estimates are known.
    pub agreement_gap: Option<T>,
    pub stability_mu: T,
    /// Quadratic-fit estimate before refinement.
    pub alpha_fit: T,
    /// Bisection reached its cap without a failed step.
    pub capped: bool,
}

/// Tolerance on the eigen-coordinate when maximizing `t` along the branch.
const FOLD_COORDINATE_TOL: f64 = 1e-9;

/// Solves `F(u, t) = 0` with `∫Puφ₁ = sigma` fixed, returning `(u, t)`.
fn solve_at_coordinate<T: Real>(
    sys: &NonlinearSystem<'_, T>,
    sigma: T,
    guess: (&[T], T),
    tol: T,
    maxit: usize,
) -> Option<(Vec<T>, T)> {
    let instance = sys.instance;
    let phi = instance.phi().ok()?;
    let metric = Metric { instance };
    let (mut u, mut t) = (guess.0.to_vec(), guess.1);
    for _ in 0..=maxit {
        let s = sys.at(t);
        let f = s.residual(&u);
        let n = metric.inner(&u, phi) - sigma;
        if !all_finite(&f) {
            return None;
        }
        if max_abs(&f) <= tol * s.row_scale(&u) && n.abs() <= tol * (T::one() + sigma.abs()) {
            return Some((u, t));
        }
        let j = s.jacobian(&u);
        let neg: Vec<T> = f.iter().map(|&x| -x).collect();
        let a = j.solve(&neg).ok()?;
        let b = j.solve(s.forcing_direction()).ok()?;
        let den = metric.inner(phi, &b);
        if !(den.abs() > T::min_positive_value()) {
            return None;
        }
        let dt = (-n - metric.inner(phi, &a)) / den;
        for i in 0..u.len() {
            u[i] = u[i] + a[i] + dt * b[i];
        }
        t = t + dt;
    }
    None
}

/// Locates the fold: a quadratic fit of `t` against arclength at the turning
/// point, refined by maximizing `t` over the eigen-coordinate `∫Puφ₁`.
pub fn detect_fold<T: Real>(instance: &ProblemInstance<T>, branch: &Branch<T>) -> Result<FoldResult<T>> {
    let k = branch.turning_index().ok_or(Error::NoFoldInBranch)?;
    let pts = &branch.points;
    let (a, b, c) = (&pts[k - 1], &pts[k], &pts[k + 1]);
    let alpha_fit = parabola_max((a.arclength, a.t), (b.arclength, b.t), (c.arclength, c.t)).unwrap_or(b.t);
    let sys = NonlinearSystem::new(instance, b.t)?;
    let tol = T::lit(1e-12);
    let mut lo = a.coordinate.min(c.coordinate);
    let mut hi = a.coordinate.max(c.coordinate);
    let mut warm = (b.u.clone(), b.t);
    let eval = |sigma: T, warm: &mut (Vec<T>, T)| -> Option<T> {
        let (u, t) = solve_at_coordinate(&sys, sigma, (&warm.0, warm.1), tol, 30)?;
        *warm = (u, t);
        Some(t)
    };
    let ratio = T::lit(0.5 * (5f64.sqrt() - 1.0));
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = eval(x1, &mut warm).ok_or(Error::NoFoldInBranch)?;
    let mut f2 = eval(x2, &mut warm).ok_or(Error::NoFoldInBranch)?;
    let stop = T::lit(FOLD_COORDINATE_TOL) * (T::one() + b.coordinate.abs());
    while hi - lo > stop {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = eval(x2, &mut warm).ok_or(Error::NoFoldInBranch)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = eval(x1, &mut warm).ok_or(Error::NoFoldInBranch)?;
        }
    }
    let sigma = T::lit(0.5) * (lo + hi);
    let (u_star, alpha) =
        solve_at_coordinate(&sys, sigma, (&warm.0, warm.1), tol, 30).ok_or(Error::NoFoldInBranch)?;
    let polish_t = alpha - T::lit(1e-8) * (T::one() + alpha.abs());
    let polish = sys.at(polish_t);
    let u_fold = newton_solve(&polish, &u_star, &NewtonOptions::default())
        .map(|r| r.u)
        .unwrap_or(u_star);
    let stability_mu = sys.at(alpha).stability(&u_fold).map(|e| e.value).unwrap_or(T::nan());
    Ok(FoldResult {
        alpha,
        u_fold,
        method: FoldMethod::Arclength,
        agreement_gap: None,
        stability_mu,
        alpha_fit,
        capped: false,
    })
}

/// Vertex value of the parabola through three points, if it opens downward.
fn parabola_max<T: Real>(p0: (T, T), p1: (T, T), p2: (T, T)) -> Option<T> {
    let d01 = (p1.1 - p0.1) / (p1.0 - p0.0);
    let d12 = (p2.1 - p1.1) / (p2.0 - p1.0);
    let c = (d12 - d01) / (p2.0 - p0.0);
    if !(c < T::zero()) {
        return None;
    }
    // t(s) = p1.t + b(s - s1) + c(s - s1)²
    let b = d01 + c * (p1.0 - p0.0);
    Some(p1.1 - b * b / (T::lit(4.0) * c))
}

#[derive(Debug, Clone, Copy)]
pub struct BisectOptions<T> {
    pub dt_init: T,
    pub dt_min: T,
    /// Largest `t` attempted; reaching it means no fold below the cap.
    pub t_cap: T,
    pub newton: NewtonOptions<T>,
}

/// Climbs in `t` from a known solution, warm-starting Newton at each new `t`
/// from the current solution and halving the step on failure.
pub fn bisect_alpha<T: Real>(
    instance: &ProblemInstance<T>,
    t_known: T,
    u_known: &[T],
    opts: &BisectOptions<T>,
) -> Result<FoldResult<T>> {
    let sys = NonlinearSystem::new(instance, t_known)?;
    let residual = sys.residual_inf(u_known);
    if !(residual <= T::lit(1e-8) * sys.row_scale(u_known)) {
        return Err(Error::InitialPointInvalid { residual: residual.as_f64() });
    }
    let mut t = t_known;
    let mut u = u_known.to_vec();
    let mut dt = opts.dt_init;
    let mut failed: Option<T> = None;
    let mut capped = false;
    while dt >= opts.dt_min {
        if t >= opts.t_cap {
            capped = true;
            break;
        }
        let step = dt.min(opts.t_cap - t);
        match newton_solve(&sys.at(t + step), &u, &opts.newton) {
            Ok(rep) => {
                t = t + step;
                u = rep.u;
            }
            Err(_) => {
                failed = Some(step);
                dt = step * T::lit(0.5);
            }
        }
    }
    let alpha = match failed {
        Some(width) if !capped => t + T::lit(0.5) * width,
        _ => t,
    };
    let stability_mu = sys.at(t).stability(&u).map(|e| e.value).unwrap_or(T::nan());
    Ok(FoldResult {
        alpha,
        u_fold: u,
        method: FoldMethod::Bisection,
        agreement_gap: None,
        stability_mu,
        alpha_fit: alpha,
        capped: capped || failed.is_none(),
    })
}

/// Solutions on both sides of the fold at one forcing coefficient.
#[derive(Debug, Clone, Serialize)]
pub struct TwoSolutions<T> {
    pub t: T,
    pub lower: SolutionProfile<T>,
    pub upper: SolutionProfile<T>,
    pub separation: T,
    /// Coefficient of the lower-branch solution used as the upper function.
    pub t_upper_function: T,
    pub interval: OrderedInterval<T>,
    pub lower_order: OrderReport<T>,
    pub upper_order: OrderReport<T>,
}

/// Linear interpolation in `t` on the segment of `points` between indices
/// `range`, which must be monotone in `t`.
fn interpolate_segment<T: Real>(points: &[BranchPoint<T>], t: T) -> Option<Vec<T>> {
    points.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        let (lo, hi) = if a.t <= b.t { (a.t, b.t) } else { (b.t, a.t) };
        if t < lo || t > hi || a.t == b.t {
            return None;
        }
        let s = (t - a.t) / (b.t - a.t);
        Some(a.u.iter().zip(&b.u).map(|(&x, &y)| x + s * (y - x)).collect())
    })
}

fn polished<T: Real>(instance: &ProblemInstance<T>, t: T, guess: Vec<T>) -> Result<SolutionProfile<T>> {
    let sys = NonlinearSystem::new(instance, t)?;
    let rep = newton_solve(&sys, &guess, &NewtonOptions::default())?;
    sys.profile(rep.u).with_stability(&sys)
}

/// Lower- and upper-branch solutions at `t_query`, with order-set membership
/// relative to the subsolution at `t_query` and the lower-branch solution at
/// `t_query + (alpha - t_query)/2`.
pub fn two_solutions<T: Real>(
    instance: &ProblemInstance<T>,
    t_query: T,
    branch: &Branch<T>,
    fold: &FoldResult<T>,
) -> Result<TwoSolutions<T>> {
    if t_query >= fold.alpha {
        return Err(Error::QueryPastFold { t: t_query.as_f64(), alpha: fold.alpha.as_f64() });
    }
    let k = branch.turning_index().ok_or(Error::NoFoldInBranch)?;
    let (before, after) = (&branch.points[..=k], &branch.points[k..]);
    let missing = |side: &str| Error::InvalidParameter(format!("{side} branch segment does not reach t = {t_query}"));
    let lower_guess = interpolate_segment(before, t_query).ok_or_else(|| missing("lower"))?;
    let upper_guess = interpolate_segment(after, t_query).ok_or_else(|| missing("upper"))?;
    let lower = polished(instance, t_query, lower_guess)?;
    let upper = polished(instance, t_query, upper_guess)?;
    let t1 = t_query + T::lit(0.5) * (fold.alpha - t_query);
    let v_guess = interpolate_segment(before, t1).ok_or_else(|| missing("lower"))?;
    let v = polished(instance, t1, v_guess)?.u;
    let w = build_subsolution(instance, t_query)?;
    let interval = OrderedInterval::new(w, v)?;
    let radius = instance.grid.radius();
    let window = (T::lit(0.5) * radius, radius);
    let lower_order = check_order_interval(instance, &lower.u, &interval, window);
    let upper_order = check_order_interval(instance, &upper.u, &interval, window);
    let separation = lower.u.iter().zip(&upper.u).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
    Ok(TwoSolutions { t: t_query, lower, upper, separation, t_upper_function: t1, interval, lower_order, upper_order })
}

/// Lower-branch solution at `t`: Newton started from the subsolution.
pub fn lower_branch_start<T: Real>(instance: &ProblemInstance<T>, t: T, opts: &NewtonOptions<T>) -> Result<SolutionProfile<T>> {
    let sys = NonlinearSystem::new(instance, t)?;
    let w = build_subsolution(instance, t)?;
    let rep = newton_solve(&sys, &w, opts)?;
    sys.profile(rep.u).with_stability(&sys)
}

/// Parameters of the full fold analysis.
#[derive(Debug, Clone, Copy)]
pub struct FoldAnalysisOptions<T> {
    /// Start of the trace; defaults to `-10·|τ*|`.
    pub t_start: Option<T>,
    pub continuation: ContinuationOptions<T>,
    pub bisect_dt: T,
    pub bisect_dt_min: T,
}

impl<T: Real> Default for FoldAnalysisOptions<T> {
    fn default() -> Self {
        Self {
            t_start: None,
            continuation: ContinuationOptions::default(),
            bisect_dt: T::one(),
            bisect_dt_min: T::lit(1e-7),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldAnalysis<T> {
    pub tau_star: T,
    pub t_start: T,
    pub branch: Branch<T>,
    pub arclength: FoldResult<T>,
    pub bisection: FoldResult<T>,
    pub agreement_gap: T,
}

/// Lower-branch start and the branch traced from it.
#[derive(Debug, Clone, Serialize)]
pub struct LowerTrace<T> {
    pub tau_star: T,
    pub t_start: T,
    pub start: SolutionProfile<T>,
    pub branch: Branch<T>,
}

/// Starts on the lower branch at `t_start` (default `-10·|τ*|`) and traces
/// through the fold. Without an explicit window the trace stops once `t`
/// leaves `(t_start - span/2, τ* + 1)`, `span = |τ* - t_start|`.
pub fn trace_lower_branch<T: Real>(instance: &ProblemInstance<T>, opts: &FoldAnalysisOptions<T>) -> Result<LowerTrace<T>> {
    let tau = tau_star(instance)?.weighted;
    let t_start = opts.t_start.unwrap_or(-T::lit(10.0) * tau.abs());
    let start = lower_branch_start(instance, t_start, &NewtonOptions::default())?;
    let mut cont = opts.continuation;
    if cont.t_window.is_none() {
        let span = (tau - t_start).abs().max(T::one());
        cont.t_window = Some((t_start - T::lit(0.5) * span, tau + T::one()));
    }
    let branch = trace_branch(instance, t_start, &start.u, &cont)?;
    Ok(LowerTrace { tau_star: tau, t_start, start, branch })
}

/// Traces the branch from the lower side, locates the fold by both estimators
/// and records their gap.
pub fn analyze_fold<T: Real>(instance: &ProblemInstance<T>, opts: &FoldAnalysisOptions<T>) -> Result<FoldAnalysis<T>> {
    let LowerTrace { tau_star: tau, t_start, start, branch } = trace_lower_branch(instance, opts)?;
    let mut arclength = detect_fold(instance, &branch)?;
    let bisect = BisectOptions {
        dt_init: opts.bisect_dt,
        dt_min: opts.bisect_dt_min,
        t_cap: tau,
        newton: NewtonOptions::default(),
    };
    let mut bisection = bisect_alpha(instance, t_start, &start.u, &bisect)?;
    let gap = (arclength.alpha - bisection.alpha).abs();
    arclength.agreement_gap = Some(gap);
    bisection.agreement_gap = Some(gap);
    Ok(FoldAnalysis { tau_star: tau, t_start, branch, arclength, bisection, agreement_gap: gap })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola_vertex() {
        let v = parabola_max::<f64>((0.0, 0.0), (1.0, 1.0), (2.0, 0.0)).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        let v = parabola_max::<f64>((0.0, 0.0), (1.0, 0.75), (3.0, 0.75)).unwrap();
        // t = -(s-2)²/4 + 1
        assert!((v - 1.0).abs() < 1e-14);
        assert!(parabola_max::<f64>((0.0, 0.0), (1.0, 1.0), (2.0, 2.0)).is_none());
    }
}
