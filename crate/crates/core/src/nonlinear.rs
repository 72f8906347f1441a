//! Residual and Jacobian of the discrete semilinear problem, damped Newton,
//! the Picard solution operator, deflation and multi-start probing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::eigen::{smallest_pencil_eigenvalue, PencilEigen};
use crate::error::{Error, Result};
use crate::problem::ProblemInstance;
use crate::radial::{weighted_inner, RadialGrid, TridiagonalOperator};
use crate::scalar::{all_finite, max_abs, Real};
use crate::verify::e0_norm;

/// `F(u) = A·u - M_P·g(u) - P·(tφ₁ + f₁)` at a fixed forcing coefficient.
#[derive(Debug, Clone)]
pub struct NonlinearSystem<'a, T: Real> {
    pub instance: &'a ProblemInstance<T>,
    pub t: T,
    affine: Vec<T>,
    direction: Vec<T>,
    operator_norm: T,
}

impl<'a, T: Real> NonlinearSystem<'a, T> {
    pub fn new(instance: &'a ProblemInstance<T>, t: T) -> Result<Self> {
        let phi = instance.phi()?;
        let p = &instance.mass.diag;
        let mut direction: Vec<T> = (0..phi.len()).map(|i| p[i] * phi[i]).collect();
        instance.laplacian.constrain(&mut direction);
        let mut affine: Vec<T> = (0..phi.len()).map(|i| p[i] * (t * phi[i] + instance.f1[i])).collect();
        instance.laplacian.constrain(&mut affine);
        Ok(Self { instance, t, affine, direction, operator_norm: instance.laplacian.row_scale() })
    }

    /// The same system at another forcing coefficient.
    pub fn at(&self, t: T) -> Self {
        let f1 = &self.instance.f1;
        let p = &self.instance.mass.diag;
        let mut affine: Vec<T> = (0..self.direction.len())
            .map(|i| t * self.direction[i] + p[i] * f1[i])
            .collect();
        self.instance.laplacian.constrain(&mut affine);
        Self { instance: self.instance, t, affine, direction: self.direction.clone(), operator_norm: self.operator_norm }
    }

    pub fn grid(&self) -> &RadialGrid<T> {
        &self.instance.grid
    }

    pub fn len(&self) -> usize {
        self.affine.len()
    }

    pub fn is_empty(&self) -> bool {
        self.affine.is_empty()
    }

    /// `P·φ₁`, which equals `-∂F/∂t`.
    pub fn forcing_direction(&self) -> &[T] {
        &self.direction
    }

    /// `P·(tφ₁ + f₁)`.
    pub fn affine_source(&self) -> &[T] {
        &self.affine
    }

    /// `P·(g(u) + tφ₁ + f₁)` with pinned rows zeroed.
    pub fn source(&self, u: &[T]) -> Vec<T> {
        let g = &self.instance.nonlinearity.g;
        let p = &self.instance.mass.diag;
        let mut s: Vec<T> = (0..u.len()).map(|i| p[i] * g(u[i]) + self.affine[i]).collect();
        self.instance.laplacian.constrain(&mut s);
        s
    }

    pub fn residual(&self, u: &[T]) -> Vec<T> {
        let au = self.instance.laplacian.apply(u);
        let s = self.source(u);
        au.iter().zip(&s).map(|(&a, &b)| a - b).collect()
    }

    pub fn residual_inf(&self, u: &[T]) -> T {
        max_abs(&self.residual(u))
    }

    /// `‖A‖∞·max(1, ‖u‖∞)`, the scale residuals are measured against.
    pub fn row_scale(&self, u: &[T]) -> T {
        self.operator_norm * max_abs(u).max(T::one())
    }

    /// `J(u) = A - diag(P·g'(u))`.
    pub fn jacobian(&self, u: &[T]) -> TridiagonalOperator<T> {
        let gp = &self.instance.nonlinearity.g_prime;
        let p = &self.instance.mass.diag;
        let coef: Vec<T> = (0..u.len()).map(|i| -p[i] * gp(u[i])).collect();
        self.instance.laplacian.add_diagonal(&coef)
    }

    /// `K_t(v)`: the solution of `A·u = P·(g(v) + tφ₁ + f₁)`.
    pub fn apply_solution_operator(&self, v: &[T]) -> Result<Vec<T>> {
        self.instance.laplacian.solve(&self.source(v))
    }

    /// Smallest eigenvalue of the pencil `(J(u), M_P)`; negative past the fold.
    pub fn stability(&self, u: &[T]) -> Result<PencilEigen<T>> {
        let gp = &self.instance.nonlinearity.g_prime;
        let top = u.iter().fold(T::zero(), |m, &x| m.max(gp(x)));
        let shift = -(top + T::one());
        let j = self.jacobian(u);
        smallest_pencil_eigenvalue(&self.instance.grid, &j, &self.instance.mass, shift, T::lit(1e-10), 5000)
    }

    pub fn profile(&self, u: Vec<T>) -> SolutionProfile<T> {
        SolutionProfile::new(self, u)
    }
}

/// A computed solution with its diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionProfile<T> {
    pub u: Vec<T>,
    pub t: T,
    pub residual_inf: T,
    pub e0_norm: T,
    /// `R^{N-2}u(R)`, the far-field coefficient of the `r^{-(N-2)}` tail.
    pub decay_coeff: T,
    pub stability_mu: Option<T>,
}

impl<T: Real> SolutionProfile<T> {
    pub fn new(sys: &NonlinearSystem<'_, T>, u: Vec<T>) -> Self {
        let grid = sys.grid();
        let last = u.len() - 1;
        let decay_coeff = grid.radius().powi(grid.dim() as i32 - 2) * u[last];
        Self {
            residual_inf: sys.residual_inf(&u),
            e0_norm: e0_norm(grid, &u),
            decay_coeff,
            t: sys.t,
            u,
            stability_mu: None,
        }
    }

    pub fn with_stability(mut self, sys: &NonlinearSystem<'_, T>) -> Result<Self> {
        self.stability_mu = Some(sys.stability(&self.u)?.value);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions<T> {
    /// Convergence when `‖F‖∞ ≤ tol·row_scale`.
    pub tol: T,
    pub maxit: usize,
    /// Initial step length of every line search, in `(0, 1]`.
    pub damping: T,
    pub max_halvings: usize,
}

impl<T: Real> Default for NewtonOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-12), maxit: 50, damping: T::one(), max_halvings: 30 }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonReport<T> {
    pub u: Vec<T>,
    pub iterations: usize,
    pub residual_inf: T,
    /// Step length accepted in the last iteration.
    pub last_step: T,
}

fn half_norm_sq<T: Real>(v: &[T]) -> T {
    T::lit(0.5) * v.iter().map(|&x| x * x).sum::<T>()
}

const ARMIJO: f64 = 1e-4;

/// Damped Newton with Armijo backtracking on `½‖F‖₂²`.
pub fn newton_solve<T: Real>(sys: &NonlinearSystem<'_, T>, u0: &[T], opts: &NewtonOptions<T>) -> Result<NewtonReport<T>> {
    let mut u = u0.to_vec();
    let mut f = sys.residual(&u);
    let mut last_step = T::zero();
    for it in 0..=opts.maxit {
        let res = max_abs(&f);
        if !res.is_finite() {
            break;
        }
        if res <= opts.tol * sys.row_scale(&u) {
            return Ok(NewtonReport { u, iterations: it, residual_inf: res, last_step });
        }
        if it == opts.maxit {
            break;
        }
        let neg: Vec<T> = f.iter().map(|&x| -x).collect();
        let delta = match sys.jacobian(&u).solve(&neg) {
            Ok(d) => d,
            Err(_) => break,
        };
        let merit = half_norm_sq(&f);
        let mut step = opts.damping;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<T> = u.iter().zip(&delta).map(|(&a, &d)| a + step * d).collect();
            let ft = sys.residual(&trial);
            let mt = half_norm_sq(&ft);
            if mt.is_finite() && mt <= (T::one() - T::lit(2.0 * ARMIJO) * step) * merit {
                u = trial;
                f = ft;
                accepted = true;
                break;
            }
            step = step * T::lit(0.5);
        }
        if !accepted {
            break;
        }
        last_step = step;
    }
    Err(Error::NoConvergence { iterations: opts.maxit, residual: max_abs(&f).as_f64() })
}

#[derive(Debug, Clone)]
pub struct PicardReport<T> {
    pub u: Vec<T>,
    pub iterations: usize,
    pub residual_inf: T,
}

/// Iterates `u ← K_t(u)` until `‖Δu‖∞ ≤ tol·max(1, ‖u‖∞)`.
pub fn picard_iterate<T: Real>(sys: &NonlinearSystem<'_, T>, u0: &[T], tol: T, maxit: usize) -> Result<PicardReport<T>> {
    let mut u = u0.to_vec();
    let blowup = T::lit(1e8);
    for it in 1..=maxit {
        let next = sys.apply_solution_operator(&u)?;
        if !all_finite(&next) || max_abs(&next) > blowup {
            return Err(Error::NoConvergence { iterations: it, residual: f64::INFINITY });
        }
        let change = next.iter().zip(&u).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        u = next;
        if change <= tol * max_abs(&u).max(T::one()) {
            let residual_inf = sys.residual_inf(&u);
            return Ok(PicardReport { u, iterations: it, residual_inf });
        }
    }
    Err(Error::NoConvergence { iterations: maxit, residual: sys.residual_inf(&u).as_f64() })
}

/// Minimum `‖u - u_k‖∞ / (1 + ‖u_k‖∞)` for a root to count as new.
pub const DISTINCT_ROOT_GAP: f64 = 1e-4;

fn squared_distance<T: Real>(sys: &NonlinearSystem<'_, T>, u: &[T], v: &[T]) -> T {
    let d: Vec<T> = u.iter().zip(v).map(|(&a, &b)| a - b).collect();
    weighted_inner(sys.grid(), &sys.instance.mass, &d, &d)
}

/// `Π_k (1/‖u - u_k‖² + 1)` in the weighted L² norm; the distance is floored
/// so the factor stays finite at a known root.
pub fn deflation_factor<T: Real>(sys: &NonlinearSystem<'_, T>, known: &[Vec<T>], u: &[T]) -> T {
    let floor = T::min_positive_value().sqrt();
    known.iter().fold(T::one(), |m, k| {
        let d2 = squared_distance(sys, u, k).max(floor);
        m * (T::one() / d2 + T::one())
    })
}

/// Newton on the deflated residual `m(u)·F(u)`, which repels the iteration
/// from every known root.
pub fn deflated_solve<T: Real>(
    sys: &NonlinearSystem<'_, T>,
    known: &[Vec<T>],
    u0: &[T],
    opts: &NewtonOptions<T>,
) -> Result<SolutionProfile<T>> {
    if known.is_empty() {
        return Err(Error::InvalidParameter("deflation needs at least one known solution".into()));
    }
    let floor = T::min_positive_value().sqrt();
    let grid = sys.grid();
    let mass = &sys.instance.mass;
    let mut u = u0.to_vec();
    let mut f = sys.residual(&u);
    for _ in 0..opts.maxit {
        let res = max_abs(&f);
        if !res.is_finite() {
            break;
        }
        if res <= opts.tol * sys.row_scale(&u) {
            let distinct = known.iter().all(|k| {
                let gap = u.iter().zip(k).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
                gap >= T::lit(DISTINCT_ROOT_GAP) * (T::one() + max_abs(k))
            });
            if distinct {
                return Ok(sys.profile(u));
            }
            break;
        }
        let neg: Vec<T> = f.iter().map(|&x| -x).collect();
        let plain = match sys.jacobian(&u).solve(&neg) {
            Ok(d) => d,
            Err(_) => break,
        };
        // Sherman–Morrison for the rank-one term F·∇(ln m)ᵀ.
        let mut slope = T::zero();
        for k in known {
            let d2 = squared_distance(sys, &u, k).max(floor);
            let diff: Vec<T> = u.iter().zip(k).map(|(&a, &b)| a - b).collect();
            slope = slope - T::lit(2.0) * weighted_inner(grid, mass, &diff, &plain) / (d2 * d2 + d2);
        }
        let denom = T::one() - slope;
        if !(denom.abs() > T::epsilon()) {
            break;
        }
        let delta: Vec<T> = plain.iter().map(|&d| d / denom).collect();
        let merit = |v: &[T], fv: &[T]| {
            let m = deflation_factor(sys, known, v);
            m * m * half_norm_sq(fv)
        };
        let current = merit(&u, &f);
        let mut step = opts.damping;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<T> = u.iter().zip(&delta).map(|(&a, &d)| a + step * d).collect();
            let ft = sys.residual(&trial);
            let mt = merit(&trial, &ft);
            if mt.is_finite() && mt <= (T::one() - T::lit(2.0 * ARMIJO) * step) * current {
                u = trial;
                f = ft;
                accepted = true;
                break;
            }
            step = step * T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NoConvergence { iterations: opts.maxit, residual: max_abs(&f).as_f64() })
}

/// Seeded random smooth starting profiles: sums of three Gaussians with
/// amplitudes in `[-amplitude, amplitude]` and widths in `[0.5, 8]`.
pub fn random_starts<T: Real>(grid: &RadialGrid<T>, count: usize, seed: u64, amplitude: f64) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let bumps: Vec<(f64, f64)> = (0..3)
                .map(|_| (rng.random_range(-amplitude..=amplitude), rng.random_range(0.5..8.0)))
                .collect();
            grid.nodes()
                .iter()
                .map(|&r| {
                    let r = r.as_f64();
                    let v: f64 = bumps.iter().map(|(a, w)| a * (-(r * r) / (2.0 * w * w)).exp()).sum();
                    T::lit(v)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport<T> {
    pub t: T,
    pub newton_attempts: usize,
    pub newton_converged: usize,
    pub picard_attempts: usize,
    pub picard_converged: usize,
    /// Smallest final residual over all attempts, relative to the row scale.
    pub best_relative_residual: T,
}

impl<T> ProbeReport<T> {
    pub fn any_converged(&self) -> bool {
        self.newton_converged + self.picard_converged > 0
    }
}

/// Runs Newton and Picard from every start concurrently; results are reduced
/// in start order so the report is deterministic.
pub fn probe_nonexistence<T: Real>(
    sys: &NonlinearSystem<'_, T>,
    newton_starts: &[Vec<T>],
    picard_starts: &[Vec<T>],
    opts: &NewtonOptions<T>,
    picard_maxit: usize,
) -> ProbeReport<T> {
    let newton: Vec<(bool, T)> = newton_starts
        .par_iter()
        .map(|u0| match newton_solve(sys, u0, opts) {
            Ok(rep) => (true, rep.residual_inf / sys.row_scale(&rep.u)),
            Err(Error::NoConvergence { residual, .. }) => (false, T::lit(residual) / sys.row_scale(u0)),
            Err(_) => (false, T::infinity()),
        })
        .collect();
    let picard: Vec<(bool, T)> = picard_starts
        .par_iter()
        .map(|u0| match picard_iterate(sys, u0, opts.tol, picard_maxit) {
            Ok(rep) => {
                let rel = rep.residual_inf / sys.row_scale(&rep.u);
                (rel <= T::lit(1e-8), rel)
            }
            Err(_) => (false, T::infinity()),
        })
        .collect();
    let best = newton.iter().chain(&picard).fold(T::infinity(), |m, &(_, r)| m.min(r));
    ProbeReport {
        t: sys.t,
        newton_attempts: newton.len(),
        newton_converged: newton.iter().filter(|x| x.0).count(),
        picard_attempts: picard.len(),
        picard_converged: picard.iter().filter(|x| x.0).count(),
        best_relative_residual: best,
    }
}
