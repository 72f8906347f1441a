//! Weighted eigenproblems `Aφ = λ M_P φ` solved by inverse iteration on the
//! tridiagonal pencil.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::radial::{total_energy, weighted_inner, FarField, RadialGrid, TridiagonalOperator, WeightMass};
use crate::scalar::{max_abs, min_value, Real};

/// Relative eigenvalue gap below which the first eigenvalue is flagged as not simple.
pub const SIMPLICITY_GAP: f64 = 1e-8;

/// Allowed `max/min` of `r^{N-2}φ₁` on the tail window.
pub const PLATEAU_RATIO: f64 = 1.05;

#[derive(Debug, Clone)]
pub struct EigenOptions<T> {
    pub tol: T,
    pub maxit: usize,
    /// Also estimate the second eigenvalue by deflated iteration.
    pub second: bool,
    /// Tail window as fractions of `R`.
    pub window: (T, T),
}

impl<T: Real> Default for EigenOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-12), maxit: 10_000, second: true, window: (T::lit(0.5), T::one()) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenPair<T> {
    pub lambda1: T,
    pub phi1: Vec<T>,
    pub normalization_residual: T,
    pub decay_c1: T,
    pub decay_c2: T,
    /// `decay_c2 / decay_c1` is within [`PLATEAU_RATIO`].
    pub plateau: bool,
    /// `‖Aφ - λM_Pφ‖∞` at exit.
    pub residual: T,
    pub iterations: usize,
    pub second_eigenvalue: Option<T>,
    /// The gap to the second eigenvalue is below [`SIMPLICITY_GAP`] relative.
    pub non_simple: bool,
}

/// Tail decay constants of a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayConstants<T> {
    pub c1: T,
    pub c2: T,
    pub ratio: T,
    pub plateau: bool,
}

/// `min` and `max` of `r^{N-2}v(r)` over nodes in `[lo, hi]`.
pub fn decay_constants<T: Real>(grid: &RadialGrid<T>, v: &[T], window: (T, T)) -> DecayConstants<T> {
    let p = grid.dim() as i32 - 2;
    let range = grid.window(window.0, window.1);
    let mut c1 = T::infinity();
    let mut c2 = T::neg_infinity();
    for i in range {
        let s = grid.nodes()[i].powi(p) * v[i];
        c1 = c1.min(s);
        c2 = c2.max(s);
    }
    let ratio = if c1 > T::zero() { c2 / c1 } else { T::infinity() };
    DecayConstants { c1, c2, ratio, plateau: ratio <= T::lit(PLATEAU_RATIO) }
}

/// `∫|∇v|² / ∫Pv²`, with the exterior harmonic energy under the Robin far field.
pub fn rayleigh_quotient<T: Real>(grid: &RadialGrid<T>, far_field: FarField, mass: &WeightMass<T>, v: &[T]) -> Result<T> {
    let den = weighted_inner(grid, mass, v, v);
    if !(den > T::min_positive_value()) {
        return Err(Error::ZeroDenominator);
    }
    Ok(total_energy(grid, far_field, v) / den)
}

fn normalize<T: Real>(grid: &RadialGrid<T>, mass: &WeightMass<T>, x: &mut [T]) -> Result<()> {
    let norm = weighted_inner(grid, mass, x, x).sqrt();
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(Error::ZeroDenominator);
    }
    let sign = if x.iter().copied().sum::<T>() < T::zero() { -T::one() } else { T::one() };
    for v in x.iter_mut() {
        *v = sign * *v / norm;
    }
    Ok(())
}

/// Rayleigh quotient `xᵀDOx / xᵀDPx` of the pencil and its residual `‖Ox - μPx‖∞`.
fn pencil_rayleigh<T: Real>(grid: &RadialGrid<T>, op: &TridiagonalOperator<T>, mass: &WeightMass<T>, x: &[T]) -> (T, T, T) {
    let ox = op.apply(x);
    let vol = grid.volumes();
    let num: T = (0..x.len()).map(|i| vol[i] * x[i] * ox[i]).sum();
    let den = weighted_inner(grid, mass, x, x);
    let mu = num / den;
    let px = mass.apply(x);
    let mut res = T::zero();
    for i in 0..x.len() {
        if op.constrained_last() && i + 1 == x.len() {
            continue;
        }
        res = res.max((ox[i] - mu * px[i]).abs());
    }
    (mu, res, max_abs(&px))
}

/// Rounding floor of the residual `‖Ox - μPx‖∞` for a unit-scale `x`.
fn residual_floor<T: Real>(op: &TridiagonalOperator<T>, x: &[T]) -> T {
    T::lit(64.0) * T::epsilon() * op.row_scale() * max_abs(x)
}

fn inverse_iteration<T: Real>(
    grid: &RadialGrid<T>,
    op: &TridiagonalOperator<T>,
    mass: &WeightMass<T>,
    mut x: Vec<T>,
    deflate: Option<&[T]>,
    tol: T,
    maxit: usize,
) -> Result<(T, Vec<T>, T, usize)> {
    let project = |x: &mut Vec<T>| {
        if let Some(q) = deflate {
            let c = weighted_inner(grid, mass, x, q);
            for (v, &p) in x.iter_mut().zip(q) {
                *v = *v - c * p;
            }
        }
    };
    op.constrain(&mut x);
    project(&mut x);
    normalize(grid, mass, &mut x)?;
    let mut last = (T::nan(), T::infinity());
    for it in 1..=maxit {
        let mut y = mass.apply(&x);
        op.constrain(&mut y);
        x = op.solve(&y)?;
        project(&mut x);
        normalize(grid, mass, &mut x)?;
        let (mu, res, scale) = pencil_rayleigh(grid, op, mass, &x);
        let target = tol * mu.abs().max(T::min_positive_value()) * scale + residual_floor(op, &x);
        last = (mu, res);
        if res <= target {
            return Ok((mu, x, res, it));
        }
    }
    Err(Error::NoConvergence { iterations: maxit, residual: last.1.as_f64() })
}

/// First eigenpair of `Aφ = λM_Pφ`, normalized by `∫Pφ² = 1` with `φ > 0`.
///
/// The stopping test is `‖Aφ - λM_Pφ‖∞ ≤ tol·λ‖M_Pφ‖∞` plus a rounding floor
/// proportional to the operator's row scale, below which no iterate can go.
pub fn first_eigenpair<T: Real>(
    grid: &RadialGrid<T>,
    a: &TridiagonalOperator<T>,
    mass: &WeightMass<T>,
    opts: &EigenOptions<T>,
) -> Result<EigenPair<T>> {
    let p = grid.dim() as i32 - 2;
    let start: Vec<T> = grid.nodes().iter().map(|&r| T::one() / (T::one() + r).powi(p)).collect();
    let (lambda1, phi1, residual, iterations) = inverse_iteration(grid, a, mass, start, None, opts.tol, opts.maxit)?;
    let pinned = usize::from(a.constrained_last());
    if min_value(&phi1[..phi1.len() - pinned]) <= T::zero() {
        return Err(Error::NoConvergence { iterations, residual: residual.as_f64() });
    }
    let normalization_residual = (weighted_inner(grid, mass, &phi1, &phi1) - T::one()).abs();
    let radius = grid.radius();
    let decay = decay_constants(grid, &phi1, (opts.window.0 * radius, opts.window.1 * radius));
    let second_eigenvalue = if opts.second { second_eigenvalue(grid, a, mass, &phi1, opts).ok() } else { None };
    let non_simple = second_eigenvalue
        .map(|l2| (l2 - lambda1).abs() < T::lit(SIMPLICITY_GAP) * lambda1.abs())
        .unwrap_or(false);
    Ok(EigenPair {
        lambda1,
        phi1,
        normalization_residual,
        decay_c1: decay.c1,
        decay_c2: decay.c2,
        plateau: decay.plateau,
        residual,
        iterations,
        second_eigenvalue,
        non_simple,
    })
}

/// Second eigenvalue by inverse iteration deflated against `phi1` in the
/// weighted inner product.
pub fn second_eigenvalue<T: Real>(
    grid: &RadialGrid<T>,
    a: &TridiagonalOperator<T>,
    mass: &WeightMass<T>,
    phi1: &[T],
    opts: &EigenOptions<T>,
) -> Result<T> {
    let radius = grid.radius();
    let start: Vec<T> = grid
        .nodes()
        .iter()
        .map(|&r| (T::one() - T::lit(4.0) * r / radius) / (T::one() + r))
        .collect();
    let tol = opts.tol.max(T::lit(1e-9));
    inverse_iteration(grid, a, mass, start, Some(phi1), tol, opts.maxit).map(|(mu, ..)| mu)
}

/// Smallest eigenvalue of the pencil `(op, M_P)` with its eigenvector.
#[derive(Debug, Clone)]
pub struct PencilEigen<T> {
    pub value: T,
    pub vector: Vec<T>,
    pub iterations: usize,
    /// Negative pivots of `op` itself; equals the number of negative pencil eigenvalues.
    pub negative_modes: usize,
}

/// Inverse iteration on `(op - s·M_P)⁻¹M_P` with `s` below the spectrum.
///
/// `shift` must make `op - shift·M_P` positive definite; for a Jacobian
/// `A - diag(P g')` any `shift < -max g'` does.
pub fn smallest_pencil_eigenvalue<T: Real>(
    grid: &RadialGrid<T>,
    op: &TridiagonalOperator<T>,
    mass: &WeightMass<T>,
    shift: T,
    tol: T,
    maxit: usize,
) -> Result<PencilEigen<T>> {
    let shifted = op.shifted(mass, -shift);
    let inertia = shifted.inertia();
    if inertia.negative + inertia.zero > 0 {
        return Err(Error::IndefiniteOperator { negative: inertia.negative + inertia.zero });
    }
    let p = grid.dim() as i32 - 2;
    let start: Vec<T> = grid.nodes().iter().map(|&r| T::one() / (T::one() + r).powi(p)).collect();
    let (mu, vector, _, iterations) = inverse_iteration(grid, &shifted, mass, start, None, tol, maxit)?;
    Ok(PencilEigen { value: mu + shift, vector, iterations, negative_modes: op.inertia().negative })
}
