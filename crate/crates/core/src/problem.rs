//! Problem data (weight, nonlinearity, forcing) and the runtime checks of the
//! standing hypotheses on them.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::eigen::{first_eigenpair, EigenOptions, EigenPair};
use crate::error::{Error, Result};
use crate::radial::{
    assemble_laplacian, assemble_weight_mass, build_grid, weighted_integral_within, BoundaryCondition,
    RadialGrid, TridiagonalOperator, WeightMass,
};
use crate::scalar::{max_abs, Real};
use crate::verify::riesz_potential;

/// Smallest node count accepted for a full problem instance.
pub const MIN_INSTANCE_NODES: usize = 16;

/// Shared scalar function `ℝ → ℝ`.
pub type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Radial weight profiles.
#[derive(Clone)]
pub enum WeightProfile<T> {
    /// `(1 + r²)^{-power}`.
    RationalDecay { power: T },
    /// `exp(-rate·r)`.
    Exponential { rate: T },
    Constant { value: T },
    /// Piecewise linear through `(radii[k], values[k])`, constant beyond the ends.
    Table { radii: Vec<T>, values: Vec<T> },
    Custom(ScalarFn<T>),
}

impl<T: Real> fmt::Debug for WeightProfile<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RationalDecay { power } => write!(f, "RationalDecay {{ power: {power} }}"),
            Self::Exponential { rate } => write!(f, "Exponential {{ rate: {rate} }}"),
            Self::Constant { value } => write!(f, "Constant {{ value: {value} }}"),
            Self::Table { radii, .. } => write!(f, "Table {{ {} rows }}", radii.len()),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Clone)]
pub struct WeightSpec<T> {
    pub dim: usize,
    pub profile: WeightProfile<T>,
}

impl<T: Real> fmt::Debug for WeightSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightSpec").field("dim", &self.dim).field("profile", &self.profile).finish()
    }
}

impl<T: Real> WeightSpec<T> {
    pub fn new(dim: usize, profile: WeightProfile<T>) -> Self {
        Self { dim, profile }
    }

    /// `(1 + r²)^{-3}` in three dimensions.
    pub fn canonical() -> Self {
        Self::new(3, WeightProfile::RationalDecay { power: T::lit(3.0) })
    }

    pub fn evaluate(&self, r: T) -> T {
        match &self.profile {
            WeightProfile::RationalDecay { power } => (T::one() + r * r).powf(-*power),
            WeightProfile::Exponential { rate } => (-*rate * r).exp(),
            WeightProfile::Constant { value } => *value,
            WeightProfile::Table { radii, values } => table_lookup(radii, values, r),
            WeightProfile::Custom(f) => f(r),
        }
    }

    pub fn sample(&self, grid: &RadialGrid<T>) -> Vec<T> {
        grid.nodes().iter().map(|&r| self.evaluate(r)).collect()
    }

    pub fn mass(&self, grid: &RadialGrid<T>) -> Result<WeightMass<T>> {
        assemble_weight_mass(grid, |r| self.evaluate(r))
    }
}

fn table_lookup<T: Real>(radii: &[T], values: &[T], r: T) -> T {
    if radii.is_empty() {
        return T::zero();
    }
    let n = radii.len();
    if r <= radii[0] {
        return values[0];
    }
    if r >= radii[n - 1] {
        return values[n - 1];
    }
    let k = radii.partition_point(|&x| x <= r) - 1;
    let s = (r - radii[k]) / (radii[k + 1] - radii[k]);
    values[k] + s * (values[k + 1] - values[k])
}

/// Nonlinearity `g` with its derivative and slack constants.
#[derive(Clone)]
pub struct NonlinearitySpec<T> {
    pub g: ScalarFn<T>,
    pub g_prime: ScalarFn<T>,
    pub mu_lower: T,
    pub mu_upper: T,
    pub theta: T,
    pub monotone: bool,
    pub label: String,
}

impl<T: Real> fmt::Debug for NonlinearitySpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearitySpec")
            .field("label", &self.label)
            .field("mu_lower", &self.mu_lower)
            .field("mu_upper", &self.mu_upper)
            .field("theta", &self.theta)
            .field("monotone", &self.monotone)
            .finish()
    }
}

/// `ln(1 + eˢ)` without overflow.
pub fn softplus<T: Real>(s: T) -> T {
    s.max(T::zero()) + (-s.abs()).exp().ln_1p()
}

/// `1/(1 + e^{-s})` without overflow.
pub fn logistic<T: Real>(s: T) -> T {
    if s >= T::zero() {
        T::one() / (T::one() + (-s).exp())
    } else {
        let e = s.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> NonlinearitySpec<T> {
    /// `g(s) = μ̲s + (μ̄ - μ̲)·ln(1 + eˢ) - offset`. Its slack constant is the offset.
    pub fn softplus(mu_lower: T, mu_upper: T, offset: T) -> Self {
        let jump = mu_upper - mu_lower;
        Self {
            g: Arc::new(move |s| mu_lower * s + jump * softplus(s) - offset),
            g_prime: Arc::new(move |s| mu_lower + jump * logistic(s)),
            mu_lower,
            mu_upper,
            theta: offset.max(T::zero()),
            monotone: mu_lower >= T::zero() && mu_upper >= T::zero(),
            label: "softplus".into(),
        }
    }

    /// `g(s) = slope·s + intercept`; both slopes equal `slope`.
    pub fn linear(slope: T, intercept: T) -> Self {
        Self {
            g: Arc::new(move |s| slope * s + intercept),
            g_prime: Arc::new(move |_| slope),
            mu_lower: slope,
            mu_upper: slope,
            theta: (-intercept).max(T::zero()),
            monotone: slope >= T::zero(),
            label: "linear".into(),
        }
    }

    pub fn zero() -> Self {
        let mut g = Self::linear(T::zero(), T::zero());
        g.label = "zero".into();
        g
    }

    pub fn custom(g: ScalarFn<T>, g_prime: ScalarFn<T>, mu_lower: T, mu_upper: T, theta: T, monotone: bool) -> Self {
        Self { g, g_prime, mu_lower, mu_upper, theta, monotone, label: "custom".into() }
    }

    pub fn with_theta(mut self, theta: T) -> Self {
        self.theta = theta;
        self
    }

    pub fn eval(&self, s: T) -> T {
        (self.g)(s)
    }

    pub fn slope(&self, s: T) -> T {
        (self.g_prime)(s)
    }

    /// Largest sampled `g'` over `[lo, hi]`.
    pub fn max_slope(&self, lo: T, hi: T, samples: usize) -> T {
        sample_range(lo, hi, samples).map(|s| self.slope(s)).fold(T::neg_infinity(), T::max)
    }

    /// Whether `g' ≥ 0` at every sample of `[lo, hi]`.
    pub fn is_monotone_on(&self, lo: T, hi: T, samples: usize) -> bool {
        sample_range(lo, hi, samples).all(|s| self.slope(s) >= T::zero())
    }
}

fn sample_range<T: Real>(lo: T, hi: T, samples: usize) -> impl Iterator<Item = T> {
    let samples = samples.max(2);
    let step = (hi - lo) / T::from_count(samples - 1);
    (0..samples).map(move |k| if k + 1 == samples { hi } else { lo + step * T::from_count(k) })
}

/// Moments of the weight with their tail diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct WeightMomentReport<T> {
    pub mass: T,
    pub second_moment: T,
    pub sup: T,
    /// Relative change of each moment between the half and the full window.
    pub mass_window_change: T,
    pub second_moment_window_change: T,
    /// Estimated power-law decay exponents of the integrands at `R`.
    pub mass_decay_exponent: T,
    pub second_moment_decay_exponent: T,
}

/// Relative change above which a moment is declared divergent.
pub const MOMENT_WINDOW_TOLERANCE: f64 = 0.01;

/// Integral over the ball of radius `cutoff` plus a power-law estimate of the
/// remainder, with the decay exponent fitted between `0.75·cutoff` and `cutoff`.
fn moment_with_tail<T: Real>(grid: &RadialGrid<T>, v: &[T], cutoff: T) -> (T, T) {
    let dim = T::from_count(grid.dim());
    let inner = weighted_integral_within(grid, v, cutoff);
    let near = grid.interpolate(v, cutoff);
    let before = grid.interpolate(v, T::lit(0.75) * cutoff);
    if near <= T::zero() || before <= T::zero() {
        return (inner, T::infinity());
    }
    let exponent = (before / near).ln() / (T::lit(4.0) / T::lit(3.0)).ln();
    if exponent <= dim {
        return (inner, exponent);
    }
    let tail = grid.sphere_area() * near * cutoff.powf(dim) / (exponent - dim);
    (inner + tail, exponent)
}

/// Mass, second moment and supremum of the weight, each certified stable
/// between the windows `[0, R/2]` and `[0, R]`.
pub fn check_p1<T: Real>(weight: &WeightSpec<T>, grid: &RadialGrid<T>) -> Result<WeightMomentReport<T>> {
    let mass = weight.mass(grid)?;
    let p = &mass.diag;
    let r2p: Vec<T> = grid.nodes().iter().zip(p).map(|(&r, &x)| r * r * x).collect();
    let dim = T::from_count(grid.dim());
    let radius = grid.radius();
    let half = radius * T::lit(0.5);
    let tol = T::lit(MOMENT_WINDOW_TOLERANCE);

    let stable = |name: &'static str, v: &[T]| -> Result<(T, T, T)> {
        let (full, exponent) = moment_with_tail(grid, v, radius);
        let (partial, half_exponent) = moment_with_tail(grid, v, half);
        if !(exponent > dim) || !(half_exponent > dim) {
            return Err(Error::DivergentMoment { moment: name, relative_change: f64::INFINITY });
        }
        let change = ((full - partial) / full).abs();
        if !(change < tol) {
            return Err(Error::DivergentMoment { moment: name, relative_change: change.as_f64() });
        }
        Ok((full, change, exponent))
    };
    let (m0, c0, e0) = stable("mass", p)?;
    let (m2, c2, e2) = stable("second_moment", &r2p)?;
    Ok(WeightMomentReport {
        mass: m0,
        second_moment: m2,
        sup: max_abs(p),
        mass_window_change: c0,
        second_moment_window_change: c2,
        mass_decay_exponent: e0,
        second_moment_decay_exponent: e2,
    })
}

/// Scaled Riesz potential `r^{N-2}·∫ P(y)|x - y|^{2-N} dy` at each probe.
#[derive(Debug, Clone, Serialize)]
pub struct PotentialBoundReport<T> {
    pub probes: Vec<T>,
    /// Raw kernel integral at each probe.
    pub potential: Vec<T>,
    /// `r^{N-2}` times the raw kernel integral.
    pub scaled: Vec<T>,
    pub constant_estimate: T,
    /// Max/min of the scaled values over the largest decade of probes is within 5%.
    pub plateau: bool,
}

pub fn check_p2<T: Real>(weight: &WeightSpec<T>, grid: &RadialGrid<T>, probes: &[T]) -> Result<PotentialBoundReport<T>> {
    let radius = grid.radius();
    for &r in probes {
        if !(r > T::zero()) || r > radius {
            return Err(Error::ProbeOutOfRange { radius: r.as_f64(), max: radius.as_f64() });
        }
    }
    let rho = weight.sample(grid);
    let u = riesz_potential(grid, &rho);
    // The Newtonian potential carries 1/((N-2)σ); undo it for the raw kernel.
    let kernel = T::from_count(grid.dim() - 2) * grid.sphere_area();
    let p = grid.dim() as i32 - 2;
    let potential: Vec<T> = probes.iter().map(|&r| kernel * grid.interpolate(&u, r)).collect();
    let scaled: Vec<T> = probes.iter().zip(&potential).map(|(&r, &v)| r.powi(p) * v).collect();
    let constant_estimate = scaled.iter().fold(T::zero(), |m, &x| m.max(x));
    let top = probes.iter().fold(T::zero(), |m, &x| m.max(x));
    let decade: Vec<T> = probes
        .iter()
        .zip(&scaled)
        .filter(|(&r, _)| r >= top / T::lit(10.0))
        .map(|(_, &s)| s)
        .collect();
    let hi = decade.iter().fold(T::zero(), |m, &x| m.max(x));
    let lo = decade.iter().fold(T::infinity(), |m, &x| m.min(x));
    let plateau = decade.is_empty() || hi == T::zero() || (lo > T::zero() && hi / lo <= T::lit(1.05));
    Ok(PotentialBoundReport { probes: probes.to_vec(), potential, scaled, constant_estimate, plateau })
}

#[derive(Debug, Clone, Serialize)]
pub struct SlackReport<T> {
    pub theta: T,
    /// `sup (μ̲s - g(s))` and `sup (μ̄s - g(s))` over the samples.
    pub lower_gap: T,
    pub upper_gap: T,
    /// Secant slopes over the outer halves of the positive and negative ranges.
    pub slope_plus: T,
    pub slope_minus: T,
    /// A supremum is still growing at the edge of the sampled range.
    pub boundary_warning: bool,
}

/// Default sample count for slack and growth checks.
pub const SLACK_SAMPLES: usize = 20_001;

/// Minimal `Θ ≥ 0` with `g(s) ≥ μ̲s - Θ` and `g(s) ≥ μ̄s - Θ` at every sample.
pub fn derive_slack_constants<T: Real>(
    g: &dyn Fn(T) -> T,
    mu_lower: T,
    mu_upper: T,
    range: (T, T),
    samples: usize,
) -> Result<SlackReport<T>> {
    let (lo, hi) = range;
    if lo > T::lit(-50.0) || hi < T::lit(50.0) {
        return Err(Error::InvalidParameter(format!("sample range [{lo}, {hi}] must cover [-50, 50]")));
    }
    if !(mu_lower < mu_upper) {
        return Err(Error::SlopeViolation(format!("mu_lower {mu_lower} is not below mu_upper {mu_upper}")));
    }
    let two = T::lit(2.0);
    let slope_plus = (g(hi) - g(hi / two)) / (hi / two);
    let slope_minus = (g(lo) - g(lo / two)) / (lo / two);
    if !(slope_plus > mu_lower) {
        return Err(Error::SlopeViolation(format!(
            "secant slope {slope_plus} near +inf does not exceed mu_lower {mu_lower}"
        )));
    }
    if !(slope_minus < mu_upper) {
        return Err(Error::SlopeViolation(format!(
            "secant slope {slope_minus} near -inf is not below mu_upper {mu_upper}"
        )));
    }
    let samples = samples.max(3);
    let mut lower_gap = T::neg_infinity();
    let mut upper_gap = T::neg_infinity();
    let mut interior = T::neg_infinity();
    let mut edge = T::neg_infinity();
    for (k, s) in sample_range(lo, hi, samples).enumerate() {
        let gs = g(s);
        let a = mu_lower * s - gs;
        let b = mu_upper * s - gs;
        lower_gap = lower_gap.max(a);
        upper_gap = upper_gap.max(b);
        if k == 0 || k + 1 == samples {
            edge = edge.max(a.max(b));
        } else {
            interior = interior.max(a.max(b));
        }
    }
    let theta = lower_gap.max(upper_gap).max(T::zero());
    let boundary_warning = edge > interior + T::lit(1e-9) * (T::one() + theta.abs());
    Ok(SlackReport { theta, lower_gap, upper_gap, slope_plus, slope_minus, boundary_warning })
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport<T> {
    /// `N/(N-2)`.
    pub sigma: T,
    /// Max of `g(s)/s^σ` over the top decade `[hi/10, hi]`.
    pub max_ratio_tail: T,
    /// The ratio decreases across the top decade.
    pub compliant: bool,
}

pub fn check_sigma_growth<T: Real>(g: &dyn Fn(T) -> T, dim: usize, hi: T, samples: usize) -> Result<GrowthReport<T>> {
    if dim < 3 {
        return Err(Error::InvalidParameter(format!("dimension {dim} < 3")));
    }
    if !(hi > T::zero()) {
        return Err(Error::InvalidParameter("growth range must extend to positive s".into()));
    }
    let sigma = T::from_count(dim) / T::from_count(dim - 2);
    let ratios: Vec<T> = sample_range(hi / T::lit(10.0), hi, samples.max(2))
        .map(|s| g(s) / s.powf(sigma))
        .collect();
    let max_ratio_tail = ratios.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let first = ratios[0];
    let last = ratios[ratios.len() - 1];
    let compliant = max_ratio_tail.is_finite() && last.abs() <= first.abs();
    Ok(GrowthReport { sigma, max_ratio_tail, compliant })
}

/// Largest tolerated `|∫Pφ² - 1|` before decomposition refuses an eigenfunction.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-10;

/// Splits `f = tφ₁ + f₁` with `∫Pf₁φ₁ = 0`.
pub fn decompose_forcing<T: Real>(
    grid: &RadialGrid<T>,
    mass: &WeightMass<T>,
    eigen: &EigenPair<T>,
    f: &[T],
) -> Result<(T, Vec<T>)> {
    let phi = &eigen.phi1;
    let norm = weighted_pair(grid, mass, phi, phi);
    let residual = (norm - T::one()).abs();
    if !(residual <= T::lit(NORMALIZATION_TOLERANCE)) {
        return Err(Error::NotNormalized { residual: residual.as_f64() });
    }
    if f.len() != phi.len() {
        return Err(Error::DimensionMismatch { expected: phi.len(), got: f.len() });
    }
    let t = weighted_pair(grid, mass, f, phi);
    let f1 = f.iter().zip(phi).map(|(&x, &p)| x - t * p).collect();
    Ok((t, f1))
}

fn weighted_pair<T: Real>(grid: &RadialGrid<T>, mass: &WeightMass<T>, u: &[T], v: &[T]) -> T {
    crate::radial::weighted_inner(grid, mass, u, v)
}

/// Weight, nonlinearity, orthogonal forcing part and discretization of one
/// problem. The forcing coefficient `t` is supplied per query.
#[derive(Debug, Clone)]
pub struct ProblemInstance<T: Real> {
    pub grid: RadialGrid<T>,
    pub bc: BoundaryCondition,
    pub weight: WeightSpec<T>,
    pub mass: WeightMass<T>,
    pub laplacian: TridiagonalOperator<T>,
    pub nonlinearity: NonlinearitySpec<T>,
    pub f1: Vec<T>,
    pub eigen: Option<EigenPair<T>>,
}

impl<T: Real> ProblemInstance<T> {
    pub fn new(
        weight: WeightSpec<T>,
        nonlinearity: NonlinearitySpec<T>,
        grid: RadialGrid<T>,
        bc: BoundaryCondition,
    ) -> Result<Self> {
        if grid.len() < MIN_INSTANCE_NODES {
            return Err(Error::BadGridConfig(format!(
                "{} nodes, problem instances need at least {MIN_INSTANCE_NODES}",
                grid.len()
            )));
        }
        if weight.dim != grid.dim() {
            return Err(Error::BadGridConfig(format!(
                "weight dimension {} differs from grid dimension {}",
                weight.dim,
                grid.dim()
            )));
        }
        let mass = weight.mass(&grid)?;
        let laplacian = assemble_laplacian(&grid, bc);
        let f1 = vec![T::zero(); grid.len()];
        Ok(Self { grid, bc, weight, mass, laplacian, nonlinearity, f1, eigen: None })
    }

    /// Computes and attaches the first eigenpair.
    pub fn with_eigen(self, opts: &EigenOptions<T>) -> Result<Self> {
        let eig = first_eigenpair(&self.grid, &self.laplacian, &self.mass, opts)?;
        self.attach_eigen(eig)
    }

    /// Attaches an eigenpair and checks `μ̲ < λ₁ < μ̄`.
    pub fn attach_eigen(mut self, eig: EigenPair<T>) -> Result<Self> {
        let nl = &self.nonlinearity;
        if !(nl.mu_lower < eig.lambda1 && eig.lambda1 < nl.mu_upper) {
            return Err(Error::InvalidParameter(format!(
                "slopes ({}, {}) do not straddle lambda1 = {}",
                nl.mu_lower, nl.mu_upper, eig.lambda1
            )));
        }
        self.eigen = Some(eig);
        Ok(self)
    }

    /// Attaches an eigenpair without the slope check (linear or degenerate `g`).
    pub fn attach_eigen_unchecked(mut self, eig: EigenPair<T>) -> Self {
        self.eigen = Some(eig);
        self
    }

    /// Sets the forcing remainder, projecting out any `φ₁` component.
    pub fn with_forcing(mut self, f: &[T]) -> Result<Self> {
        let eig = self.eigen()?;
        let (_, f1) = decompose_forcing(&self.grid, &self.mass, eig, f)?;
        self.f1 = f1;
        Ok(self)
    }

    pub fn eigen(&self) -> Result<&EigenPair<T>> {
        self.eigen.as_ref().ok_or(Error::EigenMissing)
    }

    pub fn phi(&self) -> Result<&[T]> {
        Ok(&self.eigen()?.phi1)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// `P·(g(u) + tφ₁ + f₁)` with pinned rows zeroed.
    pub fn source(&self, t: T, u: &[T]) -> Result<Vec<T>> {
        let phi = self.phi()?;
        let g = &self.nonlinearity.g;
        let mut s: Vec<T> = (0..self.len())
            .map(|i| self.mass.diag[i] * (g(u[i]) + t * phi[i] + self.f1[i]))
            .collect();
        self.laplacian.constrain(&mut s);
        Ok(s)
    }
}

/// The reference instance: `N = 3`, `P = (1 + r²)^{-3}`, Robin far field,
/// `g(s) = μ̲s + (μ̄ - μ̲)ln(1 + eˢ) - 1` with `μ̲ = λ₁/2`, `μ̄ = 2λ₁`, `f₁ = 0`.
pub fn canonical_instance<T: Real>(n: usize, radius: T) -> Result<ProblemInstance<T>> {
    let grid = build_grid(3, radius, n, T::one())?;
    let bc = BoundaryCondition::robin_decay();
    let weight = WeightSpec::canonical();
    let placeholder = NonlinearitySpec::zero();
    let base = ProblemInstance::new(weight, placeholder, grid, bc)?;
    let eig = first_eigenpair(&base.grid, &base.laplacian, &base.mass, &EigenOptions::default())?;
    let lambda = eig.lambda1;
    let g = NonlinearitySpec::softplus(T::lit(0.5) * lambda, T::lit(2.0) * lambda, T::one());
    let slack = derive_slack_constants(&*g.g, g.mu_lower, g.mu_upper, (T::lit(-50.0), T::lit(50.0)), SLACK_SAMPLES)?;
    let g = g.with_theta(slack.theta);
    let mut instance = base;
    instance.nonlinearity = g;
    instance.attach_eigen(eig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn grid(n: usize) -> RadialGrid<f64> {
        build_grid(3, 40.0, n, 1.0).unwrap()
    }

    #[test]
    fn canonical_moments() {
        let w = WeightSpec::<f64>::canonical();
        let rep = check_p1(&w, &grid(4000)).unwrap();
        assert_relative_eq!(rep.mass, PI * PI / 4.0, max_relative = 1e-3);
        assert_relative_eq!(rep.second_moment, 3.0 * PI * PI / 4.0, max_relative = 1e-3);
        assert_eq!(rep.sup, 1.0);
    }

    #[test]
    fn zero_and_flat_weights_rejected() {
        let zero = WeightSpec::new(3, WeightProfile::Constant { value: 0.0 });
        assert!(matches!(check_p1(&zero, &grid(100)), Err(Error::NonPositiveWeight { .. })));
        let flat = WeightSpec::new(3, WeightProfile::Constant { value: 1.0 });
        assert!(matches!(check_p1(&flat, &grid(100)), Err(Error::DivergentMoment { .. })));
        // r² P ~ r^{-2} for power 2 is not integrable in three dimensions.
        let slow = WeightSpec::new(3, WeightProfile::RationalDecay { power: 2.0 });
        assert!(matches!(check_p1(&slow, &grid(2000)), Err(Error::DivergentMoment { moment: "second_moment", .. })));
    }

    #[test]
    fn potential_bound_for_canonical_weight() {
        let w = WeightSpec::<f64>::canonical();
        let g = grid(4000);
        let rep = check_p2(&w, &g, &[1e-6, 10.0, 20.0, 40.0]).unwrap();
        assert_relative_eq!(rep.potential[0], PI, max_relative = 1e-3);
        for s in &rep.scaled[1..] {
            assert_relative_eq!(*s, PI * PI / 4.0, max_relative = 0.05);
        }
        assert!(rep.plateau);
        let zero = WeightSpec::new(3, WeightProfile::Constant { value: 0.0 });
        assert_eq!(check_p2(&zero, &g, &[1.0, 10.0]).unwrap().constant_estimate, 0.0);
        assert!(matches!(check_p2(&w, &g, &[41.0]), Err(Error::ProbeOutOfRange { .. })));
    }

    #[test]
    fn canonical_slack_is_one() {
        let g = NonlinearitySpec::<f64>::softplus(2.8, 11.3, 1.0);
        let rep = derive_slack_constants(&*g.g, 2.8, 11.3, (-50.0, 50.0), SLACK_SAMPLES).unwrap();
        assert!((rep.theta - 1.0).abs() < 1e-12);
        assert!(!rep.boundary_warning);
    }

    #[test]
    fn slope_violations() {
        let g = |s: f64| 3.0 * s;
        assert!(matches!(derive_slack_constants(&g, 3.0, 3.0, (-50.0, 50.0), 101), Err(Error::SlopeViolation(_))));
        // A line of slope μ̄ lies below μ̲s for s < 0, so no finite slack covers all of ℝ.
        let g = |s: f64| 10.0 * s;
        assert!(matches!(derive_slack_constants(&g, 3.0, 10.0, (-50.0, 50.0), 101), Err(Error::SlopeViolation(_))));
        assert!(derive_slack_constants(&g, 3.0, 10.0, (-10.0, 50.0), 101).is_err());
    }

    #[test]
    fn sigma_growth() {
        let g = NonlinearitySpec::<f64>::softplus(2.8, 11.3, 1.0);
        let a = check_sigma_growth(&*g.g, 3, 50.0, 1000).unwrap();
        assert_eq!(a.sigma, 3.0);
        assert_eq!(check_sigma_growth(&*g.g, 4, 50.0, 10).unwrap().sigma, 2.0);
        assert!(a.compliant);
        let b = check_sigma_growth(&*g.g, 3, 100.0, 1000).unwrap();
        assert!(b.max_ratio_tail < 0.3 * a.max_ratio_tail);
        let cubic = |s: f64| s * s * s * s;
        assert!(!check_sigma_growth(&cubic, 3, 50.0, 100).unwrap().compliant);
    }

    #[test]
    fn stable_softplus() {
        assert_eq!(softplus(1000.0f64), 1000.0);
        assert!(softplus(-1000.0f64) >= 0.0);
        assert_relative_eq!(softplus(0.0f64), 2f64.ln());
        assert_relative_eq!(logistic(0.0f64), 0.5);
        assert!(logistic(-800.0f64).is_finite());
    }

    #[test]
    fn table_weight_interpolates() {
        let w = WeightSpec::new(3, WeightProfile::Table { radii: vec![0.0, 1.0, 2.0], values: vec![1.0, 0.5, 0.25] });
        assert_eq!(w.evaluate(0.5), 0.75);
        assert_eq!(w.evaluate(5.0), 0.25);
    }

    #[test]
    fn mass_entries() {
        let g = grid(41);
        let m = WeightSpec::<f64>::canonical().mass(&g).unwrap();
        assert_eq!(m.diag[0], 1.0);
        assert_eq!(m.diag[1], 0.125);
        let ones = WeightSpec::new(3, WeightProfile::Constant { value: 1.0 }).mass(&g).unwrap();
        assert!(ones.diag.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn small_instance_grid_rejected() {
        let g = build_grid(3, 40.0, 5, 1.0).unwrap();
        let r = ProblemInstance::new(WeightSpec::canonical(), NonlinearitySpec::zero(), g, BoundaryCondition::robin_decay());
        assert!(matches!(r, Err(Error::BadGridConfig(_))));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::eigen::{first_eigenpair, EigenOptions};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn canonical_pair() -> &'static (RadialGrid<f64>, WeightMass<f64>, EigenPair<f64>) {
        static PAIR: OnceLock<(RadialGrid<f64>, WeightMass<f64>, EigenPair<f64>)> = OnceLock::new();
        PAIR.get_or_init(|| {
            let g = build_grid(3, 40.0, 400, 1.0).unwrap();
            let a = crate::radial::assemble_laplacian(&g, BoundaryCondition::robin_decay());
            let m = WeightSpec::canonical().mass(&g).unwrap();
            let e = first_eigenpair(&g, &a, &m, &EigenOptions::default()).unwrap();
            (g, m, e)
        })
    }

    proptest! {
        #[test]
        fn decomposition_is_a_projection(
            amp in proptest::collection::vec(-3.0f64..3.0, 4),
            width in 0.5f64..8.0,
        ) {
            let (g, m, e) = canonical_pair();
            let f: Vec<f64> = g.nodes().iter().enumerate()
                .map(|(i, &r)| amp[0] * (-r / width).exp() + amp[1] * (r / 10.0).sin() + amp[2] + amp[3] * e.phi1[i])
                .collect();
            let (t, f1) = decompose_forcing(g, m, e, &f).unwrap();
            let along = crate::radial::weighted_inner(g, m, &f1, &e.phi1);
            let size = f.iter().fold(1.0f64, |s, x| s.max(x.abs()));
            prop_assert!(along.abs() <= 1e-10 * size);
            let (t2, f2) = decompose_forcing(g, m, e, &f1).unwrap();
            prop_assert!(t2.abs() <= 1e-10 * size);
            prop_assert!(f1.iter().zip(&f2).all(|(a, b)| (a - b).abs() <= 1e-10 * size));
            let rebuilt: Vec<f64> = f1.iter().zip(&e.phi1).map(|(a, p)| a + t * p).collect();
            prop_assert!(rebuilt.iter().zip(&f).all(|(a, b)| (a - b).abs() <= 1e-12 * size));
        }

        #[test]
        fn slack_inequality_holds_between_samples(
            mu_l in 0.5f64..5.0,
            gap in 0.5f64..20.0,
            offset in -3.0f64..3.0,
            s in -60.0f64..60.0,
        ) {
            let g = NonlinearitySpec::softplus(mu_l, mu_l + gap, offset);
            let rep = derive_slack_constants(&*g.g, g.mu_lower, g.mu_upper, (-60.0, 60.0), SLACK_SAMPLES).unwrap();
            let gs = g.eval(s);
            // sampled supremum; allow the chord error of the sampling
            let slack = 1e-3 * (1.0 + rep.theta);
            prop_assert!(gs >= mu_l * s - rep.theta - slack);
            prop_assert!(gs >= (mu_l + gap) * s - rep.theta - slack);
        }
    }
}
