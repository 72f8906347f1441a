//! Radial grids, the discrete N-dimensional radial Laplacian and the
//! quadrature rules every integral over ℝᴺ is reduced to.
//!
//! The Laplacian is assembled in finite-volume form: node `i` owns the shell
//! between the neighbouring midpoints, so that with `D` the diagonal of shell
//! volumes and `K` the symmetric stiffness matrix the operator is
//! `A = D⁻¹K`. The energy `uᵀKu` equals [`dirichlet_energy`] plus, for the
//! decay-matched far field, the energy of the harmonic continuation
//! `u(R)(R/r)^{N-2}` beyond `R` ([`exterior_energy`]). Quadrature uses the same
//! shell volumes, which keeps discrete Rayleigh quotients exact for the
//! assembled pencil.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{max_abs, sphere_area, Real};

/// Smallest node count accepted by [`build_grid`].
pub const MIN_GRID_NODES: usize = 3;

/// Condition imposed at the truncation radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FarField {
    /// `u'(R) + ((N-2)/R) u(R) = 0`, exact for `r^{-(N-2)}` tails.
    RobinDecay,
    /// `u(R) = 0`.
    Dirichlet,
}

/// Boundary data of the radial problem. The origin always carries the
/// symmetry condition `u'(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryCondition {
    pub far_field: FarField,
}

impl BoundaryCondition {
    pub fn robin_decay() -> Self {
        Self { far_field: FarField::RobinDecay }
    }

    pub fn dirichlet() -> Self {
        Self { far_field: FarField::Dirichlet }
    }

    /// Residual of the far-field condition given the value and slope at `R`.
    pub fn far_field_residual<T: Real>(&self, dim: usize, radius: T, value: T, slope: T) -> T {
        match self.far_field {
            FarField::RobinDecay => slope + T::from_count(dim - 2) / radius * value,
            FarField::Dirichlet => value,
        }
    }
}

/// Nodes `0 = r₀ < r₁ < … < r_{n-1} = R` with their shell volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid<T> {
    dim: usize,
    radius: T,
    stretch: T,
    nodes: Vec<T>,
    volumes: Vec<T>,
    sphere_area: T,
}

/// Builds a uniform (`stretch == 1`) or geometrically stretched grid whose
/// consecutive spacings grow by the factor `stretch`.
pub fn build_grid<T: Real>(dim: usize, radius: T, n: usize, stretch: T) -> Result<RadialGrid<T>> {
    if dim < 3 {
        return Err(Error::BadGridConfig(format!("dimension {dim} < 3")));
    }
    if !(radius > T::zero()) || !radius.is_finite() {
        return Err(Error::BadGridConfig(format!("radius {radius} must be positive")));
    }
    if n < MIN_GRID_NODES {
        return Err(Error::BadGridConfig(format!("{n} nodes, need at least {MIN_GRID_NODES}")));
    }
    if !(stretch >= T::one()) || !stretch.is_finite() {
        return Err(Error::BadGridConfig(format!("stretch {stretch} must be >= 1")));
    }
    let last = n - 1;
    let mut nodes: Vec<T> = if stretch == T::one() {
        let cells = T::from_count(last);
        (0..n).map(|i| radius * T::from_count(i) / cells).collect()
    } else {
        let total = stretch.powi(last as i32) - T::one();
        (0..n)
            .map(|i| radius * (stretch.powi(i as i32) - T::one()) / total)
            .collect()
    };
    nodes[last] = radius;
    if nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::BadGridConfig("nodes are not strictly increasing".into()));
    }
    Ok(RadialGrid::from_nodes(dim, stretch, nodes))
}

impl<T: Real> RadialGrid<T> {
    fn from_nodes(dim: usize, stretch: T, nodes: Vec<T>) -> Self {
        let n = nodes.len();
        let radius = nodes[n - 1];
        let sphere = sphere_area::<T>(dim);
        let half = T::lit(0.5);
        let d = dim as i32;
        let factor = sphere / T::from_count(dim);
        let edge = |i: usize| -> T {
            if i == 0 {
                T::zero()
            } else if i == n {
                radius
            } else {
                half * (nodes[i - 1] + nodes[i])
            }
        };
        let volumes = (0..n)
            .map(|i| factor * (edge(i + 1).powi(d) - edge(i).powi(d)))
            .collect();
        Self { dim, radius, stretch, nodes, volumes, sphere_area: sphere }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn stretch(&self) -> T {
        self.stretch
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    /// Volume of the shell owned by each node.
    pub fn volumes(&self) -> &[T] {
        &self.volumes
    }

    /// σ_{N-1}, the area of the unit sphere.
    pub fn sphere_area(&self) -> T {
        self.sphere_area
    }

    /// Spacing `r_{i+1} - r_i`.
    pub fn spacing(&self, i: usize) -> T {
        self.nodes[i + 1] - self.nodes[i]
    }

    /// `r^{N-2}` at every node, the weight of the E₀ tail seminorm.
    pub fn decay_weights(&self) -> Vec<T> {
        let p = (self.dim - 2) as i32;
        self.nodes.iter().map(|r| r.powi(p)).collect()
    }

    /// Indices of the nodes inside `[lo, hi]`.
    pub fn window(&self, lo: T, hi: T) -> std::ops::Range<usize> {
        let start = self.nodes.partition_point(|&r| r < lo);
        let end = self.nodes.partition_point(|&r| r <= hi);
        start..end.max(start)
    }

    /// Flux coefficient `σ r_{i+1/2}^{N-1} / h_i` between nodes `i` and `i+1`.
    pub fn coupling(&self, i: usize) -> T {
        let mid = T::lit(0.5) * (self.nodes[i] + self.nodes[i + 1]);
        self.sphere_area * mid.powi(self.dim as i32 - 1) / self.spacing(i)
    }

    /// Linear interpolation of a grid function at radius `r` (clamped to the grid).
    pub fn interpolate(&self, v: &[T], r: T) -> T {
        let n = self.len();
        if r <= self.nodes[0] {
            return v[0];
        }
        if r >= self.nodes[n - 1] {
            return v[n - 1];
        }
        let k = self.nodes.partition_point(|&x| x <= r) - 1;
        let s = (r - self.nodes[k]) / self.spacing(k);
        v[k] + s * (v[k + 1] - v[k])
    }
}

/// Tridiagonal operator with `sub[0] = 0` and `sup[n-1] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalOperator<T> {
    pub sub: Vec<T>,
    pub diag: Vec<T>,
    pub sup: Vec<T>,
    pub far_field: FarField,
}

/// Pivot sign counts of the symmetrizable operator (Sylvester inertia).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

/// Discretizes `-u'' - ((N-1)/r) u'` with the symmetry closure at the origin.
pub fn assemble_laplacian<T: Real>(grid: &RadialGrid<T>, bc: BoundaryCondition) -> TridiagonalOperator<T> {
    let n = grid.len();
    let vol = grid.volumes();
    let mut sub = vec![T::zero(); n];
    let mut diag = vec![T::zero(); n];
    let mut sup = vec![T::zero(); n];
    for i in 0..n - 1 {
        let c = grid.coupling(i);
        diag[i] = diag[i] + c / vol[i];
        sup[i] = -c / vol[i];
        diag[i + 1] = diag[i + 1] + c / vol[i + 1];
        sub[i + 1] = -c / vol[i + 1];
    }
    let last = n - 1;
    match bc.far_field {
        FarField::RobinDecay => {
            let dim = grid.dim();
            let tail = grid.sphere_area()
                * T::from_count(dim - 2)
                * grid.radius().powi(dim as i32 - 2);
            diag[last] = diag[last] + tail / vol[last];
        }
        FarField::Dirichlet => {
            // Row pins u(R) = 0; its scale matches the neighbouring row.
            diag[last] = diag[last - 1];
            sub[last] = T::zero();
        }
    }
    TridiagonalOperator { sub, diag, sup, far_field: bc.far_field }
}

/// Diagonal `P(rᵢ)` of the weighted mass.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMass<T> {
    pub diag: Vec<T>,
}

pub fn assemble_weight_mass<T: Real>(grid: &RadialGrid<T>, weight: impl Fn(T) -> T) -> Result<WeightMass<T>> {
    let mut diag = Vec::with_capacity(grid.len());
    for (i, &r) in grid.nodes().iter().enumerate() {
        let p = weight(r);
        if !(p > T::zero()) || !p.is_finite() {
            return Err(Error::NonPositiveWeight { index: i, radius: r.as_f64(), value: p.as_f64() });
        }
        diag.push(p);
    }
    Ok(WeightMass { diag })
}

impl<T: Real> WeightMass<T> {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, v: &[T]) -> Vec<T> {
        self.diag.iter().zip(v).map(|(&p, &x)| p * x).collect()
    }
}

impl<T: Real> TridiagonalOperator<T> {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Whether the last row pins a prescribed value instead of an equation.
    pub fn constrained_last(&self) -> bool {
        self.far_field == FarField::Dirichlet
    }

    /// Zeroes right-hand-side entries of pinned rows.
    pub fn constrain(&self, rhs: &mut [T]) {
        if self.constrained_last() {
            if let Some(last) = rhs.last_mut() {
                *last = T::zero();
            }
        }
    }

    pub fn apply(&self, u: &[T]) -> Vec<T> {
        let n = self.len();
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = self.diag[i] * u[i];
            if i > 0 {
                acc = acc + self.sub[i] * u[i - 1];
            }
            if i + 1 < n {
                acc = acc + self.sup[i] * u[i + 1];
            }
            y.push(acc);
        }
        y
    }

    /// Adds `coef[i]` to the diagonal of every equation row.
    pub fn add_diagonal(&self, coef: &[T]) -> Self {
        let mut out = self.clone();
        let rows = if self.constrained_last() { self.len() - 1 } else { self.len() };
        for (d, &c) in out.diag[..rows].iter_mut().zip(coef) {
            *d = *d + c;
        }
        out
    }

    /// `A + shift·M_P` on equation rows.
    pub fn shifted(&self, mass: &WeightMass<T>, shift: T) -> Self {
        let coef: Vec<T> = mass.diag.iter().map(|&p| shift * p).collect();
        self.add_diagonal(&coef)
    }

    /// Largest absolute row sum.
    pub fn row_scale(&self) -> T {
        (0..self.len())
            .map(|i| self.sub[i].abs() + self.diag[i].abs() + self.sup[i].abs())
            .fold(T::zero(), T::max)
    }

    fn entry_scale(&self) -> T {
        max_abs(&self.sub).max(max_abs(&self.diag)).max(max_abs(&self.sup))
    }

    /// Direct solve by Gaussian elimination with partial pivoting.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: rhs.len() });
        }
        let tiny = T::lit(1e-14) * self.entry_scale();
        let singular = |row: usize, pivot: T| Error::SingularOperator { row, pivot: pivot.as_f64() };
        let mut d = self.diag.clone();
        let mut du = self.sup.clone();
        // dl[i] holds A(i+1, i); after elimination it stores the second
        // superdiagonal fill created by row interchanges.
        let mut dl: Vec<T> = (0..n).map(|i| if i + 1 < n { self.sub[i + 1] } else { T::zero() }).collect();
        let mut b = rhs.to_vec();
        if n == 1 {
            if d[0].abs() <= tiny {
                return Err(singular(0, d[0]));
            }
            return Ok(vec![b[0] / d[0]]);
        }
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i].abs() <= tiny {
                    return Err(singular(i, d[i]));
                }
                let fact = dl[i] / d[i];
                d[i + 1] = d[i + 1] - fact * du[i];
                b[i + 1] = b[i + 1] - fact * b[i];
                dl[i] = T::zero();
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                let temp = d[i + 1];
                d[i + 1] = du[i] - fact * temp;
                if i + 2 < n {
                    dl[i] = du[i + 1];
                    du[i + 1] = -fact * dl[i];
                } else {
                    dl[i] = T::zero();
                }
                du[i] = temp;
                let tb = b[i];
                b[i] = b[i + 1];
                b[i + 1] = tb - fact * b[i + 1];
            }
        }
        if d[n - 1].abs() <= tiny {
            return Err(singular(n - 1, d[n - 1]));
        }
        b[n - 1] = b[n - 1] / d[n - 1];
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - du[i] * b[i + 1] - dl[i] * b[i + 2]) / d[i];
        }
        if b.iter().any(|x| !x.is_finite()) {
            return Err(singular(n - 1, d[n - 1]));
        }
        Ok(b)
    }

    /// Pivot signs of elimination without interchanges. For operators with
    /// positive off-diagonal products (all assembled operators here) these are
    /// the signs of the eigenvalues of the symmetric pencil.
    pub fn inertia(&self) -> Inertia {
        let n = self.len();
        let tiny = T::lit(1e-14) * self.entry_scale();
        let mut counts = Inertia { negative: 0, zero: 0, positive: 0 };
        let mut prev = T::one();
        for i in 0..n {
            let mut p = self.diag[i];
            if i > 0 {
                p = p - self.sub[i] * self.sup[i - 1] / prev;
            }
            if p.abs() <= tiny {
                counts.zero += 1;
                p = if p < T::zero() { -tiny } else { tiny };
                if p == T::zero() {
                    p = T::min_positive_value();
                }
            } else if p < T::zero() {
                counts.negative += 1;
            } else {
                counts.positive += 1;
            }
            prev = p;
        }
        counts
    }

    /// Solve that first certifies positive definiteness through the pivot signs.
    pub fn solve_definite(&self, rhs: &[T]) -> Result<Vec<T>> {
        let inertia = self.inertia();
        if inertia.negative + inertia.zero > 0 {
            return Err(Error::IndefiniteOperator { negative: inertia.negative + inertia.zero });
        }
        self.solve(rhs)
    }

    /// Debug dump with columns `index, r, sub, diag, super`.
    pub fn write_csv<W: Write>(&self, grid: &RadialGrid<T>, mut out: W) -> io::Result<()> {
        writeln!(out, "index,r,sub,diag,super")?;
        for i in 0..self.len() {
            writeln!(out, "{},{},{},{},{}", i, grid.nodes()[i], self.sub[i], self.diag[i], self.sup[i])?;
        }
        Ok(())
    }
}

/// `∫_{ℝᴺ} v dx` for a radial `v` supported in the ball of radius `R`.
pub fn weighted_integral<T: Real>(grid: &RadialGrid<T>, v: &[T]) -> T {
    grid.volumes().iter().zip(v).map(|(&w, &x)| w * x).sum()
}

/// Same quadrature restricted to the ball of radius `cutoff ≤ R`.
pub fn weighted_integral_within<T: Real>(grid: &RadialGrid<T>, v: &[T], cutoff: T) -> T {
    let n = grid.len();
    let nodes = grid.nodes();
    let d = grid.dim() as i32;
    let factor = grid.sphere_area() / T::from_count(grid.dim());
    let half = T::lit(0.5);
    let mut acc = T::zero();
    for i in 0..n {
        let lo = if i == 0 { T::zero() } else { half * (nodes[i - 1] + nodes[i]) };
        if lo >= cutoff {
            break;
        }
        let hi = if i + 1 == n { nodes[i] } else { half * (nodes[i] + nodes[i + 1]) };
        let hi = hi.min(cutoff);
        acc = acc + factor * (hi.powi(d) - lo.powi(d)) * v[i];
    }
    acc
}

/// `∫_{B_R} |∇u|² dx` in the midpoint-flux form.
pub fn dirichlet_energy<T: Real>(grid: &RadialGrid<T>, u: &[T]) -> T {
    (0..grid.len() - 1)
        .map(|i| {
            let du = u[i + 1] - u[i];
            grid.coupling(i) * du * du
        })
        .sum()
}

/// Energy of the harmonic continuation `u(R)(R/r)^{N-2}` outside the ball.
pub fn exterior_energy<T: Real>(grid: &RadialGrid<T>, u: &[T]) -> T {
    let dim = grid.dim();
    let tail = u[grid.len() - 1];
    grid.sphere_area() * T::from_count(dim - 2) * grid.radius().powi(dim as i32 - 2) * tail * tail
}

/// Total energy `∫_{ℝᴺ} |∇u|²` of the extension selected by the far field.
pub fn total_energy<T: Real>(grid: &RadialGrid<T>, far_field: FarField, u: &[T]) -> T {
    match far_field {
        FarField::RobinDecay => dirichlet_energy(grid, u) + exterior_energy(grid, u),
        FarField::Dirichlet => dirichlet_energy(grid, u),
    }
}

/// Discrete `∫ P u v dx`.
pub fn weighted_inner<T: Real>(grid: &RadialGrid<T>, mass: &WeightMass<T>, u: &[T], v: &[T]) -> T {
    (0..grid.len())
        .map(|i| grid.volumes()[i] * mass.diag[i] * u[i] * v[i])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn uniform(n: usize) -> RadialGrid<f64> {
        build_grid(3, 40.0, n, 1.0).unwrap()
    }

    #[test]
    fn uniform_nodes() {
        let g = uniform(5);
        assert_eq!(g.nodes(), &[0.0, 10.0, 20.0, 30.0, 40.0]);
        let g = uniform(4000);
        assert_relative_eq!(g.spacing(0), 40.0 / 3999.0, max_relative = 1e-14);
        assert_relative_eq!(g.spacing(0), 0.010002500625156289, max_relative = 1e-12);
    }

    #[test]
    fn geometric_stretch_ratio() {
        let g = build_grid(3, 40.0, 100, 1.02).unwrap();
        let ratio = g.spacing(98) / g.spacing(0);
        assert_relative_eq!(ratio, 1.02f64.powi(98), max_relative = 1e-10);
        assert_eq!(g.nodes()[99], 40.0);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn bad_configs_rejected() {
        assert!(matches!(build_grid(2, 1.0, 10, 1.0), Err(Error::BadGridConfig(_))));
        assert!(matches!(build_grid(3, -1.0, 10, 1.0), Err(Error::BadGridConfig(_))));
        assert!(matches!(build_grid(3, 1.0, 2, 1.0), Err(Error::BadGridConfig(_))));
        assert!(matches!(build_grid(3, 1.0, 10, 0.5), Err(Error::BadGridConfig(_))));
    }

    #[test]
    fn volumes_sum_to_ball() {
        for stretch in [1.0, 1.001] {
            let g = build_grid(3, 40.0, 1000, stretch).unwrap();
            let ball = 4.0 / 3.0 * std::f64::consts::PI * 40f64.powi(3);
            assert_relative_eq!(g.volumes().iter().sum::<f64>(), ball, max_relative = 1e-12);
            let ones = vec![1.0; g.len()];
            assert_relative_eq!(weighted_integral(&g, &ones), ball, max_relative = 1e-12);
        }
    }

    #[test]
    fn constants_only_feel_the_robin_row() {
        let g = uniform(200);
        let a = assemble_laplacian(&g, BoundaryCondition::robin_decay());
        let y = a.apply(&vec![1.0; g.len()]);
        for v in &y[..g.len() - 1] {
            assert!(v.abs() < 1e-9);
        }
        assert!(y[g.len() - 1] > 0.0);
    }

    #[test]
    fn quadratic_is_reproduced_exactly() {
        let g = uniform(400);
        let a = assemble_laplacian(&g, BoundaryCondition::robin_decay());
        let u: Vec<f64> = g.nodes().iter().map(|r| r * r).collect();
        let y = a.apply(&u);
        for v in &y[..g.len() - 1] {
            assert_relative_eq!(*v, -6.0, max_relative = 1e-8);
        }
    }

    #[test]
    fn m_matrix_sign_pattern() {
        for bc in [BoundaryCondition::robin_decay(), BoundaryCondition::dirichlet()] {
            let g = build_grid(4, 10.0, 50, 1.01).unwrap();
            let a = assemble_laplacian(&g, bc);
            assert!(a.diag.iter().all(|&d| d > 0.0));
            assert!(a.sub.iter().chain(a.sup.iter()).all(|&o| o <= 0.0));
        }
    }

    #[test]
    fn robin_condition_annihilates_decay_profile() {
        let bc = BoundaryCondition::robin_decay();
        let r: f64 = 40.0;
        // u = r^{-(N-2)}, u' = -(N-2) r^{-(N-1)}
        for dim in [3usize, 4, 5] {
            let p = (dim - 2) as i32;
            let value = r.powi(-p);
            let slope = -(p as f64) * r.powi(-p - 1);
            assert!(bc.far_field_residual(dim, r, value, slope).abs() < 1e-18);
        }
    }

    #[test]
    fn solve_identity_and_singular() {
        let op = TridiagonalOperator {
            sub: vec![0.0; 4],
            diag: vec![1.0; 4],
            sup: vec![0.0; 4],
            far_field: FarField::RobinDecay,
        };
        let b = vec![1.0, -2.0, 3.0, 4.5];
        assert_eq!(op.solve(&b).unwrap(), b);
        let mut bad = op.clone();
        bad.diag[2] = 0.0;
        assert!(matches!(bad.solve(&b), Err(Error::SingularOperator { .. })));
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        // [[0,1,0],[1,0,1],[0,1,1]] is nonsingular but needs an interchange.
        let op = TridiagonalOperator {
            sub: vec![0.0, 1.0, 1.0],
            diag: vec![0.0, 0.0, 1.0],
            sup: vec![1.0, 1.0, 0.0],
            far_field: FarField::RobinDecay,
        };
        let x: Vec<f64> = vec![1.0, 2.0, 3.0];
        let b = op.apply(&x);
        let y = op.solve(&b).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn dirichlet_row_pins_boundary() {
        let g = build_grid(3, std::f64::consts::PI, 100, 1.0).unwrap();
        let a = assemble_laplacian(&g, BoundaryCondition::dirichlet());
        let mut rhs = vec![1.0; g.len()];
        a.constrain(&mut rhs);
        let u = a.solve(&rhs).unwrap();
        assert_eq!(u[g.len() - 1], 0.0);
        assert!(u.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn energy_identities() {
        let g = uniform(300);
        let u: Vec<f64> = g.nodes().iter().map(|r| (-r * r / 8.0).exp() + 0.1 / (1.0 + r)).collect();
        let a = assemble_laplacian(&g, BoundaryCondition::robin_decay());
        let au = a.apply(&u);
        let quad: f64 = (0..g.len()).map(|i| g.volumes()[i] * u[i] * au[i]).sum();
        let e = total_energy(&g, FarField::RobinDecay, &u);
        assert_relative_eq!(quad, e, max_relative = 1e-10);
        assert_eq!(dirichlet_energy(&g, &vec![5.0; g.len()]), 0.0);
        let u2: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        assert_relative_eq!(dirichlet_energy(&g, &u2), 4.0 * dirichlet_energy(&g, &u), max_relative = 1e-14);
    }

    #[test]
    fn partial_integral_matches_full_at_r() {
        let g = uniform(401);
        let v: Vec<f64> = g.nodes().iter().map(|r| (-r).exp()).collect();
        assert_relative_eq!(weighted_integral_within(&g, &v, 40.0), weighted_integral(&g, &v), max_relative = 1e-14);
        let ones = vec![1.0; g.len()];
        let ball = 4.0 / 3.0 * std::f64::consts::PI * 20f64.powi(3);
        assert_relative_eq!(weighted_integral_within(&g, &ones, 20.0), ball, max_relative = 1e-12);
    }

    #[test]
    fn inertia_counts_negative_pivots() {
        let g = uniform(200);
        let a = assemble_laplacian(&g, BoundaryCondition::robin_decay());
        assert_eq!(a.inertia().negative, 0);
        // A large negative shift produces negative pivots.
        let shifted = a.add_diagonal(&vec![-1e6; g.len()]);
        assert!(shifted.inertia().negative > 0);
        assert!(shifted.solve_definite(&vec![1.0; g.len()]).is_err());
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let g = uniform(5);
        let a = assemble_laplacian(&g, BoundaryCondition::robin_decay());
        let mut buf = Vec::new();
        a.write_csv(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("index,r,sub,diag,super"));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn shifted_operator_is_inverse_positive(
            n in 16usize..200,
            stretch in 1.0f64..1.03,
            shift in 0.0f64..50.0,
            seed in proptest::collection::vec(0.0f64..1.0, 200),
        ) {
            let g = build_grid(3, 40.0, n, stretch).unwrap();
            let a = assemble_laplacian(&g, BoundaryCondition::robin_decay());
            let m = WeightMass { diag: g.nodes().iter().map(|r| (1.0 + r * r).powi(-3)).collect() };
            let op = a.shifted(&m, shift);
            let rhs: Vec<f64> = seed[..n].to_vec();
            let u = op.solve(&rhs).unwrap();
            let scale = u.iter().fold(0.0f64, |s, x| s.max(x.abs()));
            prop_assert!(u.iter().all(|&x| x >= -1e-12 * scale));
        }

        #[test]
        fn energy_is_the_stiffness_quadratic_form(
            n in 16usize..120,
            vals in proptest::collection::vec(-5.0f64..5.0, 120),
        ) {
            let g = build_grid(3, 40.0, n, 1.0).unwrap();
            let a = assemble_laplacian(&g, BoundaryCondition::robin_decay());
            let u = &vals[..n];
            let au = a.apply(u);
            let form: f64 = (0..n).map(|i| g.volumes()[i] * u[i] * au[i]).sum();
            let energy = total_energy(&g, FarField::RobinDecay, u);
            prop_assert!(energy >= 0.0);
            prop_assert!((form - energy).abs() <= 1e-9 * (1.0 + energy.abs()));
        }
    }
}
