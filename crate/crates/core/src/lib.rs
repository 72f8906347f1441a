//! Solver library for the weighted semilinear problem
//! `-Δu = P(x)(g(u) + tφ₁ + f₁)` on ℝᴺ, reduced to radial profiles.
//!
//! The pipeline is: build a [`radial::RadialGrid`] and operators, compute the
//! weighted first eigenpair ([`eigen`]), construct sub- and supersolutions and
//! the minimal solution ([`subsuper`]), trace the solution branch in `t` and
//! locate its fold ([`continuation`]), and check the a priori estimates
//! ([`verify`]). Everything is generic over [`scalar::Real`]; the aliases
//! below fix `f64`.

// guards are written `!(x > 0)` so NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuation;
pub mod eigen;
pub mod error;
pub mod nonlinear;
pub mod problem;
pub mod radial;
pub mod scalar;
pub mod subsuper;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Grid = radial::RadialGrid<f64>;
pub type Operator = radial::TridiagonalOperator<f64>;
pub type Instance = problem::ProblemInstance<f64>;
pub type Eigen = eigen::EigenPair<f64>;
pub type Profile = nonlinear::SolutionProfile<f64>;
pub type Branch = continuation::Branch<f64>;
pub type Fold = continuation::FoldResult<f64>;

pub type GridF32 = radial::RadialGrid<f32>;
pub type InstanceF32 = problem::ProblemInstance<f32>;
