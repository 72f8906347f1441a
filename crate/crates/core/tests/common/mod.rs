//! Independent oracles and fixture access shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub const RADIUS: f64 = 40.0;

pub fn canonical_weight(r: f64) -> f64 {
    (1.0 + r * r).powi(-3)
}

/// Stiffness `K` and lumped weighted mass for `-Δu = λPu` in three dimensions on
/// a uniform grid with the decay-matching Robin row, assembled from scratch.
pub fn dense_pencil(n: usize, radius: f64, weight: impl Fn(f64) -> f64) -> (DMatrix<f64>, Vec<f64>) {
    let h = radius / (n - 1) as f64;
    let r: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let faces: Vec<f64> = (0..=n)
        .map(|i| match i {
            0 => 0.0,
            i if i == n => radius,
            i => (i as f64 - 0.5) * h,
        })
        .collect();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        let face = faces[i + 1];
        let c = 4.0 * PI * face * face / h;
        k[(i, i)] += c;
        k[(i + 1, i + 1)] += c;
        k[(i, i + 1)] -= c;
        k[(i + 1, i)] -= c;
    }
    k[(n - 1, n - 1)] += 4.0 * PI * radius;
    let mass = (0..n)
        .map(|i| 4.0 * PI / 3.0 * (faces[i + 1].powi(3) - faces[i].powi(3)) * weight(r[i]))
        .collect();
    (k, mass)
}

/// Smallest eigenvalue of `K x = λ M x`, as the reciprocal of the largest
/// eigenvalue of `M^{1/2} K⁻¹ M^{1/2}` (dense Cholesky, then a dense symmetric
/// eigensolve). Working with `K⁻¹` keeps the error relative to `1/λ₁` even
/// though `M` spans many orders of magnitude.
pub fn dense_first_eigenvalue(n: usize, radius: f64) -> f64 {
    let (k, m) = dense_pencil(n, radius, canonical_weight);
    let kinv = k.cholesky().expect("stiffness is positive definite").inverse();
    let b = DMatrix::from_fn(n, n, |i, j| m[i].sqrt() * kinv[(i, j)] * m[j].sqrt());
    let top = b.symmetric_eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    1.0 / top
}

/// Second-order Richardson extrapolation from two grids with spacing ratio 2.
pub fn richardson(coarse: f64, fine: f64) -> f64 {
    fine + (fine - coarse) / 3.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Extrapolated {
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
    pub extrapolated: f64,
    pub error_bar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredSolution {
    pub id: String,
    pub t: f64,
    /// Column of `solutions.csv`.
    pub column: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanonicalFixture {
    pub radius: f64,
    pub lambda1: Extrapolated,
    pub alpha: Extrapolated,
    pub tau_star: f64,
    pub solution_nodes: usize,
    pub solutions: Vec<StoredSolution>,
}

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn load_fixture() -> CanonicalFixture {
    let text = std::fs::read_to_string(fixture_dir().join("canonical.json")).expect("fixture missing; run the ignored generator");
    serde_json::from_str(&text).expect("fixture parses")
}

/// Columns of `solutions.csv`: radius first, then one column per stored solution.
pub fn load_solution_columns() -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(fixture_dir().join("solutions.csv")).expect("solutions missing");
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for line in text.lines().skip(1) {
        for (j, field) in line.split(',').enumerate() {
            if cols.len() <= j {
                cols.push(Vec::new());
            }
            cols[j].push(field.parse().expect("number"));
        }
    }
    cols
}
