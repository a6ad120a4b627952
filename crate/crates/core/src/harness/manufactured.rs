//! Manufactured Stokes solution on the flat strip `X₂ ∈ [−1, 0]`.
//!
//! `u = (sin(kx) z², cos(kx) z³)` with `z = X₂ + 1`, `q = cos(kx) z + 1/2`,
//! `φ = sin(kx)/10`, and a smooth stress; the data `(f, a, g, k)` are derived
//! by hand so that one step from the exact state reproduces it.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::Result;
use crate::geometry::{build_mesh, DomainProfile, Mesh};
use crate::scaling::DimensionlessParams;
use crate::stokes_solver::{StokesOptions, StokesRHS, StokesSolution, StokesSystem};
use crate::tensor::{Sym, Vec2};

const K: f64 = 2.0 * PI;

pub fn velocity(x: f64, y: f64) -> Vec2<f64> {
    let z = y + 1.0;
    [(K * x).sin() * z * z, (K * x).cos() * z * z * z]
}

pub fn pressure(x: f64, y: f64) -> f64 {
    (K * x).cos() * (y + 1.0) + 0.5
}

pub fn surface(x: f64) -> f64 {
    0.1 * (K * x).sin()
}

pub fn stress(x: f64, y: f64) -> Sym<f64> {
    [(K * x).sin() * (y + 1.0), (K * x).cos() * y * y, 0.5 + (K * x).sin() * y]
}

/// Step data for the exact fields; any `dt` works since the exact state is
/// also the previous state.
pub fn data(mesh: &Mesh<f64>, p: &DimensionlessParams<f64>) -> StokesRHS<f64> {
    let visc = 1.0 - p.eps;
    let (s, c) = (|x: f64| (K * x).sin(), |x: f64| (K * x).cos());
    let f = mesh.sample(|x, y| {
        let z = y + 1.0;
        let lap1 = -K * K * s(x) * z * z + 2.0 * s(x);
        let lap2 = -K * K * c(x) * z.powi(3) + 6.0 * c(x) * z;
        let q_x = -K * s(x) * z;
        let q_y = c(x);
        let div1 = K * c(x) * z + 2.0 * c(x) * y;
        let div2 = -K * s(x) * y * y + s(x);
        [-visc * lap1 + q_x - div1, -visc * lap2 + q_y - div2]
    });
    let a_div = mesh.sample(|x, y| {
        let z = y + 1.0;
        K * c(x) * z * z + 3.0 * c(x) * z * z
    });
    let g = (0..mesh.nx)
        .map(|i| {
            let x = mesh.x1[i];
            // on X₂ = 0 with N = (0, 1)
            let u1_y = 2.0 * s(x);
            let u2_x = -K * s(x);
            let u2_y = 3.0 * c(x);
            let sg = stress(x, 0.0);
            let phi_x = 0.1 * K * c(x);
            [
                visc * (u1_y + u2_x) + sg[1],
                -pressure(x, 0.0) + 2.0 * visc * u2_y - p.alpha * phi_x + sg[2],
            ]
        })
        .collect();
    let k = (0..mesh.nx).map(|i| K * s(mesh.x1[i])).collect();
    StokesRHS { f, a_div, g, k }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MmsLevel {
    pub n: usize,
    /// Discrete L² velocity error.
    pub error: f64,
    pub relative_traction: f64,
    pub relative_divergence: f64,
}

/// Solves one step on an `n × (n/2 + 1)` flat strip and measures the error.
pub fn level(n: usize, p: &DimensionlessParams<f64>) -> Result<MmsLevel> {
    let mesh = build_mesh(&DomainProfile::flat(n, 1.0, 1.0), n, n / 2 + 1)?;
    let exact = StokesSolution::sample(&mesh, velocity, pressure, surface);
    let sigma = mesh.sample(stress);
    let rhs = data(&mesh, p);
    let sys = StokesSystem::new(&mesh, 1.0, p, StokesOptions::default())?;
    let (sol, report) = sys.solve_step(&exact, &rhs, &sigma)?;
    let w = mesh.weights();
    let want = mesh.sample(velocity);
    let error = sol
        .nodal_u()
        .iter()
        .zip(&want)
        .zip(&w)
        .map(|((a, b), w)| w * ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)))
        .sum::<f64>()
        .sqrt();
    Ok(MmsLevel {
        n,
        error,
        relative_traction: report.relative_traction(),
        relative_divergence: report.relative_divergence(),
    })
}

/// Observed orders `log₂(e_i / e_{i+1}) / log₂(n_{i+1} / n_i)`.
pub fn orders(levels: &[MmsLevel]) -> Vec<f64> {
    levels
        .windows(2)
        .map(|w| (w[0].error / w[1].error).ln() / (w[1].n as f64 / w[0].n as f64).ln())
        .collect()
}
