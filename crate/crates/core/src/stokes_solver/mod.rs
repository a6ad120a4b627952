//! One backward-Euler step of the linear free-boundary Stokes problem
//!
//! ```text
//! Re u_t − (1−ε)Δu + ∇q = f + div σ      in Ω
//! div u = a                               in Ω
//! −qN + 2(1−ε)D[u]N − α∂_T(φN) = g − σN   on S_F
//! φ_t − ∂_T u·N = k                       on S_F
//! u = 0                                   on S_B
//! ```
//!
//! Unknowns are staggered in computational space `(x, s)`: `u₁` at
//! `(x_i, s_{j+½})` including one ghost row below the bottom and one above the
//! surface, `u₂` at `(x_{i+½}, s_j)` with the bottom row fixed at zero, and `q`
//! at cell centres. The top ghost row of `u₁` is closed by the tangential
//! traction at `x_i`, the surface row of `u₂` by the normal traction at
//! `x_{i+½}`. The surface unknown `φ` lives at `x_i` and is eliminated through
//! its backward-Euler update, so each step is one linear solve in `(u, q)`.

mod banded;
mod gmres;

pub use banded::{bandwidth, BandedLu, SingularPivot};
pub use gmres::{gmres, CsrMatrix, GmresOutcome};

use crate::constitutive::StressField;
use crate::error::{Result, SolverError};
use crate::geometry::{Metric, Mesh};
use crate::scalar::Scalar;
use crate::scaling::DimensionlessParams;
use crate::tensor::{self, Sym, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearSolverKind {
    BandedLu,
    Gmres { restart: usize, max_iter: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesOptions<T> {
    pub solver: LinearSolverKind,
    /// Bound on every post-solve relative residual.
    pub lin_tol: T,
}

impl<T: Scalar> Default for StokesOptions<T> {
    fn default() -> Self {
        Self {
            solver: LinearSolverKind::BandedLu,
            lin_tol: T::lit(1e-10),
        }
    }
}

/// Data of one step: nodal `f` and `a_div`, surface `g` and `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesRHS<T> {
    pub f: Vec<Vec2<T>>,
    pub a_div: Vec<T>,
    pub g: Vec<Vec2<T>>,
    pub k: Vec<T>,
}

impl<T: Scalar> StokesRHS<T> {
    pub fn zeros(mesh: &Mesh<T>) -> Self {
        Self {
            f: vec![tensor::zero2(); mesh.n_nodes()],
            a_div: vec![T::zero(); mesh.n_nodes()],
            g: vec![tensor::zero2(); mesh.nx],
            k: vec![T::zero(); mesh.nx],
        }
    }

    pub fn validate(&self, mesh: &Mesh<T>) -> Result<()> {
        if self.f.len() != mesh.n_nodes()
            || self.a_div.len() != mesh.n_nodes()
            || self.g.len() != mesh.nx
            || self.k.len() != mesh.nx
        {
            return Err(SolverError::InvalidInput("Stokes data does not match the mesh".into()));
        }
        let finite = self.f.iter().all(|v| v[0].is_finite() && v[1].is_finite())
            && self.a_div.iter().all(|v| v.is_finite())
            && self.g.iter().all(|v| v[0].is_finite() && v[1].is_finite())
            && self.k.iter().all(|v| v.is_finite());
        if !finite {
            return Err(SolverError::NonFinite("Stokes data".into()));
        }
        Ok(())
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Self {
        let v2 = |x: &[Vec2<T>], y: &[Vec2<T>]| {
            x.iter()
                .zip(y)
                .map(|(p, q)| [a * p[0] + b * q[0], a * p[1] + b * q[1]])
                .collect()
        };
        let v1 = |x: &[T], y: &[T]| x.iter().zip(y).map(|(&p, &q)| a * p + b * q).collect();
        Self {
            f: v2(&self.f, &other.f),
            a_div: v1(&self.a_div, &other.a_div),
            g: v2(&self.g, &other.g),
            k: v1(&self.k, &other.k),
        }
    }
}

/// Staggered solution of one step. `u1[(jj+1)·nx + i]` for `jj = -1..=ncz`,
/// `u2[j·nx + i]` for `j = 0..nz` (row 0 is the bottom, always zero),
/// `q[jj·nx + i]` for `jj = 0..ncz`, `phi[i]` at surface nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesSolution<T> {
    pub nx: usize,
    pub nz: usize,
    pub u1: Vec<T>,
    pub u2: Vec<T>,
    pub q: Vec<T>,
    pub phi: Vec<T>,
}

impl<T: Scalar> StokesSolution<T> {
    pub fn zeros(mesh: &Mesh<T>) -> Self {
        let (nx, nz) = (mesh.nx, mesh.nz);
        let ncz = nz - 1;
        Self {
            nx,
            nz,
            u1: vec![T::zero(); nx * (ncz + 2)],
            u2: vec![T::zero(); nx * nz],
            q: vec![T::zero(); nx * ncz],
            phi: vec![T::zero(); nx],
        }
    }

    fn ncz(&self) -> usize {
        self.nz - 1
    }

    pub fn u1_at(&self, i: usize, jj: isize) -> T {
        self.u1[(jj + 1) as usize * self.nx + i]
    }

    pub fn u2_at(&self, i: usize, j: usize) -> T {
        self.u2[j * self.nx + i]
    }

    pub fn q_at(&self, i: usize, jj: usize) -> T {
        self.q[jj * self.nx + i]
    }

    fn u1_surface(&self, i: usize) -> T {
        let ncz = self.ncz() as isize;
        (self.u1_at(i, ncz - 1) + self.u1_at(i, ncz)) * T::lit(0.5)
    }

    /// Velocity interpolated to mesh nodes; the bottom row is exactly zero.
    pub fn nodal_u(&self) -> Vec<Vec2<T>> {
        let (nx, nz) = (self.nx, self.nz);
        let half = T::lit(0.5);
        let mut out = vec![tensor::zero2(); nx * nz];
        for j in 1..nz {
            for i in 0..nx {
                let im = (i + nx - 1) % nx;
                let u1 = if j == nz - 1 {
                    self.u1_surface(i)
                } else {
                    (self.u1_at(i, j as isize - 1) + self.u1_at(i, j as isize)) * half
                };
                let u2 = (self.u2_at(im, j) + self.u2_at(i, j)) * half;
                out[j * nx + i] = [u1, u2];
            }
        }
        out
    }

    /// Surface trace of the nodal velocity.
    pub fn surface_u(&self) -> Vec<Vec2<T>> {
        let nodal = self.nodal_u();
        let j = self.nz - 1;
        (0..self.nx).map(|i| nodal[j * self.nx + i]).collect()
    }

    /// Pressure at mesh nodes, extrapolated linearly to the top and bottom rows.
    pub fn nodal_q(&self) -> Vec<T> {
        let (nx, nz) = (self.nx, self.nz);
        let ncz = self.ncz();
        let half = T::lit(0.5);
        let three = T::lit(3.0);
        let col = |c: usize, j: usize| {
            if j == 0 {
                (three * self.q_at(c, 0) - self.q_at(c, 1)) * half
            } else if j == nz - 1 {
                (three * self.q_at(c, ncz - 1) - self.q_at(c, ncz - 2)) * half
            } else {
                (self.q_at(c, j - 1) + self.q_at(c, j)) * half
            }
        };
        let mut out = vec![T::zero(); nx * nz];
        for j in 0..nz {
            for i in 0..nx {
                let im = (i + nx - 1) % nx;
                out[j * nx + i] = (col(im, j) + col(i, j)) * half;
            }
        }
        out
    }

    /// Staggered velocity from nodal values; ghosts reproduce the nodal
    /// surface value and the zero bottom value by averaging.
    pub fn from_nodal_u(mesh: &Mesh<T>, u: &[Vec2<T>]) -> Self {
        let mut sol = Self::zeros(mesh);
        let (nx, nz) = (mesh.nx, mesh.nz);
        let ncz = nz - 1;
        let half = T::lit(0.5);
        for i in 0..nx {
            for jj in 0..ncz {
                sol.u1[(jj + 1) * nx + i] = (u[mesh.idx(i, jj)][0] + u[mesh.idx(i, jj + 1)][0]) * half;
            }
            sol.u1[i] = -sol.u1[nx + i];
            let top = u[mesh.idx(i, nz - 1)][0];
            sol.u1[(ncz + 1) * nx + i] = T::lit(2.0) * top - sol.u1[ncz * nx + i];
            let ip = (i + 1) % nx;
            for j in 1..nz {
                sol.u2[j * nx + i] = (u[mesh.idx(i, j)][1] + u[mesh.idx(ip, j)][1]) * half;
            }
        }
        sol
    }

    /// Samples exact fields at the staggered locations (ghost rows included,
    /// evaluated through the mapping extended past `s ∈ [0, 1]`).
    pub fn sample(
        mesh: &Mesh<T>,
        u: impl Fn(T, T) -> Vec2<T>,
        q: impl Fn(T, T) -> T,
        phi: impl Fn(T) -> T,
    ) -> Self {
        let mut sol = Self::zeros(mesh);
        let (nx, nz) = (mesh.nx, mesh.nz);
        let ncz = nz - 1;
        let half = T::lit(0.5);
        for i in 0..nx {
            let x = mesh.x1[i];
            let xm = x + mesh.dx * half;
            let (b, h) = (mesh.nodes.bottom[i], mesh.nodes.height(i));
            let (bm, hm) = (mesh.mid.bottom[i], mesh.mid.height(i));
            for l in 0..ncz + 2 {
                let s = (T::from_count(l) - half) * mesh.ds;
                sol.u1[l * nx + i] = u(x, -b + h * s)[0];
            }
            for j in 1..nz {
                let s = mesh.s(j);
                sol.u2[j * nx + i] = u(xm, -bm + hm * s)[1];
            }
            for jj in 0..ncz {
                let s = (T::from_count(jj) + half) * mesh.ds;
                sol.q[jj * nx + i] = q(xm, -bm + hm * s);
            }
            sol.phi[i] = phi(x);
        }
        sol
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Self {
        let f = |x: &[T], y: &[T]| x.iter().zip(y).map(|(&p, &q)| a * p + b * q).collect();
        Self {
            nx: self.nx,
            nz: self.nz,
            u1: f(&self.u1, &other.u1),
            u2: f(&self.u2, &other.u2),
            q: f(&self.q, &other.q),
            phi: f(&self.phi, &other.phi),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u1
            .iter()
            .chain(&self.u2)
            .chain(&self.q)
            .chain(&self.phi)
            .all(|v| v.is_finite())
    }

    /// Largest absolute entry over all staggered unknowns.
    pub fn max_abs(&self) -> T {
        self.u1
            .iter()
            .chain(&self.u2)
            .chain(&self.q)
            .chain(&self.phi)
            .fold(T::zero(), |a, v| a.max(v.abs()))
    }
}

/// Discrete L² norms of the equation residuals of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport<T> {
    pub momentum: T,
    pub divergence: T,
    pub traction: T,
    pub phi: T,
    pub bottom: T,
    /// Norm of the full right-hand side, the scale for relative values.
    pub rhs_norm: T,
}

impl<T: Scalar> ResidualReport<T> {
    fn rel(&self, v: T) -> T {
        if self.rhs_norm > T::zero() {
            v / self.rhs_norm
        } else {
            v
        }
    }

    pub fn relative_divergence(&self) -> T {
        self.rel(self.divergence)
    }

    pub fn relative_traction(&self) -> T {
        self.rel(self.traction)
    }

    pub fn max_relative(&self) -> T {
        [self.momentum, self.divergence, self.traction, self.phi, self.bottom]
            .into_iter()
            .map(|v| self.rel(v))
            .fold(T::zero(), T::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    Bottom,
    Momentum,
    Continuity,
    Traction,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    nx: usize,
    ncz: usize,
}

impl Layout {
    fn n(&self) -> usize {
        self.nx * (3 * self.ncz + 2)
    }

    fn u1(&self, i: usize, jj: isize) -> usize {
        let l = (jj + 1) as usize;
        if l == 0 {
            i
        } else if l <= self.ncz {
            self.nx + (l - 1) * 3 * self.nx + 3 * i
        } else {
            self.nx + self.ncz * 3 * self.nx + i
        }
    }

    fn u2(&self, i: usize, j: usize) -> Option<usize> {
        (j > 0).then(|| self.nx + (j - 1) * 3 * self.nx + 3 * i + 1)
    }

    fn q(&self, i: usize, jj: usize) -> usize {
        self.nx + jj * 3 * self.nx + 3 * i + 2
    }

    fn phi(&self, i: usize) -> usize {
        self.n() + i
    }
}

type Lin<T> = Vec<(usize, T)>;

fn push<T: Scalar>(row: &mut Lin<T>, idx: Option<usize>, c: T) {
    if let Some(k) = idx {
        if c != T::zero() {
            row.push((k, c));
        }
    }
}

fn axpy<T: Scalar>(dst: &mut Lin<T>, c: T, src: &Lin<T>) {
    for &(k, v) in src {
        if c * v != T::zero() {
            dst.push((k, c * v));
        }
    }
}

fn eval<T: Scalar>(row: &Lin<T>, x: &[T]) -> T {
    row.iter().fold(T::zero(), |a, &(k, v)| a + v * x[k])
}

/// Adds `factor · Δf` on a staggered grid, where `idx(dc, dr)` addresses the
/// neighbour `dc` columns and `dr` rows away (`None` for a fixed zero value).
fn add_laplacian<T: Scalar>(
    row: &mut Lin<T>,
    factor: T,
    mt: &Metric<T>,
    dx: T,
    ds: T,
    idx: impl Fn(isize, isize) -> Option<usize>,
) {
    let two = T::lit(2.0);
    let cxx = factor / (dx * dx);
    let css = factor * (mt.m * mt.m + T::one() / (mt.h * mt.h)) / (ds * ds);
    let cxs = factor * two * mt.m / (T::lit(4.0) * dx * ds);
    let cs = factor * (mt.m_x + mt.m * mt.m_s) / (two * ds);
    push(row, idx(1, 0), cxx);
    push(row, idx(-1, 0), cxx);
    push(row, idx(0, 0), -two * (cxx + css));
    push(row, idx(0, 1), css + cs);
    push(row, idx(0, -1), css - cs);
    push(row, idx(1, 1), cxs);
    push(row, idx(-1, -1), cxs);
    push(row, idx(1, -1), -cxs);
    push(row, idx(-1, 1), -cxs);
}

#[derive(Debug, Clone)]
struct SurfaceGeometry<T> {
    normal: Vec<Vec2<T>>,
    tangent: Vec<Vec2<T>>,
    stretch: Vec<T>,
    normal_mid: Vec<Vec2<T>>,
    stretch_mid: Vec<T>,
    /// `T·∂_T N` at surface nodes.
    t_dt_n: Vec<T>,
}

impl<T: Scalar> SurfaceGeometry<T> {
    fn new(mesh: &Mesh<T>) -> Self {
        let unit = |zp: T| {
            let r = (T::one() + zp * zp).sqrt();
            ([-zp / r, T::one() / r], [T::one() / r, zp / r], r)
        };
        let nodes: Vec<_> = mesh.nodes.zeta_p.iter().map(|&z| unit(z)).collect();
        let mids: Vec<_> = mesh.mid.zeta_p.iter().map(|&z| unit(z)).collect();
        let n1: Vec<T> = nodes.iter().map(|n| n.0[0]).collect();
        let n2: Vec<T> = nodes.iter().map(|n| n.0[1]).collect();
        let d1 = mesh.profile.d_t(&n1);
        let d2 = mesh.profile.d_t(&n2);
        Self {
            t_dt_n: nodes
                .iter()
                .zip(d1.iter().zip(&d2))
                .map(|(n, (&a, &b))| n.1[0] * a + n.1[1] * b)
                .collect(),
            normal: nodes.iter().map(|n| n.0).collect(),
            tangent: nodes.iter().map(|n| n.1).collect(),
            stretch: nodes.iter().map(|n| n.2).collect(),
            normal_mid: mids.iter().map(|n| n.0).collect(),
            stretch_mid: mids.iter().map(|n| n.2).collect(),
        }
    }
}

enum Factorization<T> {
    Lu(BandedLu<T>),
    Iterative(CsrMatrix<T>, usize, usize),
}

/// Assembled and factored step operator for fixed mesh, `dt` and parameters.
pub struct StokesSystem<T> {
    mesh: Mesh<T>,
    dt: T,
    params: DimensionlessParams<T>,
    options: StokesOptions<T>,
    layout: Layout,
    rows: Vec<Lin<T>>,
    groups: Vec<Group>,
    weights: Vec<T>,
    /// `∂_T u·N` at each surface node as a linear form in the unknowns.
    phi_rate: Vec<Lin<T>>,
    geom: SurfaceGeometry<T>,
    factor: Factorization<T>,
    gauge_row: Option<usize>,
}

impl<T: Scalar> StokesSystem<T> {
    pub fn new(
        mesh: &Mesh<T>,
        dt: T,
        params: &DimensionlessParams<T>,
        options: StokesOptions<T>,
    ) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(SolverError::InvalidInput("dt must be positive".into()));
        }
        if mesh.nz < 4 {
            return Err(SolverError::InvalidInput(format!(
                "the Stokes solver needs nz >= 4, got {}",
                mesh.nz
            )));
        }
        params.validate()?;
        let layout = Layout { nx: mesh.nx, ncz: mesh.nz - 1 };
        let geom = SurfaceGeometry::new(mesh);
        let mut sys = Self {
            mesh: mesh.clone(),
            dt,
            params: *params,
            options,
            layout,
            rows: Vec::new(),
            groups: Vec::new(),
            weights: Vec::new(),
            phi_rate: Vec::new(),
            geom,
            factor: Factorization::Iterative(CsrMatrix::from_rows(&[]), 0, 0),
            gauge_row: None,
        };
        sys.assemble();
        sys.factorize()?;
        Ok(sys)
    }

    pub fn mesh(&self) -> &Mesh<T> {
        &self.mesh
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn params(&self) -> &DimensionlessParams<T> {
        &self.params
    }

    /// True when the factorization found the system rank-deficient and one
    /// continuity row was replaced by a pressure pin.
    pub fn gauge_pinned(&self) -> bool {
        self.gauge_row.is_some()
    }

    pub fn n_unknowns(&self) -> usize {
        self.layout.n()
    }

    fn assemble(&mut self) {
        let l = self.layout;
        let (nx, ncz) = (l.nx, l.ncz);
        let mesh = &self.mesh;
        let (dx, ds) = (mesh.dx, mesh.ds);
        let p = &self.params;
        let visc = T::one() - p.eps;
        let mass = p.re / self.dt;
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let four = T::lit(4.0);
        let n = l.n();
        let mut rows: Vec<Lin<T>> = vec![Vec::new(); n];
        let mut groups = vec![Group::Momentum; n];
        let mut weights = vec![T::zero(); n];
        let wrap = |i: usize, d: isize| ((i as isize + d).rem_euclid(nx as isize)) as usize;

        // s-derivative of q at cell centre (c, jj), one-sided at the end rows
        let q_s = |c: usize, jj: usize| -> Lin<T> {
            let mut r = Vec::new();
            let d = two * ds;
            if jj == 0 {
                push(&mut r, Some(l.q(c, 0)), -three / d);
                push(&mut r, Some(l.q(c, 1)), four / d);
                push(&mut r, Some(l.q(c, 2)), -T::one() / d);
            } else if jj == ncz - 1 {
                push(&mut r, Some(l.q(c, jj)), three / d);
                push(&mut r, Some(l.q(c, jj - 1)), -four / d);
                push(&mut r, Some(l.q(c, jj - 2)), T::one() / d);
            } else {
                push(&mut r, Some(l.q(c, jj + 1)), T::one() / d);
                push(&mut r, Some(l.q(c, jj - 1)), -T::one() / d);
            }
            r
        };
        // one-sided s-derivative of u₂ at the surface of mid column c
        let u2_s_top = |c: usize| -> Lin<T> {
            let mut r = Vec::new();
            let d = two * ds;
            push(&mut r, l.u2(c, ncz), three / d);
            push(&mut r, l.u2(c, ncz - 1), -four / d);
            push(&mut r, l.u2(c, ncz - 2), T::one() / d);
            r
        };
        let u1_surf = |c: usize| -> Lin<T> {
            vec![(l.u1(c, ncz as isize - 1), half), (l.u1(c, ncz as isize), half)]
        };

        for i in 0..nx {
            let (im, ip) = (wrap(i, -1), wrap(i, 1));

            // bottom: (ghost + first row)/2 = 0
            let r = l.u1(i, -1);
            rows[r] = vec![(l.u1(i, -1), T::one()), (l.u1(i, 0), T::one())];
            groups[r] = Group::Bottom;
            weights[r] = dx;

            for jj in 0..ncz {
                let s = (T::from_count(jj) + half) * ds;

                // u₁ momentum at (x_i, s_{jj+½})
                let mt = mesh.nodes.metric(i, s);
                let r = l.u1(i, jj as isize);
                let mut row = Vec::new();
                push(&mut row, Some(r), mass);
                add_laplacian(&mut row, -visc, &mt, dx, ds, |dc, dr| {
                    Some(l.u1(wrap(i, dc), jj as isize + dr))
                });
                push(&mut row, Some(l.q(i, jj)), T::one() / dx);
                push(&mut row, Some(l.q(im, jj)), -T::one() / dx);
                axpy(&mut row, mt.m * half, &q_s(im, jj));
                axpy(&mut row, mt.m * half, &q_s(i, jj));
                rows[r] = row;
                weights[r] = dx * ds * mt.h;

                // continuity at the cell (x_{i+½}, s_{jj+½})
                let mt = mesh.mid.metric(i, s);
                let r = l.q(i, jj);
                let mut row = Vec::new();
                push(&mut row, Some(l.u1(ip, jj as isize)), T::one() / dx);
                push(&mut row, Some(l.u1(i, jj as isize)), -T::one() / dx);
                let cs = mt.m / (four * ds);
                for c in [i, ip] {
                    push(&mut row, Some(l.u1(c, jj as isize + 1)), cs);
                    push(&mut row, Some(l.u1(c, jj as isize - 1)), -cs);
                }
                push(&mut row, l.u2(i, jj + 1), T::one() / (ds * mt.h));
                push(&mut row, l.u2(i, jj), -T::one() / (ds * mt.h));
                rows[r] = row;
                groups[r] = Group::Continuity;
                weights[r] = dx * ds * mt.h;
            }

            // u₂ momentum at (x_{i+½}, s_j)
            for j in 1..ncz {
                let mt = mesh.mid.metric(i, mesh.s(j));
                let r = l.u2(i, j).expect("interior row");
                let mut row = Vec::new();
                push(&mut row, Some(r), mass);
                add_laplacian(&mut row, -visc, &mt, dx, ds, |dc, dr| {
                    l.u2(wrap(i, dc), (j as isize + dr) as usize)
                });
                push(&mut row, Some(l.q(i, j)), T::one() / (ds * mt.h));
                push(&mut row, Some(l.q(i, j - 1)), -T::one() / (ds * mt.h));
                rows[r] = row;
                weights[r] = dx * ds * mt.h;
            }
        }

        // surface rows
        let mut phi_rate = Vec::with_capacity(nx);
        for i in 0..nx {
            let im = wrap(i, -1);
            let ip = wrap(i, 1);
            let nrm = self.geom.normal[i];
            let mut r = Vec::new();
            axpy(&mut r, nrm[0] / (two * dx), &u1_surf(ip));
            axpy(&mut r, -nrm[0] / (two * dx), &u1_surf(im));
            push(&mut r, l.u2(i, ncz), nrm[1] / dx);
            push(&mut r, l.u2(im, ncz), -nrm[1] / dx);
            let inv = T::one() / self.geom.stretch[i];
            phi_rate.push(r.into_iter().map(|(k, v)| (k, v * inv)).collect::<Lin<T>>());
        }

        for i in 0..nx {
            let im = wrap(i, -1);
            let ip = wrap(i, 1);
            let top = ncz as isize;

            // tangential traction at x_i closes the u₁ ghost row
            let mt = mesh.nodes.metric(i, T::one());
            let mut u1_x = Vec::new();
            axpy(&mut u1_x, T::one() / (two * dx), &u1_surf(ip));
            axpy(&mut u1_x, -T::one() / (two * dx), &u1_surf(im));
            let u1_s = vec![(l.u1(i, top), T::one() / ds), (l.u1(i, top - 1), -T::one() / ds)];
            let mut u2_x = Vec::new();
            push(&mut u2_x, l.u2(i, ncz), T::one() / dx);
            push(&mut u2_x, l.u2(im, ncz), -T::one() / dx);
            let mut u2_s = Vec::new();
            axpy(&mut u2_s, half, &u2_s_top(im));
            axpy(&mut u2_s, half, &u2_s_top(i));
            let grad = gradient_forms(&u1_x, &u1_s, &u2_x, &u2_s, &mt);
            let (t, nv) = (self.geom.tangent[i], self.geom.normal[i]);
            let mut row = Vec::new();
            for a in 0..2 {
                for b in 0..2 {
                    axpy(&mut row, visc * (t[a] * nv[b] + t[b] * nv[a]), &grad[a][b]);
                }
            }
            push(&mut row, Some(l.phi(i)), -p.alpha * self.geom.t_dt_n[i]);
            let r = l.u1(i, top);
            rows[r] = row;
            groups[r] = Group::Traction;
            weights[r] = dx;

            // normal traction at x_{i+½} closes the surface u₂ row
            let mt = mesh.mid.metric(i, T::one());
            let mut u1_x = Vec::new();
            axpy(&mut u1_x, T::one() / dx, &u1_surf(ip));
            axpy(&mut u1_x, -T::one() / dx, &u1_surf(i));
            let mut u1_s = Vec::new();
            for c in [i, ip] {
                push(&mut u1_s, Some(l.u1(c, top)), half / ds);
                push(&mut u1_s, Some(l.u1(c, top - 1)), -half / ds);
            }
            let mut u2_x = Vec::new();
            push(&mut u2_x, l.u2(ip, ncz), T::one() / (two * dx));
            push(&mut u2_x, l.u2(im, ncz), -T::one() / (two * dx));
            let u2_s = u2_s_top(i);
            let grad = gradient_forms(&u1_x, &u1_s, &u2_x, &u2_s, &mt);
            let nv = self.geom.normal_mid[i];
            let mut row = Vec::new();
            for a in 0..2 {
                for b in 0..2 {
                    axpy(&mut row, visc * two * nv[a] * nv[b], &grad[a][b]);
                }
            }
            push(&mut row, Some(l.q(i, ncz - 1)), -three * half);
            push(&mut row, Some(l.q(i, ncz - 2)), half);
            let c = p.alpha / (dx * self.geom.stretch_mid[i]);
            push(&mut row, Some(l.phi(ip)), -c);
            push(&mut row, Some(l.phi(i)), c);
            let r = l.u2(i, ncz).expect("surface row");
            rows[r] = row;
            groups[r] = Group::Traction;
            weights[r] = dx;
        }

        self.rows = rows;
        self.groups = groups;
        self.weights = weights;
        self.phi_rate = phi_rate;
    }

    /// Rows with `φ` replaced by `dt·∂_T u·N`; constants move to the rhs.
    fn eliminated_rows(&self) -> Vec<Lin<T>> {
        let n = self.layout.n();
        self.rows
            .iter()
            .map(|row| {
                let mut out = Vec::with_capacity(row.len());
                for &(k, v) in row {
                    if k >= n {
                        axpy(&mut out, v * self.dt, &self.phi_rate[k - n]);
                    } else {
                        out.push((k, v));
                    }
                }
                out
            })
            .collect()
    }

    fn factorize(&mut self) -> Result<()> {
        let n = self.layout.n();
        let mut rows = self.eliminated_rows();
        match self.options.solver {
            LinearSolverKind::BandedLu => loop {
                let entries: Vec<(usize, usize, T)> = rows
                    .iter()
                    .enumerate()
                    .flat_map(|(r, row)| row.iter().map(move |&(c, v)| (r, c, v)))
                    .collect();
                let (kl, ku) = bandwidth(entries.iter().map(|e| (e.0, e.1)));
                match BandedLu::factor(n, kl, ku, &entries) {
                    Ok(lu) => {
                        self.factor = Factorization::Lu(lu);
                        return Ok(());
                    }
                    Err(SingularPivot(col)) => {
                        if self.gauge_row.is_some() {
                            return Err(SolverError::LinearSolver {
                                iterations: 0,
                                residual: col as f64,
                            });
                        }
                        // rank-deficient: pin the pressure in the first cell
                        let r = self.layout.q(0, 0);
                        rows[r] = vec![(r, T::one())];
                        self.rows[r] = vec![(r, T::one())];
                        self.gauge_row = Some(r);
                    }
                }
            },
            LinearSolverKind::Gmres { restart, max_iter } => {
                self.factor = Factorization::Iterative(CsrMatrix::from_rows(&rows), restart, max_iter);
                Ok(())
            }
        }
    }

    /// Right-hand side of the extended system (rows, then `φ` rows).
    fn rhs(&self, prev: &StokesSolution<T>, data: &StokesRHS<T>, sigma: &[Sym<T>]) -> (Vec<T>, Vec<T>) {
        let l = self.layout;
        let (nx, ncz) = (l.nx, l.ncz);
        let mesh = &self.mesh;
        let (dx, ds) = (mesh.dx, mesh.ds);
        let mass = self.params.re / self.dt;
        let half = T::lit(0.5);
        let quarter = T::lit(0.25);
        let two = T::lit(2.0);
        let mut b = vec![T::zero(); l.n()];
        let sg = |i: usize, j: usize, c: usize| sigma[mesh.idx(i, j)][c];
        for i in 0..nx {
            let ip = (i + 1) % nx;
            let im = (i + nx - 1) % nx;
            for jj in 0..ncz {
                let s = (T::from_count(jj) + half) * ds;
                let mt = mesh.nodes.metric(i, s);
                let f1 = (data.f[mesh.idx(i, jj)][0] + data.f[mesh.idx(i, jj + 1)][0]) * half;
                let cx = |j: usize| (sg(ip, j, 0) - sg(im, j, 0)) / (two * dx);
                let s11_x = (cx(jj) + cx(jj + 1)) * half;
                let s11_s = (sg(i, jj + 1, 0) - sg(i, jj, 0)) / ds;
                let s12_s = (sg(i, jj + 1, 1) - sg(i, jj, 1)) / ds;
                let div1 = s11_x + mt.m * s11_s + s12_s / mt.h;
                b[l.u1(i, jj as isize)] = f1 + div1 + mass * prev.u1_at(i, jj as isize);

                let a = (data.a_div[mesh.idx(i, jj)]
                    + data.a_div[mesh.idx(ip, jj)]
                    + data.a_div[mesh.idx(i, jj + 1)]
                    + data.a_div[mesh.idx(ip, jj + 1)])
                    * quarter;
                b[l.q(i, jj)] = a;
            }
            for j in 1..ncz {
                let mt = mesh.mid.metric(i, mesh.s(j));
                let f2 = (data.f[mesh.idx(i, j)][1] + data.f[mesh.idx(ip, j)][1]) * half;
                let s12_x = (sg(ip, j, 1) - sg(i, j, 1)) / dx;
                let cs = |c: usize| {
                    ((sg(i, j + 1, c) - sg(i, j - 1, c)) + (sg(ip, j + 1, c) - sg(ip, j - 1, c)))
                        / (T::lit(4.0) * ds)
                };
                let div2 = s12_x + mt.m * cs(1) + cs(2) / mt.h;
                b[l.u2(i, j).expect("interior row")] = f2 + div2 + mass * prev.u2_at(i, j);
            }
            let top = mesh.surface_index;
            let traction = |c: usize| -> Vec2<T> {
                let s = sigma[mesh.idx(c, top)];
                let n = self.geom.normal[c];
                tensor::vec_sub(&data.g[c], &tensor::sym_vec(&s, &n))
            };
            let t = self.geom.tangent[i];
            b[l.u1(i, ncz as isize)] = tensor::dot(&t, &traction(i));
            let nm = self.geom.normal_mid[i];
            let g_mid = tensor::vec_scale(&tensor::vec_add(&data.g[i], &data.g[ip]), half);
            let s_mid = tensor::sym_scale(&tensor::sym_add(&sigma[mesh.idx(i, top)], &sigma[mesh.idx(ip, top)]), half);
            b[l.u2(i, ncz).expect("surface row")] =
                tensor::dot(&nm, &tensor::vec_sub(&g_mid, &tensor::sym_vec(&s_mid, &nm)));
        }
        if let Some(r) = self.gauge_row {
            b[r] = T::zero();
        }
        let bphi = (0..nx).map(|i| prev.phi[i] + self.dt * data.k[i]).collect();
        (b, bphi)
    }

    fn check_inputs(&self, prev: &StokesSolution<T>, data: &StokesRHS<T>, sigma: &[Sym<T>]) -> Result<()> {
        data.validate(&self.mesh)?;
        if prev.nx != self.mesh.nx || prev.nz != self.mesh.nz {
            return Err(SolverError::InvalidInput("previous state does not match the mesh".into()));
        }
        if sigma.len() != self.mesh.n_nodes() {
            return Err(SolverError::InvalidInput("stress field does not match the mesh".into()));
        }
        if !prev.is_finite() || sigma.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(SolverError::NonFinite("Stokes step input".into()));
        }
        Ok(())
    }

    fn pack(&self, sol: &StokesSolution<T>) -> Vec<T> {
        let l = self.layout;
        let mut x = vec![T::zero(); l.n() + l.nx];
        for i in 0..l.nx {
            for jj in -1..=l.ncz as isize {
                x[l.u1(i, jj)] = sol.u1_at(i, jj);
            }
            for j in 1..=l.ncz {
                x[l.u2(i, j).expect("unknown row")] = sol.u2_at(i, j);
            }
            for jj in 0..l.ncz {
                x[l.q(i, jj)] = sol.q_at(i, jj);
            }
            x[l.phi(i)] = sol.phi[i];
        }
        x
    }

    fn unpack(&self, x: &[T]) -> StokesSolution<T> {
        let l = self.layout;
        let mut sol = StokesSolution::zeros(&self.mesh);
        let nx = l.nx;
        for i in 0..nx {
            for jj in -1..=l.ncz as isize {
                sol.u1[(jj + 1) as usize * nx + i] = x[l.u1(i, jj)];
            }
            for j in 1..=l.ncz {
                sol.u2[j * nx + i] = x[l.u2(i, j).expect("unknown row")];
            }
            for jj in 0..l.ncz {
                sol.q[jj * nx + i] = x[l.q(i, jj)];
            }
        }
        sol
    }

    /// Advances one step from `prev` with data `rhs` and stress `sigma`, and
    /// checks the post-solve residuals against `lin_tol`.
    pub fn solve_step(
        &self,
        prev: &StokesSolution<T>,
        rhs: &StokesRHS<T>,
        sigma: &[Sym<T>],
    ) -> Result<(StokesSolution<T>, ResidualReport<T>)> {
        self.check_inputs(prev, rhs, sigma)?;
        let l = self.layout;
        let n = l.n();
        let (b_ext, b_phi) = self.rhs(prev, rhs, sigma);
        let mut b = b_ext.clone();
        for (r, row) in self.rows.iter().enumerate() {
            for &(k, v) in row {
                if k >= n {
                    b[r] -= v * b_phi[k - n];
                }
            }
        }
        let x = match &self.factor {
            Factorization::Lu(lu) => {
                lu.solve(&mut b);
                b
            }
            Factorization::Iterative(a, restart, max_iter) => {
                let mut x = vec![T::zero(); n];
                let out = gmres(a, &b, &mut x, *restart, *max_iter, self.options.lin_tol * T::lit(0.01));
                if !out.converged {
                    return Err(SolverError::LinearSolver {
                        iterations: out.iterations,
                        residual: out.relative_residual.to_f64_lossy(),
                    });
                }
                x
            }
        };
        let mut sol = self.unpack(&x);
        for i in 0..l.nx {
            sol.phi[i] = b_phi[i] + self.dt * eval(&self.phi_rate[i], &x);
        }
        if !sol.is_finite() {
            return Err(SolverError::NonFinite("Stokes solution".into()));
        }
        let report = self.residual_report(&sol, prev, rhs, sigma)?;
        let worst = report.max_relative();
        if !(worst <= self.options.lin_tol) {
            return Err(SolverError::LinearSolver {
                iterations: 0,
                residual: worst.to_f64_lossy(),
            });
        }
        Ok((sol, report))
    }

    /// Residuals of `sol` as a step from `prev`, with `φ` taken from `sol`.
    pub fn residual_report(
        &self,
        sol: &StokesSolution<T>,
        prev: &StokesSolution<T>,
        rhs: &StokesRHS<T>,
        sigma: &[Sym<T>],
    ) -> Result<ResidualReport<T>> {
        self.check_inputs(prev, rhs, sigma)?;
        let (b, b_phi) = self.rhs(prev, rhs, sigma);
        let x = self.pack(sol);
        let mut acc = [T::zero(); 5];
        let mut rhs_sq = T::zero();
        for (r, row) in self.rows.iter().enumerate() {
            let res = eval(row, &x) - b[r];
            let w = self.weights[r];
            let slot = match self.groups[r] {
                Group::Momentum => 0,
                Group::Continuity => 1,
                Group::Traction => 2,
                Group::Bottom => 4,
            };
            acc[slot] += w * res * res;
            rhs_sq += w * b[r] * b[r];
        }
        for i in 0..self.layout.nx {
            let res = sol.phi[i] - self.dt * eval(&self.phi_rate[i], &x) - b_phi[i];
            acc[3] += self.mesh.dx * res * res;
            rhs_sq += self.mesh.dx * b_phi[i] * b_phi[i];
        }
        Ok(ResidualReport {
            momentum: acc[0].sqrt(),
            divergence: acc[1].sqrt(),
            traction: acc[2].sqrt(),
            phi: acc[3].sqrt(),
            bottom: acc[4].sqrt(),
            rhs_norm: rhs_sq.sqrt(),
        })
    }

    /// Discrete `∂_T u·N` at surface nodes for a staggered velocity.
    pub fn phi_rate(&self, sol: &StokesSolution<T>) -> Vec<T> {
        let x = self.pack(sol);
        self.phi_rate.iter().map(|r| eval(r, &x)).collect()
    }
}

/// `[[∂₁u₁, ∂₂u₁], [∂₁u₂, ∂₂u₂]]` as linear forms.
fn gradient_forms<T: Scalar>(
    u1_x: &Lin<T>,
    u1_s: &Lin<T>,
    u2_x: &Lin<T>,
    u2_s: &Lin<T>,
    mt: &Metric<T>,
) -> [[Lin<T>; 2]; 2] {
    let d1 = |fx: &Lin<T>, fs: &Lin<T>| {
        let mut r = fx.clone();
        axpy(&mut r, mt.m, fs);
        r
    };
    let d2 = |fs: &Lin<T>| {
        let mut r = Vec::new();
        axpy(&mut r, T::one() / mt.h, fs);
        r
    };
    [[d1(u1_x, u1_s), d2(u1_s)], [d1(u2_x, u2_s), d2(u2_s)]]
}

/// Single step with a freshly assembled operator.
pub fn solve_step<T: Scalar>(
    prev: &StokesSolution<T>,
    rhs: &StokesRHS<T>,
    sigma: &StressField<T>,
    dt: T,
    params: &DimensionlessParams<T>,
    mesh: &Mesh<T>,
) -> Result<StokesSolution<T>> {
    let sys = StokesSystem::new(mesh, dt, params, StokesOptions::default())?;
    Ok(sys.solve_step(prev, rhs, sigma)?.0)
}

/// Residual norms of `sol` as a step from `prev`.
pub fn residual_report<T: Scalar>(
    sol: &StokesSolution<T>,
    prev: &StokesSolution<T>,
    rhs: &StokesRHS<T>,
    sigma: &StressField<T>,
    dt: T,
    params: &DimensionlessParams<T>,
    mesh: &Mesh<T>,
) -> Result<ResidualReport<T>> {
    StokesSystem::new(mesh, dt, params, StokesOptions::default())?.residual_report(sol, prev, rhs, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, DomainProfile};

    fn params() -> DimensionlessParams<f64> {
        DimensionlessParams { re: 1.0, we: 1.0, eps: 0.5, alpha: 0.3, g0: 1.0, a: 1.0 }
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let mesh = build_mesh(&DomainProfile::flat(8, 1.0, 1.0), 8, 5).unwrap();
        let prev = StokesSolution::zeros(&mesh);
        let sigma = vec![[0.0; 3]; mesh.n_nodes()];
        let sol = solve_step(&prev, &StokesRHS::zeros(&mesh), &sigma, 0.1, &params(), &mesh).unwrap();
        assert_eq!(sol.max_abs(), 0.0);
    }

    #[test]
    fn isotropic_stress_is_balanced_by_pressure() {
        let prof = DomainProfile::sinusoid(16, 1.0, 0.05, 1, 1.0);
        let mesh = build_mesh(&prof, 16, 7).unwrap();
        let prev = StokesSolution::zeros(&mesh);
        let sigma = vec![[0.7, 0.0, 0.7]; mesh.n_nodes()];
        let sol = solve_step(&prev, &StokesRHS::zeros(&mesh), &sigma, 0.1, &params(), &mesh).unwrap();
        let umax = sol.u1.iter().chain(&sol.u2).fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(umax < 1e-10, "u = {umax}");
        assert!(sol.q.iter().all(|q| (q - 0.7).abs() < 1e-10));
    }

    #[test]
    fn gmres_matches_direct_solve() {
        let prof = DomainProfile::sinusoid(8, 1.0, 0.05, 1, 1.0);
        let mesh = build_mesh(&prof, 4, 4).unwrap();
        let mut rhs = StokesRHS::zeros(&mesh);
        for (p, f) in rhs.f.iter_mut().enumerate() {
            *f = [(p as f64 * 0.37).sin(), (p as f64 * 0.11).cos()];
        }
        let prev = StokesSolution::zeros(&mesh);
        let sigma = vec![[0.0; 3]; mesh.n_nodes()];
        let direct = StokesSystem::new(&mesh, 0.1, &params(), StokesOptions::default()).unwrap();
        let n = direct.n_unknowns();
        let it = StokesSystem::new(
            &mesh,
            0.1,
            &params(),
            StokesOptions { solver: LinearSolverKind::Gmres { restart: n, max_iter: 4 * n }, lin_tol: 1e-9 },
        )
        .unwrap();
        let a = direct.solve_step(&prev, &rhs, &sigma).unwrap().0;
        let b = it.solve_step(&prev, &rhs, &sigma).unwrap().0;
        let d = a.combine(1.0, &b, -1.0).max_abs();
        assert!(d < 1e-7 * a.max_abs().max(1.0), "difference {d}");
    }

    #[test]
    fn too_few_rows_rejected() {
        let mesh = build_mesh(&DomainProfile::flat(8, 1.0, 1.0), 8, 3).unwrap();
        assert!(StokesSystem::new(&mesh, 0.1, &params(), StokesOptions::default()).is_err());
    }
}
