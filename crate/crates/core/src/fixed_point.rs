//! Lifts, Picard inversion of the linearized operator `P₁`, the error
//! operators `E¹..E⁵` and the outer contraction for the full Lagrangian
//! system `P(0) + P₁(x) + E(x) = (0, …, 0, u₀, σ₀)`.
//!
//! All trajectories live on the window grid `t_k = k·dt`, `k = 0..=n`.
//! Level 0 holds the initial state; data at level 0 is never used.

use std::time::Instant;

use crate::constitutive::{self, ConstitutiveLaw, GradTrajectory, StressField, StressTrajectory};
use crate::error::{Result, SolverError};
use crate::geometry::{self, GeometryState, Mesh};
use crate::scalar::Scalar;
use crate::scaling::DimensionlessParams;
use crate::stokes_solver::{StokesOptions, StokesRHS, StokesSolution, StokesSystem};
use crate::tensor::{self, Mat2, Sym, Vec2};

/// Tolerance on `|𝒩₂|` below which the surface counts as overturned.
const OVERTURN_TOL: f64 = 1e-8;

/// `(u, q, φ, σ)` on every level of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState<T> {
    /// Staggered velocity, pressure and φ per level.
    pub levels: Vec<StokesSolution<T>>,
    pub sigma: StressTrajectory<T>,
}

impl<T: Scalar> FlowState<T> {
    pub fn zeros(mesh: &Mesh<T>, n_levels: usize) -> Self {
        Self {
            levels: vec![StokesSolution::zeros(mesh); n_levels],
            sigma: constitutive::zero_stress_trajectory(n_levels, mesh.n_nodes()),
        }
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Self {
        Self {
            levels: self
                .levels
                .iter()
                .zip(&other.levels)
                .map(|(x, y)| x.combine(a, y, b))
                .collect(),
            sigma: self
                .sigma
                .iter()
                .zip(&other.sigma)
                .map(|(x, y)| {
                    x.iter()
                        .zip(y)
                        .map(|(p, q)| [0, 1, 2].map(|c| a * p[c] + b * q[c]))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn nodal_u(&self) -> Vec<Vec<Vec2<T>>> {
        self.levels.iter().map(StokesSolution::nodal_u).collect()
    }

    pub fn nodal_q(&self) -> Vec<Vec<T>> {
        self.levels.iter().map(StokesSolution::nodal_q).collect()
    }

    pub fn phi(&self) -> Vec<Vec<T>> {
        self.levels.iter().map(|l| l.phi.clone()).collect()
    }

    pub fn grad_u(&self, mesh: &Mesh<T>) -> GradTrajectory<T> {
        self.levels.iter().map(|l| mesh.grad_vector(&l.nodal_u())).collect()
    }
}

/// The seven-slot right-hand side `(f, a, m, g, k, u₀, σ₀)`, plus the surface
/// unknown at the window start.
#[derive(Debug, Clone, PartialEq)]
pub struct RHSData<T> {
    pub f: Vec<Vec<Vec2<T>>>,
    pub a_div: Vec<Vec<T>>,
    pub m: StressTrajectory<T>,
    pub g: Vec<Vec<Vec2<T>>>,
    pub k: Vec<Vec<T>>,
    pub u0: Vec<Vec2<T>>,
    pub sigma0: StressField<T>,
    /// φ at the window start; zero on the first window.
    pub phi0: Vec<T>,
}

impl<T: Scalar> RHSData<T> {
    pub fn zeros(mesh: &Mesh<T>, n_levels: usize) -> Self {
        let n = mesh.n_nodes();
        Self {
            f: vec![vec![tensor::zero2(); n]; n_levels],
            a_div: vec![vec![T::zero(); n]; n_levels],
            m: constitutive::zero_stress_trajectory(n_levels, n),
            g: vec![vec![tensor::zero2(); mesh.nx]; n_levels],
            k: vec![vec![T::zero(); mesh.nx]; n_levels],
            u0: vec![tensor::zero2(); n],
            sigma0: vec![tensor::zero_sym(); n],
            phi0: vec![T::zero(); mesh.nx],
        }
    }

    pub fn n_levels(&self) -> usize {
        self.f.len()
    }

    pub fn stokes(&self, k: usize) -> StokesRHS<T> {
        StokesRHS {
            f: self.f[k].clone(),
            a_div: self.a_div[k].clone(),
            g: self.g[k].clone(),
            k: self.k[k].clone(),
        }
    }

    pub fn validate(&self, mesh: &Mesh<T>) -> Result<()> {
        let levels = self.n_levels();
        let (n, nx) = (mesh.n_nodes(), mesh.nx);
        let ok = levels >= 2
            && self.a_div.len() == levels
            && self.m.len() == levels
            && self.g.len() == levels
            && self.k.len() == levels
            && self.f.iter().all(|v| v.len() == n)
            && self.a_div.iter().all(|v| v.len() == n)
            && self.m.iter().all(|v| v.len() == n)
            && self.g.iter().all(|v| v.len() == nx)
            && self.k.iter().all(|v| v.len() == nx)
            && self.u0.len() == n
            && self.sigma0.len() == n
            && self.phi0.len() == nx;
        if !ok {
            return Err(SolverError::InvalidInput(
                "right-hand side does not match the mesh or has fewer than 2 levels".into(),
            ));
        }
        let finite = self.u0.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.sigma0.iter().all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(SolverError::NonFinite("initial fields".into()));
        }
        Ok(())
    }

    /// Negated source slots; initial fields are kept.
    fn negated_sources(mut self) -> Self {
        let neg = -T::one();
        for l in self.f.iter_mut().chain(self.g.iter_mut()) {
            for v in l.iter_mut() {
                *v = tensor::vec_scale(v, neg);
            }
        }
        for l in self.a_div.iter_mut().chain(self.k.iter_mut()) {
            for v in l.iter_mut() {
                *v = -*v;
            }
        }
        for l in self.m.iter_mut() {
            for v in l.iter_mut() {
                *v = tensor::sym_scale(v, neg);
            }
        }
        self
    }
}

/// Convergence history of a Picard or outer loop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationReport {
    /// `‖xₙ − xₙ₋₁‖` per iteration.
    pub diffs: Vec<f64>,
    /// `‖xₙ₊₁ − xₙ‖ / ‖xₙ − xₙ₋₁‖`, from the second iteration on.
    pub kappa: Vec<f64>,
    /// Time-sup of the nodal stress norm of the total state per iteration.
    pub sigma_sup: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Inner Picard iterations used by each outer iteration.
    pub inner_iterations: Vec<usize>,
    /// Largest relative divergence residual over every Stokes solve.
    pub max_divergence: f64,
    /// Wall time per window in seconds (not part of the deterministic output).
    pub window_times: Vec<f64>,
    pub window_lengths: Vec<f64>,
    pub halvings: usize,
}

impl IterationReport {
    fn push_diff(&mut self, d: f64) {
        if let Some(&prev) = self.diffs.last() {
            self.kappa.push(if prev > 0.0 { d / prev } else { 0.0 });
        }
        self.diffs.push(d);
        self.iterations = self.diffs.len();
    }

    fn absorb(&mut self, inner: &IterationReport) {
        self.inner_iterations.push(inner.iterations);
        self.max_divergence = self.max_divergence.max(inner.max_divergence);
    }

    /// Geometric mean of κ over iterations still above the roundoff floor.
    pub fn contraction(&self) -> Option<f64> {
        let top = self.diffs.iter().cloned().fold(0.0, f64::max);
        let logs: Vec<f64> = self
            .kappa
            .iter()
            .zip(self.diffs.iter().skip(1))
            .filter(|(k, d)| **k > 0.0 && **d > 1e-11 * top)
            .map(|(k, _)| k.ln())
            .collect();
        (!logs.is_empty()).then(|| (logs.iter().sum::<f64>() / logs.len() as f64).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions<T> {
    /// Outer stopping tolerance on the composite state difference.
    pub tol: T,
    /// Stopping tolerance of the inner Picard loops.
    pub inner_tol: T,
    pub max_iter: usize,
    pub max_outer: usize,
    /// Return `NoConvergence` instead of the last iterate when `max_iter` is hit.
    pub require_convergence: bool,
    pub auto_halve: bool,
    pub max_halvings: usize,
    /// Skip the compatibility precondition.
    pub force: bool,
    pub compat_tol: T,
    /// Replace the constitutive update by `σ ≡ 0`.
    pub stress_stubbed: bool,
    /// Replace the Stokes solves by `u ≡ 0`.
    pub velocity_frozen: bool,
    pub stokes: StokesOptions<T>,
}

impl<T: Scalar> Default for FixedPointOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-9),
            inner_tol: T::lit(1e-11),
            max_iter: 100,
            max_outer: 60,
            require_convergence: true,
            auto_halve: false,
            max_halvings: 6,
            force: false,
            compat_tol: T::lit(1e-8),
            stress_stubbed: false,
            velocity_frozen: false,
            stokes: StokesOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatibilityReport<T> {
    /// `‖div u₀‖` over Ω.
    pub divergence: T,
    /// `‖u₀‖` on the bottom.
    pub bottom: T,
    /// Tangential traction defect `‖T·(σ₀N + 2(1−ε)D[u₀]N) − α T·∂_T T‖` on S_F.
    pub traction: T,
    pub tol: T,
}

impl<T: Scalar> CompatibilityReport<T> {
    pub fn passes(&self) -> bool {
        self.divergence < self.tol && self.bottom < self.tol && self.traction < self.tol
    }
}

pub fn compatibility_check<T: Scalar>(
    u0: &[Vec2<T>],
    sigma0: &[Sym<T>],
    mesh: &Mesh<T>,
    params: &DimensionlessParams<T>,
    tol: T,
) -> CompatibilityReport<T> {
    let w = mesh.weights();
    let grad = mesh.grad_vector(u0);
    let divergence = grad
        .iter()
        .zip(&w)
        .fold(T::zero(), |a, (g, &w)| a + w * (g[0][0] + g[1][1]).powi(2))
        .sqrt();
    let bottom = (0..mesh.nx)
        .map(|i| u0[mesh.idx(i, 0)])
        .fold(T::zero(), |a, u| a + mesh.dx * tensor::dot(&u, &u))
        .sqrt();
    let normal = geometry::surface_normal(&mesh.profile);
    let tangent = mesh.profile.tangent();
    let t1: Vec<T> = tangent.iter().map(|t| t[0]).collect();
    let t2: Vec<T> = tangent.iter().map(|t| t[1]).collect();
    let (d1, d2) = (mesh.profile.d_t(&t1), mesh.profile.d_t(&t2));
    let visc2 = T::lit(2.0) * (T::one() - params.eps);
    let top = mesh.surface_index;
    let traction = (0..mesh.nx)
        .map(|i| {
            let p = mesh.idx(i, top);
            let (n, t) = (normal[i], tangent[i]);
            let d = constitutive::strain_rate(&grad[p]);
            let s = tensor::sym_add(&sigma0[p], &tensor::sym_scale(&d, visc2));
            tensor::dot(&t, &tensor::sym_vec(&s, &n)) - params.alpha * (t[0] * d1[i] + t[1] * d2[i])
        })
        .fold(T::zero(), |a, r| a + mesh.dx * r * r)
        .sqrt();
    CompatibilityReport { divergence, bottom, traction, tol }
}

/// Traction part of `P(0)`: `g₀ζN − α∂_T T` at surface nodes.
pub fn zeroth_order_traction<T: Scalar>(mesh: &Mesh<T>, params: &DimensionlessParams<T>) -> Vec<Vec2<T>> {
    let normal = geometry::surface_normal(&mesh.profile);
    let tangent = mesh.profile.tangent();
    let t1: Vec<T> = tangent.iter().map(|t| t[0]).collect();
    let t2: Vec<T> = tangent.iter().map(|t| t[1]).collect();
    let (d1, d2) = (mesh.profile.d_t(&t1), mesh.profile.d_t(&t2));
    (0..mesh.nx)
        .map(|i| {
            let gz = params.g0 * mesh.profile.zeta[i];
            [gz * normal[i][0] - params.alpha * d1[i], gz * normal[i][1] - params.alpha * d2[i]]
        })
        .collect()
}

/// `P(0)` on `n_levels` levels: only the traction slot is nonzero.
pub fn zeroth_order_source<T: Scalar>(
    mesh: &Mesh<T>,
    params: &DimensionlessParams<T>,
    n_levels: usize,
) -> RHSData<T> {
    let mut out = RHSData::zeros(mesh, n_levels);
    let g = zeroth_order_traction(mesh, params);
    for l in out.g.iter_mut() {
        l.clone_from(&g);
    }
    out
}

/// Higher-order surface-tension remainders `(Q₁, Q₂)` for slope `ζ'` and
/// surface unknown `Φ`.
pub fn q_terms<T: Scalar>(zeta_p: T, big_phi: T) -> (T, T) {
    let one = T::one();
    let r2 = one + zeta_p * zeta_p;
    let q1 = (T::one() / r2.sqrt())
        * ((one + (T::lit(2.0) * zeta_p * big_phi + big_phi * big_phi) / r2).powf(-T::lit(0.5)) - one
            + zeta_p * big_phi / r2);
    let q2 = -zeta_p * big_phi * big_phi * r2.powf(-T::lit(1.5)) + (big_phi + zeta_p) * q1;
    (q1, q2)
}

fn component<T: Scalar>(m: &[Mat2<T>], i: usize, j: usize) -> Vec<T> {
    m.iter().map(|g| g[i][j]).collect()
}

fn sym_index(i: usize, j: usize) -> usize {
    i + j
}

/// Error operator at one level: `(E¹, E², E³, E⁴, E⁵)`.
#[allow(clippy::type_complexity)]
fn error_level<T: Scalar>(
    mesh: &Mesh<T>,
    sol: &StokesSolution<T>,
    sigma: &[Sym<T>],
    geom: &GeometryState<T>,
    params: &DimensionlessParams<T>,
    law: &ConstitutiveLaw<T>,
) -> Result<(Vec<Vec2<T>>, Vec<T>, StressField<T>, Vec<Vec2<T>>, Vec<T>)> {
    let n = mesh.n_nodes();
    let visc = T::one() - params.eps;
    let u = sol.nodal_u();
    let q = sol.nodal_q();
    let grad = mesh.grad_vector(&u);
    let xi = &geom.xi;
    let id = tensor::identity::<T>();
    let a_mat: Vec<Mat2<T>> = grad
        .iter()
        .zip(xi)
        .map(|(g, x)| tensor::mat_mul(g, &tensor::mat_add(&id, x)))
        .collect();
    let b_mat: Vec<Mat2<T>> = grad.iter().zip(xi).map(|(g, x)| tensor::mat_mul(g, x)).collect();
    let grad_of = |m: &[Mat2<T>]| -> [[Vec<Vec2<T>>; 2]; 2] {
        [
            [mesh.grad_scalar(&component(m, 0, 0)), mesh.grad_scalar(&component(m, 0, 1))],
            [mesh.grad_scalar(&component(m, 1, 0)), mesh.grad_scalar(&component(m, 1, 1))],
        ]
    };
    let da = grad_of(&a_mat);
    let db = grad_of(&b_mat);
    let dq = mesh.grad_scalar(&q);
    let dsig: Vec<Vec<Vec2<T>>> = (0..3)
        .map(|c| mesh.grad_scalar(&sigma.iter().map(|s| s[c]).collect::<Vec<_>>()))
        .collect();

    let mut e1 = vec![tensor::zero2(); n];
    let mut e2 = vec![T::zero(); n];
    let mut e3 = vec![tensor::zero_sym(); n];
    let a = law.a();
    let two = T::lit(2.0);
    for p in 0..n {
        let x = &xi[p];
        for i in 0..2 {
            let mut v = T::zero();
            for j in 0..2 {
                for k in 0..2 {
                    v -= visc * x[k][j] * da[i][j][p][k];
                    v -= dsig[sym_index(i, j)][p][k] * x[k][j];
                }
                v -= visc * db[i][j][p][j];
                v += x[j][i] * dq[p][j];
            }
            e1[p][i] = v;
        }
        let mut d = T::zero();
        for k in 0..2 {
            for j in 0..2 {
                d += x[k][j] * grad[p][j][k];
            }
        }
        e2[p] = d;
        let gx = &b_mat[p];
        let ga = constitutive::g_a(gx, &sigma[p], a);
        let sym2 = [two * gx[0][0], gx[0][1] + gx[1][0], two * gx[1][1]];
        e3[p] = [0, 1, 2].map(|c| -params.we * ga[c] - params.eps * sym2[c]);
    }

    // surface terms
    let nx = mesh.nx;
    let top = mesh.surface_index;
    let zp = &mesh.nodes.zeta_p;
    let mut q1 = Vec::with_capacity(nx);
    let mut q2 = Vec::with_capacity(nx);
    for i in 0..nx {
        let big_phi = (T::one() + zp[i] * zp[i]) * sol.phi[i];
        let (a1, a2) = q_terms(zp[i], big_phi);
        q1.push(a1);
        q2.push(a2);
    }
    let (dq1, dq2) = (mesh.profile.d_t(&q1), mesh.profile.d_t(&q2));
    let u_s = mesh.surface_trace(&u);
    let eta_s = geom.surface_eta(mesh);
    let dtu = geometry::surface_d_t(&u_s, &mesh.profile);
    let dteta = geometry::surface_d_t(&eta_s, &mesh.profile);
    let mut e4 = vec![tensor::zero2(); nx];
    let mut e5 = vec![T::zero(); nx];
    for i in 0..nx {
        let p = mesh.idx(i, top);
        let nv = geom.normal[i];
        let cn = geom.cal_n[i];
        let dn = tensor::vec_sub(&cn, &nv);
        let gx = b_mat[p];
        let gxb = a_mat[p];
        let m = tensor::mat_add(&gx, &tensor::transpose(&gx));
        let mb = tensor::mat_add(&gxb, &tensor::transpose(&gxb));
        let mn = tensor::mat_vec(&m, &nv);
        let mbd = tensor::mat_vec(&mb, &dn);
        let sd = tensor::sym_vec(&sigma[p], &dn);
        let zeta = mesh.profile.zeta[i];
        let eta2 = eta_s[i][1];
        let dq_i = [dq1[i], dq2[i]];
        for c in 0..2 {
            e4[i][c] = -q[p] * dn[c] + visc * mn[c] + visc * mbd[c] + params.g0 * zeta * dn[c]
                + params.g0 * eta2 * cn[c]
                - params.alpha * dq_i[c]
                + sd[c];
        }
        let cn2 = cn[1];
        if !(cn2.abs() >= T::lit(OVERTURN_TOL)) {
            return Err(SolverError::Overturned { node: i, value: cn2.abs().to_f64_lossy() });
        }
        let n2 = nv[1];
        let e5_big = -tensor::dot(&dtu[i], &nv) * (T::one() / (cn2 * cn2) - T::one() / (n2 * n2))
            - (dtu[i][1] * dteta[i][0] - dtu[i][0] * dteta[i][1]) / (cn2 * cn2);
        e5[i] = n2 * n2 * e5_big;
    }
    Ok((e1, e2, e3, e4, e5))
}

/// `E(ξ, u, q, φ, σ)` on every level, with geometry per level; `E⁶ = E⁷ = 0`.
pub fn error_terms<T: Scalar>(
    state: &FlowState<T>,
    geoms: &[GeometryState<T>],
    mesh: &Mesh<T>,
    params: &DimensionlessParams<T>,
    law: &ConstitutiveLaw<T>,
) -> Result<RHSData<T>> {
    let levels = state.n_levels();
    if geoms.len() != levels || state.sigma.len() != levels {
        return Err(SolverError::InvalidInput("state and geometry level counts differ".into()));
    }
    let mut out = RHSData::zeros(mesh, levels);
    for k in 1..levels {
        let (e1, e2, e3, e4, e5) = error_level(mesh, &state.levels[k], &state.sigma[k], &geoms[k], params, law)?;
        out.f[k] = e1;
        out.a_div[k] = e2;
        out.m[k] = e3;
        out.g[k] = e4;
        out.k[k] = e5;
    }
    Ok(out)
}

/// Composite norm for stopping rules: `L²(H²)` for u by second differences,
/// `L²(H¹)` plus time-sup for σ, `L²` for q and φ.
pub fn composite_norm<T: Scalar>(state: &FlowState<T>, mesh: &Mesh<T>, dt: T) -> T {
    let w = mesh.weights();
    let mut acc = T::zero();
    for (lvl, sig) in state.levels.iter().zip(&state.sigma) {
        let u = lvl.nodal_u();
        let g = mesh.grad_vector(&u);
        let mut s = T::zero();
        for c in 0..2 {
            for d in 0..2 {
                let hess = mesh.grad_scalar(&component(&g, c, d));
                for (p, h) in hess.iter().enumerate() {
                    s += w[p] * (h[0] * h[0] + h[1] * h[1] + g[p][c][d] * g[p][c][d]);
                }
            }
        }
        for (p, v) in u.iter().enumerate() {
            s += w[p] * tensor::dot(v, v);
        }
        for c in 0..3 {
            let f: Vec<T> = sig.iter().map(|x| x[c]).collect();
            let weight = if c == 1 { T::lit(2.0) } else { T::one() };
            for (p, gr) in mesh.grad_scalar(&f).iter().enumerate() {
                s += weight * w[p] * (f[p] * f[p] + tensor::dot(gr, gr));
            }
        }
        for (p, qv) in lvl.nodal_q().iter().enumerate() {
            s += w[p] * *qv * *qv;
        }
        for v in &lvl.phi {
            s += mesh.dx * *v * *v;
        }
        acc += dt * s;
    }
    acc.sqrt() + constitutive::sup_norm(&state.sigma)
}

struct Context<'a, T> {
    mesh: &'a Mesh<T>,
    system: &'a StokesSystem<T>,
    params: &'a DimensionlessParams<T>,
    law: &'a ConstitutiveLaw<T>,
    opts: &'a FixedPointOptions<T>,
}

impl<T: Scalar> Context<'_, T> {
    fn dt(&self) -> T {
        self.system.dt()
    }

    /// Time-stepped Stokes solves from `init` with per-level data and stress.
    fn march(
        &self,
        init: StokesSolution<T>,
        data: &RHSData<T>,
        sigma: &StressTrajectory<T>,
        report: &mut IterationReport,
    ) -> Result<Vec<StokesSolution<T>>> {
        let levels = data.n_levels();
        let mut out = Vec::with_capacity(levels);
        if self.opts.velocity_frozen {
            let zero = StokesSolution::zeros(self.mesh);
            out.resize(levels, zero);
            return Ok(out);
        }
        out.push(init);
        for k in 1..levels {
            let (sol, res) = self.system.solve_step(&out[k - 1], &data.stokes(k), &sigma[k])?;
            report.max_divergence = report.max_divergence.max(res.relative_divergence().to_f64_lossy());
            out.push(sol);
        }
        Ok(out)
    }

    /// Picard loop for the perturbation `x` (zero initial state) about `base`:
    /// `P₁(base + x) − P₁-stress(base) = (data, m)` with the stress equation
    /// written directly for the total.
    fn picard(
        &self,
        base: &FlowState<T>,
        base_grad: &GradTrajectory<T>,
        data: &RHSData<T>,
        m: &StressTrajectory<T>,
    ) -> Result<(FlowState<T>, IterationReport)> {
        let levels = data.n_levels();
        let nodes = self.mesh.n_nodes();
        let dt = self.dt();
        let mut report = IterationReport::default();
        let mut x = FlowState::zeros(self.mesh, levels);
        let mut grad_x = constitutive::zero_grad_trajectory(levels, nodes);
        let zero_init = StokesSolution::zeros(self.mesh);
        for _ in 0..self.opts.max_iter.max(1) {
            let sigma = if self.opts.stress_stubbed {
                constitutive::zero_stress_trajectory(levels, nodes)
            } else {
                constitutive::picard_sigma_step(&x.sigma, &grad_x, base_grad, &base.sigma, m, dt, self.params, self.law)?
            };
            let lv = self.march(zero_init.clone(), data, &sigma, &mut report)?;
            let next = FlowState { levels: lv, sigma };
            let d = composite_norm(&next.combine(T::one(), &x, -T::one()), self.mesh, dt);
            let size = composite_norm(&next, self.mesh, dt);
            if !d.is_finite() {
                return Err(SolverError::NonFinite("Picard iterate".into()));
            }
            report.push_diff(d.to_f64_lossy());
            let total_sup = base
                .sigma
                .iter()
                .zip(&next.sigma)
                .flat_map(|(b, s)| b.iter().zip(s).map(|(p, q)| tensor::sym_norm(&tensor::sym_add(p, q))))
                .fold(T::zero(), T::max);
            report.sigma_sup.push(total_sup.to_f64_lossy());
            grad_x = next.grad_u(self.mesh);
            x = next;
            if d <= self.opts.inner_tol || d <= T::lit(1e-13) * size {
                report.converged = true;
                break;
            }
        }
        if !report.converged && self.opts.require_convergence {
            return Err(SolverError::NoConvergence {
                iterations: report.iterations,
                last_diff: report.diffs.last().copied().unwrap_or(f64::NAN),
            });
        }
        Ok((x, report))
    }

    /// `P₁⁻¹(rhs)` from a staggered initial state.
    fn invert_p1(&self, rhs: &RHSData<T>, init: StokesSolution<T>) -> Result<(FlowState<T>, IterationReport)> {
        let levels = rhs.n_levels();
        let nodes = self.mesh.n_nodes();
        let sigma1 = if self.opts.stress_stubbed {
            constitutive::zero_stress_trajectory(levels, nodes)
        } else {
            let m1 = constitutive::zero_stress_trajectory(levels, nodes);
            constitutive::lift_sigma1(&rhs.sigma0, &m1, self.params.we, self.dt())?
        };
        let mut lift_report = IterationReport::default();
        let lift = self.march(init, rhs, &sigma1, &mut lift_report)?;
        let base = FlowState { levels: lift, sigma: sigma1 };
        let base_grad = base.grad_u(self.mesh);
        let zero_data = RHSData::zeros(self.mesh, levels);
        let (x, mut report) = self.picard(&base, &base_grad, &zero_data, &rhs.m)?;
        report.max_divergence = report.max_divergence.max(lift_report.max_divergence);
        Ok((base.combine(T::one(), &x, T::one()), report))
    }

    /// `P₂[L]⁻¹(rhs)`: the perturbation `x` with zero initial state such that
    /// `P₁(L + x) − P₁(L) = rhs`.
    fn invert_p2(
        &self,
        lift: &FlowState<T>,
        lift_grad: &GradTrajectory<T>,
        lift_residual: &StressTrajectory<T>,
        rhs: &RHSData<T>,
    ) -> Result<(FlowState<T>, IterationReport)> {
        let m: StressTrajectory<T> = rhs
            .m
            .iter()
            .zip(lift_residual)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| tensor::sym_add(p, q)).collect())
            .collect();
        self.picard(lift, lift_grad, rhs, &m)
    }
}

fn initial_solution<T: Scalar>(mesh: &Mesh<T>, rhs: &RHSData<T>) -> StokesSolution<T> {
    let mut init = StokesSolution::from_nodal_u(mesh, &rhs.u0);
    init.phi.clone_from(&rhs.phi0);
    init
}

/// Solves `P₁(u, q, φ, σ) = rhs` by lifting the initial data and Picard
/// iteration between the constitutive and Stokes steps. The window length is
/// `(levels − 1)·dt`.
pub fn invert_p1<T: Scalar>(
    rhs: &RHSData<T>,
    mesh: &Mesh<T>,
    params: &DimensionlessParams<T>,
    law: &ConstitutiveLaw<T>,
    dt: T,
    opts: &FixedPointOptions<T>,
) -> Result<(FlowState<T>, IterationReport)> {
    rhs.validate(mesh)?;
    law.validate()?;
    if !opts.force {
        let c = compatibility_check(&rhs.u0, &rhs.sigma0, mesh, params, opts.compat_tol);
        if !c.passes() {
            return Err(SolverError::InvalidInput(format!(
                "initial data fail the compatibility conditions (div {:e}, bottom {:e}, traction {:e})",
                c.divergence.to_f64_lossy(),
                c.bottom.to_f64_lossy(),
                c.traction.to_f64_lossy()
            )));
        }
    }
    let system = StokesSystem::new(mesh, dt, params, opts.stokes)?;
    let ctx = Context { mesh, system: &system, params, law, opts };
    ctx.invert_p1(rhs, initial_solution(mesh, rhs))
}

/// Discrete L² norms of the five residuals of the full Lagrangian system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullResidual<T> {
    pub momentum: T,
    pub divergence: T,
    pub constitutive: T,
    pub traction: T,
    pub phi: T,
}

impl<T: Scalar> FullResidual<T> {
    pub fn max(&self) -> T {
        [self.momentum, self.divergence, self.constitutive, self.traction, self.phi]
            .into_iter()
            .fold(T::zero(), T::max)
    }
}

/// Geometry on every level from `η_k = η_{k−1} + dt·u_k`.
pub fn geometry_trajectory<T: Scalar>(
    start: &GeometryState<T>,
    state: &FlowState<T>,
    mesh: &Mesh<T>,
    dt: T,
) -> Result<Vec<GeometryState<T>>> {
    let mut out = Vec::with_capacity(state.n_levels());
    out.push(start.clone());
    for lvl in &state.levels[1..] {
        let next = geometry::advance_eta(out.last().expect("nonempty"), &lvl.nodal_u(), dt, mesh)?;
        out.push(next);
    }
    Ok(out)
}

fn full_residual<T: Scalar>(
    ctx: &Context<'_, T>,
    total: &FlowState<T>,
    geoms: &[GeometryState<T>],
    p0: &RHSData<T>,
) -> Result<FullResidual<T>> {
    let mesh = ctx.mesh;
    let dt = ctx.dt();
    let err = error_terms(total, geoms, mesh, ctx.params, ctx.law)?;
    let mut acc = [T::zero(); 5];
    for k in 1..total.n_levels() {
        let data = StokesRHS {
            f: err.f[k].iter().map(|v| tensor::vec_scale(v, -T::one())).collect(),
            a_div: err.a_div[k].iter().map(|v| -*v).collect(),
            g: err.g[k]
                .iter()
                .zip(&p0.g[k])
                .map(|(e, z)| [-e[0] - z[0], -e[1] - z[1]])
                .collect(),
            k: err.k[k].iter().map(|v| -*v).collect(),
        };
        let r = ctx
            .system
            .residual_report(&total.levels[k], &total.levels[k - 1], &data, &total.sigma[k])?;
        for (slot, v) in [r.momentum, r.divergence, r.traction, r.phi].into_iter().enumerate() {
            let idx = if slot < 2 { slot } else { slot + 1 };
            acc[idx] += dt * v * v;
        }
        acc[0] += dt * r.bottom * r.bottom;
    }
    if !ctx.opts.stress_stubbed {
        let grad = total.grad_u(mesh);
        let xi: Vec<Vec<Mat2<T>>> = geoms.iter().map(|g| g.xi.clone()).collect();
        let res = constitutive::full_lagrangian_stress_residual(&grad, &total.sigma, &xi, dt, ctx.params, ctx.law)?;
        let w = mesh.weights();
        for lvl in &res[1..] {
            for (p, s) in lvl.iter().enumerate() {
                let n = tensor::sym_norm(s);
                acc[2] += dt * w[p] * n * n;
            }
        }
    }
    Ok(FullResidual {
        momentum: acc[0].sqrt(),
        divergence: acc[1].sqrt(),
        constitutive: acc[2].sqrt(),
        traction: acc[3].sqrt(),
        phi: acc[4].sqrt(),
    })
}

/// Output of [`solve_full`]: levels `0..=n` over all windows.
#[derive(Debug, Clone)]
pub struct FullSolution<T> {
    pub state: FlowState<T>,
    pub geometry: Vec<GeometryState<T>>,
    pub times: Vec<T>,
    pub report: IterationReport,
    /// Full-system residuals at the end of each window.
    pub residuals: Vec<FullResidual<T>>,
    /// Outer reports per window.
    pub window_reports: Vec<IterationReport>,
}

struct WindowResult<T> {
    total: FlowState<T>,
    geoms: Vec<GeometryState<T>>,
    report: IterationReport,
    residual: FullResidual<T>,
}

fn solve_window<T: Scalar>(
    ctx: &Context<'_, T>,
    init: &StokesSolution<T>,
    sigma0: &StressField<T>,
    geom0: &GeometryState<T>,
    steps: usize,
) -> Result<WindowResult<T>> {
    let mesh = ctx.mesh;
    let dt = ctx.dt();
    let levels = steps + 1;
    let p0 = zeroth_order_source(mesh, ctx.params, levels);
    let mut rhs = p0.clone().negated_sources();
    rhs.sigma0.clone_from(sigma0);
    let (lift, lift_report) = ctx.invert_p1(&rhs, init.clone())?;
    let lift_grad = lift.grad_u(mesh);
    let lift_residual = if ctx.opts.stress_stubbed {
        constitutive::zero_stress_trajectory(levels, mesh.n_nodes())
    } else {
        constitutive::p1_stress_residual(&lift_grad, &lift.sigma, dt, ctx.params, ctx.law)?
    };
    let mut report = IterationReport::default();
    report.absorb(&lift_report);
    let mut x = FlowState::zeros(mesh, levels);
    let mut total = lift.clone();
    let mut geoms = geometry_trajectory(geom0, &total, mesh, dt)?;
    for _ in 0..ctx.opts.max_outer.max(1) {
        let e = error_terms(&total, &geoms, mesh, ctx.params, ctx.law)?.negated_sources();
        let (next, inner) = ctx.invert_p2(&lift, &lift_grad, &lift_residual, &e)?;
        report.absorb(&inner);
        let d = composite_norm(&next.combine(T::one(), &x, -T::one()), mesh, dt);
        if !d.is_finite() {
            return Err(SolverError::NonFinite("outer iterate".into()));
        }
        report.push_diff(d.to_f64_lossy());
        x = next;
        total = lift.combine(T::one(), &x, T::one());
        report.sigma_sup.push(constitutive::sup_norm(&total.sigma).to_f64_lossy());
        geoms = geometry_trajectory(geom0, &total, mesh, dt)?;
        if d <= ctx.opts.tol {
            report.converged = true;
            break;
        }
    }
    if !report.converged {
        return Err(SolverError::NoConvergence {
            iterations: report.iterations,
            last_diff: report.diffs.last().copied().unwrap_or(f64::NAN),
        });
    }
    let residual = full_residual(ctx, &total, &geoms, &p0)?;
    Ok(WindowResult { total, geoms, report, residual })
}

/// Solves the full Lagrangian system on `[0, t_final]` by marching windows of
/// length `window`; each window lifts its initial state, inverts `P₁` and
/// runs the outer contraction `x ← P₂[L]⁻¹(−E(L + x))`.
#[allow(clippy::too_many_arguments)]
pub fn solve_full<T: Scalar>(
    u0: &[Vec2<T>],
    sigma0: &[Sym<T>],
    mesh: &Mesh<T>,
    params: &DimensionlessParams<T>,
    law: &ConstitutiveLaw<T>,
    window: T,
    t_final: T,
    dt: T,
    opts: &FixedPointOptions<T>,
) -> Result<FullSolution<T>> {
    law.validate()?;
    if !(dt > T::zero()) || !(window >= dt) || !(t_final >= dt) {
        return Err(SolverError::InvalidInput("need 0 < dt <= window and dt <= t_final".into()));
    }
    let mut rhs = RHSData::zeros(mesh, 2);
    rhs.u0 = u0.to_vec();
    rhs.sigma0 = sigma0.to_vec();
    rhs.validate(mesh)?;
    if !opts.force {
        let c = compatibility_check(u0, sigma0, mesh, params, opts.compat_tol);
        if !c.passes() {
            return Err(SolverError::InvalidInput(format!(
                "initial data fail the compatibility conditions (div {:e}, bottom {:e}, traction {:e})",
                c.divergence.to_f64_lossy(),
                c.bottom.to_f64_lossy(),
                c.traction.to_f64_lossy()
            )));
        }
    }
    let system = StokesSystem::new(mesh, dt, params, opts.stokes)?;
    let ctx = Context { mesh, system: &system, params, law, opts };

    let total_steps = (t_final / dt).round().to_usize().unwrap_or(0).max(1);
    let mut window_steps = (window / dt).round().to_usize().unwrap_or(0).max(1);
    let mut out_state = FlowState { levels: vec![initial_solution(mesh, &rhs)], sigma: vec![sigma0.to_vec()] };
    let mut out_geom = vec![GeometryState::initial(mesh)];
    let mut report = IterationReport::default();
    let mut residuals = Vec::new();
    let mut window_reports = Vec::new();
    let mut done = 0;
    while done < total_steps {
        let steps = window_steps.min(total_steps - done);
        let started = Instant::now();
        let init = out_state.levels.last().expect("nonempty").clone();
        let sig0 = out_state.sigma.last().expect("nonempty").clone();
        let geom0 = out_geom.last().expect("nonempty").clone();
        match solve_window(&ctx, &init, &sig0, &geom0, steps) {
            Ok(w) => {
                report.window_times.push(started.elapsed().as_secs_f64());
                report.window_lengths.push((dt * T::from_count(steps)).to_f64_lossy());
                report.diffs.extend(&w.report.diffs);
                report.kappa.extend(&w.report.kappa);
                report.sigma_sup.extend(&w.report.sigma_sup);
                report.inner_iterations.extend(&w.report.inner_iterations);
                report.iterations += w.report.iterations;
                report.max_divergence = report.max_divergence.max(w.report.max_divergence);
                out_state.levels.extend(w.total.levels.into_iter().skip(1));
                out_state.sigma.extend(w.total.sigma.into_iter().skip(1));
                out_geom.extend(w.geoms.into_iter().skip(1));
                residuals.push(w.residual);
                window_reports.push(w.report);
                done += steps;
            }
            Err(SolverError::NoConvergence { iterations, last_diff }) => {
                if opts.auto_halve && report.halvings < opts.max_halvings && steps > 1 {
                    report.halvings += 1;
                    window_steps = (steps / 2).max(1);
                    continue;
                }
                return Err(SolverError::NoConvergence { iterations, last_diff });
            }
            Err(e) => return Err(e),
        }
    }
    report.converged = true;
    let times = (0..=done).map(|k| dt * T::from_count(k)).collect();
    Ok(FullSolution { state: out_state, geometry: out_geom, times, report, residuals, window_reports })
}
