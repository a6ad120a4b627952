//! Extra-stress constitutive laws and their per-node time integration.
//!
//! Stress trajectories are indexed `[level][node]` on a uniform time grid
//! `t_k = k·dt`, `k = 0..=n`. Velocity gradients use `g[i][j] = ∂u_i/∂X_j`.
//!
//! Every integrator here is backward Euler in the unknown stress: all terms
//! linear in it are implicit (a 3×3 solve per node and level), known sources
//! are explicit, and the law coefficients are lagged one Picard iterate.

use crate::error::{Result, SolverError};
use crate::scalar::Scalar;
use crate::scaling::DimensionlessParams;
use crate::tensor::{self, Mat2, Sym};

pub type StressField<T> = Vec<Sym<T>>;
pub type StressTrajectory<T> = Vec<StressField<T>>;
pub type GradTrajectory<T> = Vec<Vec<Mat2<T>>>;

/// Condition estimate above which a per-node implicit system is rejected.
pub const CONSTITUTIVE_COND_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstitutiveLaw<T> {
    /// `a = 1` is Oldroyd-B.
    JohnsonSegalman { a: T },
    Giesekus { a: T, c: T },
    /// `Y(x) = exp(ε_PTT x)`, or `exp(ε_PTT We x)` when `we_in_exponent`.
    PttExponential { a: T, eps_ptt: T, we_in_exponent: bool },
    /// `Y(x) = 1 + ε_PTT x`, or `1 + ε_PTT We x` when `we_in_exponent`.
    PttLinear { a: T, eps_ptt: T, we_in_exponent: bool },
}

impl<T: Scalar> ConstitutiveLaw<T> {
    pub fn oldroyd_b() -> Self {
        Self::JohnsonSegalman { a: T::one() }
    }

    pub fn a(&self) -> T {
        match *self {
            Self::JohnsonSegalman { a }
            | Self::Giesekus { a, .. }
            | Self::PttExponential { a, .. }
            | Self::PttLinear { a, .. } => a,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::JohnsonSegalman { .. } => "johnson_segalman",
            Self::Giesekus { .. } => "giesekus",
            Self::PttExponential { .. } => "ptt_exponential",
            Self::PttLinear { .. } => "ptt_linear",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.a();
        if !(a >= -T::one() && a <= T::one()) {
            return Err(SolverError::InvalidInput("slip parameter a must lie in [-1, 1]".into()));
        }
        match *self {
            Self::Giesekus { c, .. } if !(c > T::zero()) => {
                Err(SolverError::InvalidInput("c_giesekus must be > 0".into()))
            }
            Self::PttExponential { eps_ptt, .. } | Self::PttLinear { eps_ptt, .. }
                if !(eps_ptt > T::zero()) =>
            {
                Err(SolverError::InvalidInput("eps_ptt must be > 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Extra law term `N(σ_lag)[σ]`, linear in `σ`. Zero for Johnson–Segalman.
    pub fn law_term(&self, sigma_lag: &Sym<T>, sigma: &Sym<T>, we: T) -> Sym<T> {
        match *self {
            Self::JohnsonSegalman { .. } => tensor::zero_sym(),
            Self::Giesekus { c, .. } => {
                let p = tensor::mat_mul(&tensor::sym_to_mat(sigma_lag), &tensor::sym_to_mat(sigma));
                // symmetric part of σ_lag σ; the packed form keeps the stress symmetric
                tensor::sym_scale(&tensor::mat_to_sym(&p), c)
            }
            Self::PttExponential { eps_ptt, we_in_exponent, .. } => {
                let x = eps_ptt * tensor::sym_trace(sigma_lag) * if we_in_exponent { we } else { T::one() };
                tensor::sym_scale(sigma, x.exp_m1())
            }
            Self::PttLinear { eps_ptt, we_in_exponent, .. } => {
                let x = eps_ptt * tensor::sym_trace(sigma_lag) * if we_in_exponent { we } else { T::one() };
                tensor::sym_scale(sigma, x)
            }
        }
    }
}

/// Johnson–Segalman interpolated nonlinearity
/// `g_a(G, σ) = ((a−1)/2)(Gᵀσ + σG) + ((a+1)/2)(σGᵀ + Gσ)`.
pub fn g_a<T: Scalar>(grad_u: &Mat2<T>, sigma: &Sym<T>, a: T) -> Sym<T> {
    let s = tensor::sym_to_mat(sigma);
    let x = tensor::mat_mul(&s, grad_u);
    let y = tensor::mat_mul(grad_u, &s);
    let half = T::lit(0.5);
    let cm = (a - T::one()) * half;
    let cp = (a + T::one()) * half;
    // X + Xᵀ and Y + Yᵀ are formed in packed form, so symmetry is structural
    let two = T::lit(2.0);
    [
        cm * two * x[0][0] + cp * two * y[0][0],
        cm * (x[0][1] + x[1][0]) + cp * (y[0][1] + y[1][0]),
        cm * two * x[1][1] + cp * two * y[1][1],
    ]
}

pub fn g_a_field<T: Scalar>(grad_u: &[Mat2<T>], sigma: &[Sym<T>], a: T) -> StressField<T> {
    grad_u.iter().zip(sigma).map(|(g, s)| g_a(g, s, a)).collect()
}

/// Rate of strain `D = (G + Gᵀ)/2` in packed form.
pub fn strain_rate<T: Scalar>(grad_u: &Mat2<T>) -> Sym<T> {
    tensor::mat_to_sym(grad_u)
}

/// Effective gradient `∇u·ξ̄` seen by the full Lagrangian equations.
pub fn contracted_gradient<T: Scalar>(grad_u: &Mat2<T>, xi: &Mat2<T>) -> Mat2<T> {
    let xi_bar = tensor::mat_add(&tensor::identity(), xi);
    tensor::mat_mul(grad_u, &xi_bar)
}

fn linear_map_matrix<T: Scalar>(f: impl Fn(&Sym<T>) -> Sym<T>) -> [[T; 3]; 3] {
    let mut m = [[T::zero(); 3]; 3];
    for j in 0..3 {
        let mut e = tensor::zero_sym::<T>();
        e[j] = T::one();
        let col = f(&e);
        for i in 0..3 {
            m[i][j] = col[i];
        }
    }
    m
}

/// `P₁` constitutive operator at one node and level:
/// `σ + We(∂_tσ − g_a(G, σ)) + N(σ_lag)[σ] − 2ε D[G]` with `∂_tσ` supplied.
fn constitutive_operator<T: Scalar>(
    sigma: &Sym<T>,
    dsigma_dt: &Sym<T>,
    grad: &Mat2<T>,
    sigma_lag: &Sym<T>,
    params: &DimensionlessParams<T>,
    law: &ConstitutiveLaw<T>,
) -> Sym<T> {
    let we = params.we;
    let ga = g_a(grad, sigma, law.a());
    let nl = law.law_term(sigma_lag, sigma, we);
    let d = strain_rate(grad);
    let two_eps = T::lit(2.0) * params.eps;
    [0, 1, 2].map(|c| sigma[c] + we * (dsigma_dt[c] - ga[c]) + nl[c] - two_eps * d[c])
}

fn check_shapes<T>(name: &str, levels: usize, nodes: usize, traj: &[Vec<T>]) -> Result<()> {
    if traj.len() != levels || traj.iter().any(|f| f.len() != nodes) {
        return Err(SolverError::InvalidInput(format!(
            "{name}: expected {levels} levels of {nodes} nodes"
        )));
    }
    Ok(())
}

/// Discrete `P₁` constitutive residual of a trajectory with backward-difference
/// `∂_tσ`; level 0 is the initial condition and carries no residual.
pub fn p1_stress_residual<T: Scalar>(
    grad_u: &[Vec<Mat2<T>>],
    sigma: &[StressField<T>],
    dt: T,
    params: &DimensionlessParams<T>,
    law: &ConstitutiveLaw<T>,
) -> Result<StressTrajectory<T>> {
    let levels = sigma.len();
    let nodes = sigma.first().map_or(0, Vec::len);
    check_shapes("grad_u", levels, nodes, grad_u)?;
    let mut out = vec![vec![tensor::zero_sym(); nodes]; levels];
    for k in 1..levels {
        for p in 0..nodes {
            let dsdt = tensor::sym_scale(&tensor::sym_sub(&sigma[k][p], &sigma[k - 1][p]), T::one() / dt);
            out[k][p] = constitutive_operator(&sigma[k][p], &dsdt, &grad_u[k][p], &sigma[k][p], params, law);
        }
    }
    Ok(out)
}

/// Residual of the full Lagrangian constitutive equation, in which every
/// velocity gradient is contracted with `ξ̄ = Id + ξ`.
pub fn full_lagrangian_stress_residual<T: Scalar>(
    grad_u: &[Vec<Mat2<T>>],
    sigma: &[StressField<T>],
    xi: &[Vec<Mat2<T>>],
    dt: T,
    params: &DimensionlessParams<T>,
    law: &ConstitutiveLaw<T>,
) -> Result<StressTrajectory<T>> {
    let levels = sigma.len();
    let nodes = sigma.first().map_or(0, Vec::len);
    check_shapes("xi", levels, nodes, xi)?;
    check_shapes("grad_u", levels, nodes, grad_u)?;
    let contracted: GradTrajectory<T> = grad_u
        .iter()
        .zip(xi)
        .map(|(g, x)| g.iter().zip(x).map(|(g, x)| contracted_gradient(g, x)).collect())
        .collect();
    p1_stress_residual(&contracted, sigma, dt, params, law)
}

/// One Picard update of the stress perturbation about a base state.
///
/// Solves for `σ` with `σ(0) = 0`, level by level, the lagged system
/// `P₁(u_b + uⁿ, σ_b + σ) = m` where the velocity and the law coefficient
/// `σ_b + σⁿ` are frozen. With `u_b = u₁`, `σ_b = σ₁` this is the Picard
/// step about the lifts; with zero base it is the plain iteration.
#[allow(clippy::too_many_arguments)]
pub fn picard_sigma_step<T: Scalar>(
    sigma_prev: &[StressField<T>],
    grad_un: &[Vec<Mat2<T>>],
    grad_u1: &[Vec<Mat2<T>>],
    sigma1: &[StressField<T>],
    m: &[StressField<T>],
    dt: T,
    params: &DimensionlessParams<T>,
    law: &ConstitutiveLaw<T>,
) -> Result<StressTrajectory<T>> {
    if !(dt > T::zero()) {
        return Err(SolverError::InvalidInput("dt must be positive".into()));
    }
    let levels = m.len();
    let nodes = m.first().map_or(0, Vec::len);
    check_shapes("sigma_prev", levels, nodes, sigma_prev)?;
    check_shapes("grad_un", levels, nodes, grad_un)?;
    check_shapes("grad_u1", levels, nodes, grad_u1)?;
    check_shapes("sigma1", levels, nodes, sigma1)?;
    let we = params.we;
    let a = law.a();
    let inv_dt = T::one() / dt;
    let mut out = vec![vec![tensor::zero_sym(); nodes]; levels];
    for k in 1..levels {
        for p in 0..nodes {
            let grad = tensor::mat_add(&grad_u1[k][p], &grad_un[k][p]);
            let lag = tensor::sym_add(&sigma1[k][p], &sigma_prev[k][p]);
            let sb = &sigma1[k][p];
            let dsb = tensor::sym_scale(&tensor::sym_sub(sb, &sigma1[k - 1][p]), inv_dt);
            let base = constitutive_operator(sb, &dsb, &grad, &lag, params, law);
            let mat = linear_map_matrix(|e| {
                let ga = g_a(&grad, e, a);
                let nl = law.law_term(&lag, e, we);
                [0, 1, 2].map(|c| e[c] * (T::one() + we * inv_dt) - we * ga[c] + nl[c])
            });
            let rhs: [T; 3] = [0, 1, 2].map(|c| m[k][p][c] - base[c] + we * inv_dt * out[k - 1][p][c]);
            if rhs.iter().any(|v| !v.is_finite()) {
                return Err(SolverError::NonFinite(format!(
                    "constitutive source at node {p}, level {k}"
                )));
            }
            let cond = tensor::cond3(&mat);
            if !(cond.to_f64_lossy() < CONSTITUTIVE_COND_LIMIT) {
                return Err(SolverError::SingularConstitutive {
                    node: p,
                    level: k,
                    condition: cond.to_f64_lossy(),
                });
            }
            let sol = tensor::solve3(&mat, &rhs).ok_or(SolverError::SingularConstitutive {
                node: p,
                level: k,
                condition: f64::INFINITY,
            })?;
            out[k][p] = sol;
        }
    }
    Ok(out)
}

/// Initial-stress lift `σ₁ + We ∂_tσ₁ = m₁`, `σ₁(0) = σ₀`, integrated exactly
/// in the homogeneous part with trapezoidal quadrature of the source.
/// For `We = 0` the lift is algebraic, `σ₁ = m₁` for `t > 0`.
pub fn lift_sigma1<T: Scalar>(
    sigma0: &[Sym<T>],
    m1: &[StressField<T>],
    we: T,
    dt: T,
) -> Result<StressTrajectory<T>> {
    let levels = m1.len();
    let nodes = sigma0.len();
    check_shapes("m1", levels, nodes, m1)?;
    if levels == 0 {
        return Ok(Vec::new());
    }
    let mut out = vec![sigma0.to_vec(); levels];
    if we == T::zero() {
        out[1..].clone_from_slice(&m1[1..]);
        return Ok(out);
    }
    let decay = (-dt / we).exp();
    let half = dt * T::lit(0.5) / we;
    // recursive form of the convolution: exact homogeneous decay over each step
    for k in 1..levels {
        for p in 0..nodes {
            out[k][p] = [0, 1, 2].map(|c| {
                out[k - 1][p][c] * decay + half * (m1[k][p][c] + decay * m1[k - 1][p][c])
            });
        }
    }
    Ok(out)
}

/// `2 c S T₀ / We` and whether it is below one.
pub fn giesekus_bound_condition<T: Scalar>(c: T, bound: T, t0: T, we: T) -> (T, bool) {
    let v = T::lit(2.0) * c * bound * t0 / we;
    (v, v < T::one())
}

/// `(e^{ε_PTT S} − 1) T₀` with unit constant, and whether it is below one.
pub fn ptt_bound_condition<T: Scalar>(eps_ptt: T, bound: T, t0: T) -> (T, bool) {
    let v = (eps_ptt * bound).exp_m1() * t0;
    (v, v < T::one())
}

pub fn zero_stress_trajectory<T: Scalar>(levels: usize, nodes: usize) -> StressTrajectory<T> {
    vec![vec![tensor::zero_sym(); nodes]; levels]
}

pub fn zero_grad_trajectory<T: Scalar>(levels: usize, nodes: usize) -> GradTrajectory<T> {
    vec![vec![tensor::zero_mat(); nodes]; levels]
}

/// Largest nodal stress norm over a trajectory.
pub fn sup_norm<T: Scalar>(traj: &[StressField<T>]) -> T {
    traj.iter()
        .flat_map(|f| f.iter())
        .fold(T::zero(), |acc, s| acc.max(tensor::sym_norm(s)))
}
