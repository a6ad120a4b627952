//! Reference domain, Lagrangian displacement and free-surface geometry.
//!
//! The reference domain is one period `[0, L_x)` of a strip bounded below by
//! `X₂ = -b(X₁)` and above by `X₂ = ζ(X₁)`. The mesh maps computational
//! coordinates `(x, s) ∈ [0, L_x) × [0, 1]` to `X = (x, -b(x) + h(x) s)` with
//! `h = ζ + b`.

use crate::error::{Result, SolverError};
use crate::scalar::Scalar;
use crate::spectral::{self, SurfaceDerivative};
use crate::tensor::{self, Mat2, Vec2};

/// Threshold below which `|det(Id + dη)|` is a tangled mesh.
pub const SINGULAR_MAP_TOL: f64 = 1e-12;
/// Threshold below which `|1 + η₁,X₁|` is a folded surface.
pub const FOLDING_TOL: f64 = 1e-10;
/// Threshold below which `|𝒩₂|` is an overturned surface.
pub const OVERTURN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DomainProfile<T> {
    /// Free-surface height ζ at the surface sample points.
    pub zeta: Vec<T>,
    /// Bottom depth b; the bottom is `X₂ = -b`.
    pub bottom: Vec<T>,
    pub period: T,
    pub derivative: SurfaceDerivative,
}

impl<T: Scalar> DomainProfile<T> {
    pub fn from_fn(n: usize, period: T, zeta: impl Fn(T) -> T, bottom: impl Fn(T) -> T) -> Self {
        let xs: Vec<T> = (0..n)
            .map(|i| period * T::from_count(i) / T::from_count(n))
            .collect();
        Self {
            zeta: xs.iter().map(|&x| zeta(x)).collect(),
            bottom: xs.iter().map(|&x| bottom(x)).collect(),
            period,
            derivative: SurfaceDerivative::Spectral,
        }
    }

    pub fn flat(n: usize, period: T, depth: T) -> Self {
        Self::from_fn(n, period, |_| T::zero(), |_| depth)
    }

    /// Sinusoidal surface `amp · sin(2π m X₁ / L_x)` over a constant depth.
    pub fn sinusoid(n: usize, period: T, amplitude: T, waves: usize, depth: T) -> Self {
        let k = T::lit(2.0) * T::PI() * T::from_count(waves) / period;
        Self::from_fn(n, period, move |x| amplitude * (k * x).sin(), move |_| depth)
    }

    pub fn with_derivative(mut self, mode: SurfaceDerivative) -> Self {
        self.derivative = mode;
        self
    }

    pub fn n_surface(&self) -> usize {
        self.zeta.len()
    }

    pub fn dx(&self) -> T {
        self.period / T::from_count(self.n_surface())
    }

    pub fn zeta_prime(&self) -> Vec<T> {
        spectral::derivative(&self.zeta, self.period, 1, self.derivative)
    }

    pub fn zeta_second(&self) -> Vec<T> {
        spectral::derivative(&self.zeta, self.period, 2, self.derivative)
    }

    /// Surface derivative `d/dX₁` of a periodic trace.
    pub fn d_x1(&self, f: &[T]) -> Vec<T> {
        spectral::derivative(f, self.period, 1, self.derivative)
    }

    /// Tangential derivative `∂_T = (1 + ζ'²)^{-1/2} ∂_X₁` of a surface trace.
    pub fn d_t(&self, f: &[T]) -> Vec<T> {
        let zp = self.zeta_prime();
        self.d_x1(f)
            .into_iter()
            .zip(zp)
            .map(|(d, z)| d / (T::one() + z * z).sqrt())
            .collect()
    }

    /// Unit tangent `T = (1, ζ')/√(1+ζ'²)` of the initial surface.
    pub fn tangent(&self) -> Vec<Vec2<T>> {
        self.zeta_prime()
            .into_iter()
            .map(|z| {
                let r = (T::one() + z * z).sqrt();
                [T::one() / r, z / r]
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_surface();
        if n < 4 {
            return Err(SolverError::InvalidInput(format!(
                "profile needs at least 4 surface samples, got {n}"
            )));
        }
        if self.bottom.len() != n {
            return Err(SolverError::InvalidInput(
                "zeta and bottom sample counts differ".into(),
            ));
        }
        if !(self.period > T::zero()) {
            return Err(SolverError::InvalidInput("period must be positive".into()));
        }
        for (i, (&z, &b)) in self.zeta.iter().zip(&self.bottom).enumerate() {
            if !z.is_finite() || !b.is_finite() {
                return Err(SolverError::NonFinite("domain profile".into()));
            }
            if z <= -b {
                return Err(SolverError::CollapsedDomain {
                    column: i,
                    zeta: z.to_f64_lossy(),
                    neg_bottom: (-b).to_f64_lossy(),
                });
            }
        }
        Ok(())
    }
}

/// Column data of the mapping at one set of abscissae.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnData<T> {
    pub zeta: Vec<T>,
    pub zeta_p: Vec<T>,
    pub zeta_pp: Vec<T>,
    pub bottom: Vec<T>,
    pub bottom_p: Vec<T>,
    pub bottom_pp: Vec<T>,
}

impl<T: Scalar> ColumnData<T> {
    fn build(zeta: Vec<T>, bottom: Vec<T>, period: T, mode: SurfaceDerivative) -> Self {
        Self {
            zeta_p: spectral::derivative(&zeta, period, 1, mode),
            zeta_pp: spectral::derivative(&zeta, period, 2, mode),
            bottom_p: spectral::derivative(&bottom, period, 1, mode),
            bottom_pp: spectral::derivative(&bottom, period, 2, mode),
            zeta,
            bottom,
        }
    }

    pub fn height(&self, i: usize) -> T {
        self.zeta[i] + self.bottom[i]
    }

    /// Metric coefficients at column `i`, height fraction `s`:
    /// `(h, m, m_x, m_s)` with `∂₁ = ∂_x + m ∂_s` and `∂₂ = h⁻¹ ∂_s`.
    pub fn metric(&self, i: usize, s: T) -> Metric<T> {
        let h = self.zeta[i] + self.bottom[i];
        let hp = self.zeta_p[i] + self.bottom_p[i];
        let hpp = self.zeta_pp[i] + self.bottom_pp[i];
        let bp = self.bottom_p[i];
        let bpp = self.bottom_pp[i];
        let num = bp - s * hp;
        let m = num / h;
        Metric {
            h,
            m,
            m_x: (bpp - s * hpp) / h - num * hp / (h * h),
            m_s: -hp / h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric<T> {
    pub h: T,
    pub m: T,
    pub m_x: T,
    pub m_s: T,
}

/// Boundary-fitted structured mesh; node `(i, j)` has index `j * nx + i`,
/// row `j = 0` is the bottom and row `j = nz - 1` the free surface.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T> {
    pub nx: usize,
    pub nz: usize,
    pub period: T,
    pub dx: T,
    pub ds: T,
    pub profile: DomainProfile<T>,
    pub nodes: ColumnData<T>,
    pub mid: ColumnData<T>,
    pub x1: Vec<T>,
    pub x2: Vec<T>,
    pub surface_index: usize,
    pub bottom_index: usize,
}

impl<T: Scalar> Mesh<T> {
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn n_nodes(&self) -> usize {
        self.nx * self.nz
    }

    pub fn s(&self, j: usize) -> T {
        T::from_count(j) * self.ds
    }

    pub fn node_x(&self, i: usize) -> T {
        self.x1[i]
    }

    pub fn node_x2(&self, i: usize, j: usize) -> T {
        self.x2[self.idx(i, j)]
    }

    /// Surface trace (top row) of a nodal field.
    pub fn surface_trace<V: Copy>(&self, f: &[V]) -> Vec<V> {
        let j = self.surface_index;
        (0..self.nx).map(|i| f[self.idx(i, j)]).collect()
    }

    /// Trapezoidal quadrature weights `dx · h · ds` per node.
    pub fn weights(&self) -> Vec<T> {
        let mut w = vec![T::zero(); self.n_nodes()];
        for j in 0..self.nz {
            let edge = if j == 0 || j == self.nz - 1 { T::lit(0.5) } else { T::one() };
            for i in 0..self.nx {
                w[self.idx(i, j)] = self.dx * self.ds * self.nodes.height(i) * edge;
            }
        }
        w
    }

    pub fn area(&self) -> T {
        self.weights().into_iter().fold(T::zero(), |a, b| a + b)
    }

    /// Samples `f(X₁, X₂)` at every node.
    pub fn sample<V>(&self, f: impl Fn(T, T) -> V) -> Vec<V> {
        let mut out = Vec::with_capacity(self.n_nodes());
        for j in 0..self.nz {
            for i in 0..self.nx {
                out.push(f(self.x1[i], self.x2[self.idx(i, j)]));
            }
        }
        out
    }

    /// Computational-coordinate derivatives `(f_x, f_s)` of a nodal field.
    pub fn comp_derivatives(&self, f: &[T]) -> (Vec<T>, Vec<T>) {
        let (nx, nz) = (self.nx, self.nz);
        let two = T::lit(2.0);
        let mut fx = vec![T::zero(); f.len()];
        let mut fs = vec![T::zero(); f.len()];
        for j in 0..nz {
            for i in 0..nx {
                let ip = (i + 1) % nx;
                let im = (i + nx - 1) % nx;
                fx[self.idx(i, j)] = (f[self.idx(ip, j)] - f[self.idx(im, j)]) / (two * self.dx);
                fs[self.idx(i, j)] = if j == 0 {
                    (-T::lit(3.0) * f[self.idx(i, 0)] + T::lit(4.0) * f[self.idx(i, 1)]
                        - f[self.idx(i, 2)])
                        / (two * self.ds)
                } else if j == nz - 1 {
                    (T::lit(3.0) * f[self.idx(i, j)] - T::lit(4.0) * f[self.idx(i, j - 1)]
                        + f[self.idx(i, j - 2)])
                        / (two * self.ds)
                } else {
                    (f[self.idx(i, j + 1)] - f[self.idx(i, j - 1)]) / (two * self.ds)
                };
            }
        }
        (fx, fs)
    }

    /// Physical gradient `(∂₁f, ∂₂f)` of a nodal scalar field.
    pub fn grad_scalar(&self, f: &[T]) -> Vec<Vec2<T>> {
        let (fx, fs) = self.comp_derivatives(f);
        let mut out = vec![tensor::zero2(); f.len()];
        for j in 0..self.nz {
            let s = self.s(j);
            for i in 0..self.nx {
                let k = self.idx(i, j);
                let mt = self.nodes.metric(i, s);
                out[k] = [fx[k] + mt.m * fs[k], fs[k] / mt.h];
            }
        }
        out
    }

    /// Gradient `g[i][j] = ∂v_i/∂X_j` of a nodal vector field.
    pub fn grad_vector(&self, v: &[Vec2<T>]) -> Vec<Mat2<T>> {
        let c0: Vec<T> = v.iter().map(|a| a[0]).collect();
        let c1: Vec<T> = v.iter().map(|a| a[1]).collect();
        let g0 = self.grad_scalar(&c0);
        let g1 = self.grad_scalar(&c1);
        g0.into_iter().zip(g1).map(|(a, b)| [a, b]).collect()
    }
}

/// Builds the boundary-fitted mesh with `nx` columns and `nz` node rows.
pub fn build_mesh<T: Scalar>(profile: &DomainProfile<T>, nx: usize, nz: usize) -> Result<Mesh<T>> {
    if nx < 4 || nz < 3 {
        return Err(SolverError::InvalidInput(format!(
            "mesh needs nx >= 4 and nz >= 3, got nx={nx}, nz={nz}"
        )));
    }
    profile.validate()?;
    let mode = profile.derivative;
    let zeta = spectral::resample(&profile.zeta, nx);
    let bottom = spectral::resample(&profile.bottom, nx);
    let resampled = DomainProfile {
        zeta: zeta.clone(),
        bottom: bottom.clone(),
        period: profile.period,
        derivative: mode,
    };
    resampled.validate()?;
    let nodes = ColumnData::build(zeta.clone(), bottom.clone(), profile.period, mode);
    let mid = ColumnData::build(
        spectral::half_shift(&zeta, profile.period, mode),
        spectral::half_shift(&bottom, profile.period, mode),
        profile.period,
        mode,
    );
    for (i, h) in (0..nx).map(|i| (i, mid.height(i))) {
        if h <= T::zero() {
            return Err(SolverError::CollapsedDomain {
                column: i,
                zeta: mid.zeta[i].to_f64_lossy(),
                neg_bottom: (-mid.bottom[i]).to_f64_lossy(),
            });
        }
    }
    let dx = profile.period / T::from_count(nx);
    let ds = T::one() / T::from_count(nz - 1);
    let x1: Vec<T> = (0..nx).map(|i| dx * T::from_count(i)).collect();
    let mut x2 = Vec::with_capacity(nx * nz);
    for j in 0..nz {
        let s = ds * T::from_count(j);
        for i in 0..nx {
            x2.push(-bottom[i] + nodes.height(i) * s);
        }
    }
    Ok(Mesh {
        nx,
        nz,
        period: profile.period,
        dx,
        ds,
        profile: resampled,
        nodes,
        mid,
        x1,
        x2,
        surface_index: nz - 1,
        bottom_index: 0,
    })
}

/// Lagrangian geometry derived from the displacement η.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryState<T> {
    pub eta: Vec<Vec2<T>>,
    /// Displacement gradient `dη`; the deformation gradient is `Id + dη`.
    pub d_eta: Vec<Mat2<T>>,
    pub xi: Vec<Mat2<T>>,
    pub normal: Vec<Vec2<T>>,
    pub cal_n: Vec<Vec2<T>>,
    pub phi: Vec<T>,
}

impl<T: Scalar> GeometryState<T> {
    pub fn initial(mesh: &Mesh<T>) -> Self {
        let n = mesh.n_nodes();
        let normal = surface_normal(&mesh.profile);
        Self {
            eta: vec![tensor::zero2(); n],
            d_eta: vec![tensor::zero_mat(); n],
            xi: vec![tensor::zero_mat(); n],
            cal_n: normal.clone(),
            normal,
            phi: vec![T::zero(); mesh.nx],
        }
    }

    pub fn from_eta(mesh: &Mesh<T>, eta: Vec<Vec2<T>>) -> Result<Self> {
        let d_eta = mesh.grad_vector(&eta);
        let xi = xi_from_eta(&d_eta)?;
        let profile = &mesh.profile;
        let normal = surface_normal(profile);
        let eta_s = mesh.surface_trace(&eta);
        let cal_n = cal_normal(profile, &eta_s);
        let phi = phi_from_eta(&eta_s, profile)?;
        Ok(Self {
            eta,
            d_eta,
            xi,
            normal,
            cal_n,
            phi,
        })
    }

    pub fn surface_eta(&self, mesh: &Mesh<T>) -> Vec<Vec2<T>> {
        mesh.surface_trace(&self.eta)
    }
}

/// `ξ = (Id + dη)⁻¹ - Id` by exact nodewise inversion.
pub fn xi_from_eta<T: Scalar>(d_eta: &[Mat2<T>]) -> Result<Vec<Mat2<T>>> {
    let id = tensor::identity::<T>();
    d_eta
        .iter()
        .enumerate()
        .map(|(node, d)| {
            let f = tensor::mat_add(&id, d);
            let det = tensor::det(&f);
            if !(det.abs() >= T::lit(SINGULAR_MAP_TOL)) {
                return Err(SolverError::SingularMap {
                    node,
                    det: det.to_f64_lossy(),
                });
            }
            let inv = tensor::inverse(&f).expect("nonzero determinant");
            Ok([
                [inv[0][0] - T::one(), inv[0][1]],
                [inv[1][0], inv[1][1] - T::one()],
            ])
        })
        .collect()
}

/// Unit upward normal `N = (-ζ', 1)/√(1+ζ'²)`.
pub fn surface_normal<T: Scalar>(profile: &DomainProfile<T>) -> Vec<Vec2<T>> {
    profile
        .zeta_prime()
        .into_iter()
        .map(|z| {
            let r = (T::one() + z * z).sqrt();
            [-z / r, T::one() / r]
        })
        .collect()
}

/// `𝒩 = (N₁ - ∂_T η₂, N₂ + ∂_T η₁)` from the surface trace of η.
pub fn cal_normal<T: Scalar>(profile: &DomainProfile<T>, eta_s: &[Vec2<T>]) -> Vec<Vec2<T>> {
    let normal = surface_normal(profile);
    let e1: Vec<T> = eta_s.iter().map(|e| e[0]).collect();
    let e2: Vec<T> = eta_s.iter().map(|e| e[1]).collect();
    let d1 = profile.d_t(&e1);
    let d2 = profile.d_t(&e2);
    normal
        .iter()
        .zip(d1.iter().zip(&d2))
        .map(|(n, (&a, &b))| [n[0] - b, n[1] + a])
        .collect()
}

/// Surface unknown `Φ = (ζ' + η₂,X₁)/(1 + η₁,X₁) - ζ'`.
pub fn phi_from_eta<T: Scalar>(eta_s: &[Vec2<T>], profile: &DomainProfile<T>) -> Result<Vec<T>> {
    let (d1, d2) = surface_eta_derivatives(eta_s, profile);
    let zp = profile.zeta_prime();
    (0..zp.len())
        .map(|i| {
            let den = T::one() + d1[i];
            if !(den.abs() >= T::lit(FOLDING_TOL)) {
                return Err(SolverError::Folding {
                    node: i,
                    value: den.abs().to_f64_lossy(),
                });
            }
            Ok((zp[i] + d2[i]) / den - zp[i])
        })
        .collect()
}

fn surface_eta_derivatives<T: Scalar>(
    eta_s: &[Vec2<T>],
    profile: &DomainProfile<T>,
) -> (Vec<T>, Vec<T>) {
    let e1: Vec<T> = eta_s.iter().map(|e| e[0]).collect();
    let e2: Vec<T> = eta_s.iter().map(|e| e[1]).collect();
    (profile.d_x1(&e1), profile.d_x1(&e2))
}

/// Curvature vector `H·n` of the moving surface written through Φ.
pub fn curvature_term<T: Scalar>(
    phi: &[T],
    profile: &DomainProfile<T>,
    eta_s: &[Vec2<T>],
) -> Result<Vec<Vec2<T>>> {
    let (d1, d2) = surface_eta_derivatives(eta_s, profile);
    let zp = profile.zeta_prime();
    let n = zp.len();
    let mut w1 = Vec::with_capacity(n);
    let mut w2 = Vec::with_capacity(n);
    for i in 0..n {
        if !(T::one() + d1[i]).is_finite() || (T::one() + d1[i]).abs() < T::lit(FOLDING_TOL) {
            return Err(SolverError::Folding {
                node: i,
                value: (T::one() + d1[i]).abs().to_f64_lossy(),
            });
        }
        let p = phi[i] + zp[i];
        let r = (T::one() + p * p).sqrt();
        w1.push(T::one() / r);
        w2.push(p / r);
    }
    let dw1 = profile.d_t(&w1);
    let dw2 = profile.d_t(&w2);
    Ok((0..n)
        .map(|i| {
            let a = T::one() + d1[i];
            let b = zp[i] + d2[i];
            let pref = (T::one() + zp[i] * zp[i]).sqrt() / (a * a + b * b).sqrt();
            [pref * dw1[i], pref * dw2[i]]
        })
        .collect())
}

/// Tangential derivative `∂_T u` of a surface velocity trace.
pub fn surface_d_t<T: Scalar>(u_s: &[Vec2<T>], profile: &DomainProfile<T>) -> Vec<Vec2<T>> {
    let u1: Vec<T> = u_s.iter().map(|u| u[0]).collect();
    let u2: Vec<T> = u_s.iter().map(|u| u[1]).collect();
    profile
        .d_t(&u1)
        .into_iter()
        .zip(profile.d_t(&u2))
        .map(|(a, b)| [a, b])
        .collect()
}

/// Full surface rate `Φ_t = ∂_T u · 𝒩 / 𝒩₂²`.
pub fn phi_rate<T: Scalar>(
    u_s: &[Vec2<T>],
    cal_n: &[Vec2<T>],
    profile: &DomainProfile<T>,
) -> Result<Vec<T>> {
    let dtu = surface_d_t(u_s, profile);
    dtu.iter()
        .zip(cal_n)
        .enumerate()
        .map(|(i, (d, c))| {
            if !(c[1].abs() >= T::lit(OVERTURN_TOL)) {
                return Err(SolverError::Overturned {
                    node: i,
                    value: c[1].abs().to_f64_lossy(),
                });
            }
            Ok(tensor::dot(d, c) / (c[1] * c[1]))
        })
        .collect()
}

/// Linearized rate `∂_T u · N` used by the φ = Φ/(1+ζ'²) equation.
pub fn phi_rate_linear<T: Scalar>(u_s: &[Vec2<T>], profile: &DomainProfile<T>) -> Vec<T> {
    let normal = surface_normal(profile);
    surface_d_t(u_s, profile)
        .iter()
        .zip(&normal)
        .map(|(d, n)| tensor::dot(d, n))
        .collect()
}

/// Explicit Euler step `η ← η + dt u`, then rebuilds dη, ξ, 𝒩 and Φ.
pub fn advance_eta<T: Scalar>(
    geom: &GeometryState<T>,
    u: &[Vec2<T>],
    dt: T,
    mesh: &Mesh<T>,
) -> Result<GeometryState<T>> {
    if !(dt > T::zero()) {
        return Err(SolverError::InvalidInput("dt must be positive".into()));
    }
    let eta = geom
        .eta
        .iter()
        .zip(u)
        .map(|(e, v)| [e[0] + dt * v[0], e[1] + dt * v[1]])
        .collect();
    GeometryState::from_eta(mesh, eta)
}
