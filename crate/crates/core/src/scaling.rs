//! Physical to dimensionless parameters and fields.

use crate::error::{Result, SolverError};
use crate::scalar::Scalar;
use crate::tensor::{Sym, Vec2};

/// Dimensional inputs in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams<T> {
    pub rho: T,
    pub mu_sol: T,
    pub mu_pol: T,
    pub lambda: T,
    pub g_tilde: T,
    pub alpha_tilde: T,
    pub p_atm: T,
    pub length: T,
    pub u0: T,
}

/// Dimensionless groups of the scaled system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionlessParams<T> {
    pub re: T,
    pub we: T,
    pub eps: T,
    pub alpha: T,
    pub g0: T,
    /// Johnson–Segalman slip parameter.
    pub a: T,
}

impl<T: Scalar> PhysicalParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho", self.rho),
            ("g_tilde", self.g_tilde),
            ("alpha_tilde", self.alpha_tilde),
            ("P_atm", self.p_atm),
            ("L", self.length),
            ("U0", self.u0),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) {
                return Err(SolverError::InvalidInput(format!("{name} must be > 0")));
            }
        }
        if !(self.mu_pol >= T::zero()) || !(self.lambda >= T::zero()) || !(self.mu_sol >= T::zero()) {
            return Err(SolverError::InvalidInput(
                "viscosities and relaxation time must be >= 0".into(),
            ));
        }
        if !(self.mu_sol + self.mu_pol > T::zero()) {
            return Err(SolverError::InvalidInput(
                "mu_sol + mu_pol must be > 0".into(),
            ));
        }
        Ok(())
    }

    fn mu(&self) -> T {
        self.mu_sol + self.mu_pol
    }

    /// Stress scale `(μ_sol + μ_pol) U₀ / L`.
    pub fn stress_scale(&self) -> T {
        self.mu() * self.u0 / self.length
    }
}

impl<T: Scalar> DimensionlessParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.re > T::zero()) {
            return Err(SolverError::InvalidInput("Re must be > 0".into()));
        }
        if !(self.we >= T::zero()) {
            return Err(SolverError::InvalidInput("We must be >= 0".into()));
        }
        if !(self.eps >= T::zero() && self.eps < T::one()) {
            return Err(SolverError::InvalidInput(
                "eps must lie in [0, 1); eps = 1 loses the solvent regularization".into(),
            ));
        }
        if !(self.a >= -T::one() && self.a <= T::one()) {
            return Err(SolverError::InvalidInput("a must lie in [-1, 1]".into()));
        }
        if !(self.alpha >= T::zero()) || !(self.g0 >= T::zero()) {
            return Err(SolverError::InvalidInput("alpha and g0 must be >= 0".into()));
        }
        Ok(())
    }
}

/// Re = ρLU₀/μ, We = λU₀/L, ε = μ_pol/μ, α = α̃/(U₀μ), g₀ = ρg̃L²/(μU₀)
/// with μ = μ_sol + μ_pol. The slip parameter is passed through.
pub fn nondimensionalize<T: Scalar>(p: &PhysicalParams<T>, a: T) -> Result<DimensionlessParams<T>> {
    p.validate()?;
    let mu = p.mu();
    let out = DimensionlessParams {
        re: p.rho * p.length * p.u0 / mu,
        we: p.lambda * p.u0 / p.length,
        eps: p.mu_pol / mu,
        alpha: p.alpha_tilde / (p.u0 * mu),
        g0: p.rho * p.g_tilde * p.length * p.length / (mu * p.u0),
        a,
    };
    out.validate()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledFields<T> {
    pub v: Vec<Vec2<T>>,
    pub p: Vec<T>,
    pub tau: Vec<Sym<T>>,
}

/// Scales physical samples. `x2_phys` is the physical height (m) of each sample;
/// the dimensionless pressure excludes atmosphere and hydrostatic head.
pub fn scale_fields<T: Scalar>(
    v_phys: &[Vec2<T>],
    p_phys: &[T],
    tau_phys: &[Sym<T>],
    x2_phys: &[T],
    params: &PhysicalParams<T>,
) -> Result<ScaledFields<T>> {
    params.validate()?;
    if p_phys.len() != x2_phys.len() {
        return Err(SolverError::InvalidInput(
            "pressure and coordinate sample counts differ".into(),
        ));
    }
    let sc = params.stress_scale();
    let head = params.rho * params.g_tilde;
    Ok(ScaledFields {
        v: v_phys
            .iter()
            .map(|v| [v[0] / params.u0, v[1] / params.u0])
            .collect(),
        p: p_phys
            .iter()
            .zip(x2_phys)
            .map(|(&p, &x2)| (p - params.p_atm + head * x2) / sc)
            .collect(),
        tau: tau_phys
            .iter()
            .map(|t| [t[0] / sc, t[1] / sc, t[2] / sc])
            .collect(),
    })
}

/// Inverse of [`scale_fields`].
pub fn unscale_fields<T: Scalar>(
    scaled: &ScaledFields<T>,
    x2_phys: &[T],
    params: &PhysicalParams<T>,
) -> Result<ScaledFields<T>> {
    params.validate()?;
    if scaled.p.len() != x2_phys.len() {
        return Err(SolverError::InvalidInput(
            "pressure and coordinate sample counts differ".into(),
        ));
    }
    let sc = params.stress_scale();
    let head = params.rho * params.g_tilde;
    Ok(ScaledFields {
        v: scaled
            .v
            .iter()
            .map(|v| [v[0] * params.u0, v[1] * params.u0])
            .collect(),
        p: scaled
            .p
            .iter()
            .zip(x2_phys)
            .map(|(&p, &x2)| p * sc + params.p_atm - head * x2)
            .collect(),
        tau: scaled
            .tau
            .iter()
            .map(|t| [t[0] * sc, t[1] * sc, t[2] * sc])
            .collect(),
    })
}
