//! Closed-form exponents and asymptotic scales derived from (N, q, a).
//!
//! Everything here is a pure function of the problem parameters plus one
//! external number: the L¹ mass of the radial free-boundary profile, which
//! the shooting solver supplies. No discretization enters this module.

use serde::{Deserialize, Serialize};

use crate::error::{QgError, Result};

/// Mass-critical exponent q* = 2 + 4/N.
pub fn critical_exponent(dim: u32) -> Result<f64> {
    if dim < 1 {
        return Err(QgError::InvalidDimension(dim as i64));
    }
    Ok(2.0 + 4.0 / dim as f64)
}

/// Problem parameters (N, q, a). The single source of truth for all formulas.
///
/// `new` enforces 0 < q <= q*; `supercritical` admits q > q* and exists only
/// for the dilation-divergence probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    dim: u32,
    q: f64,
    a: f64,
}

impl ProblemParams {
    pub fn new(dim: u32, q: f64, a: f64) -> Result<Self> {
        let q_star = critical_exponent(dim)?;
        if !(q > 0.0) || q > q_star + 1e-12 {
            return Err(QgError::InvalidExponent(q));
        }
        Ok(Self { dim, q, a })
    }

    /// Admits q > q*; used only by the dilation-divergence probe.
    pub fn supercritical(dim: u32, q: f64, a: f64) -> Result<Self> {
        critical_exponent(dim)?;
        if !(q > 0.0) {
            return Err(QgError::InvalidExponent(q));
        }
        Ok(Self { dim, q, a })
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn with_a(&self, a: f64) -> Self {
        Self { a, ..*self }
    }

    pub fn with_q(&self, q: f64) -> Result<Self> {
        Self::new(self.dim, q, self.a)
    }

    /// q* = 2 + 4/N, always recomputed from N.
    pub fn q_star(&self) -> f64 {
        2.0 + 4.0 / self.dim as f64
    }

    pub fn is_critical(&self) -> bool {
        (self.q - self.q_star()).abs() < 1e-12
    }

    /// Interpolation exponent theta = 2qN / ((q+2)(N+2)), in (0,1).
    pub fn theta(&self) -> f64 {
        let n = self.dim as f64;
        2.0 * self.q * n / ((self.q + 2.0) * (n + 2.0))
    }
}

/// The constants of the sharp interpolation inequality at (N, q):
/// theta (interpolation exponent), lambda (combinatorial factor),
/// mass_factor = |v_q|_{L1}^{q/(N+2)} and the sharp constant
/// upsilon = lambda * mass_factor.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GnConstants {
    pub theta: f64,
    pub lambda: f64,
    pub mass_factor: f64,
    pub upsilon: f64,
}

impl GnConstants {
    /// Build from the problem parameters and the profile mass |v_q|_{L1}
    /// supplied by the shooting solver.
    pub fn from_profile_mass(params: &ProblemParams, profile_mass: f64) -> Result<Self> {
        if !(profile_mass > 0.0) {
            return Err(QgError::InvalidMass(profile_mass));
        }
        let n = params.dim() as f64;
        let theta = params.theta();
        let lambda = (1.0 - theta) * (theta / (1.0 - theta)).powf(params.q() * n / (2.0 * (n + 2.0)));
        let mass_factor = profile_mass.powf(params.q() / (n + 2.0));
        Ok(Self {
            theta,
            lambda,
            mass_factor,
            upsilon: lambda * mass_factor,
        })
    }
}

/// Existence threshold at q = q*: |v_{q*}|_{L1}^{2/N}. Coincides with the
/// mass factor of `GnConstants` at the critical exponent.
pub fn existence_threshold(dim: u32, critical_profile_mass: f64) -> Result<f64> {
    if dim < 1 {
        return Err(QgError::InvalidDimension(dim as i64));
    }
    if !(critical_profile_mass > 0.0) {
        return Err(QgError::InvalidMass(critical_profile_mass));
    }
    Ok(critical_profile_mass.powf(2.0 / dim as f64))
}

/// Concentration length scale eps_q and its companion t_q = eps_q^{-(N+2)}.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BlowupScale {
    pub eps: f64,
    pub t: f64,
}

/// Base ratio 4aq / (q* lambda_q a_q (q+2)); tends to a/a_{q*} as q -> q*.
fn scale_base(params: &ProblemParams, gn: &GnConstants) -> f64 {
    let q = params.q();
    4.0 * params.a() * q / (params.q_star() * gn.lambda * gn.mass_factor * (q + 2.0))
}

/// Blow-up scale eps_q = base^{-2/(N(q*-q))} together with t_q = eps_q^{-(N+2)}.
/// Requires q < q* and a positive base.
pub fn blowup_scale(params: &ProblemParams, gn: &GnConstants) -> Result<BlowupScale> {
    let q_star = params.q_star();
    if params.q() >= q_star - 1e-14 {
        return Err(QgError::InvalidRegime(format!(
            "blow-up scale needs q < q*, got q = {} with q* = {}",
            params.q(),
            q_star
        )));
    }
    let base = scale_base(params, gn);
    if !(base > 0.0) {
        return Err(QgError::InvalidRegime(format!(
            "blow-up scale base {base} is not positive (a = {})",
            params.a()
        )));
    }
    let n = params.dim() as f64;
    let eps = base.powf(-2.0 / (n * (q_star - params.q())));
    let t = base.powf(q_star / (q_star - params.q()));
    Ok(BlowupScale { eps, t })
}

/// Leading-order minimum energy of the potential-free problem,
/// -(q*-q)/(4q) * t_q. Only meaningful on the supercritical-coupling branch,
/// i.e. when the scale base exceeds 1 (a above the threshold); below that the
/// formula lands on the wrong branch and is rejected.
pub fn energy_asymptote(params: &ProblemParams, gn: &GnConstants) -> Result<f64> {
    let base = scale_base(params, gn);
    if base <= 1.0 {
        return Err(QgError::InvalidRegime(format!(
            "energy asymptote needs scale base > 1, got {base} (a = {} at q = {})",
            params.a(),
            params.q()
        )));
    }
    let scale = blowup_scale(params, gn)?;
    let q_star = params.q_star();
    Ok(-(q_star - params.q()) / (4.0 * params.q()) * scale.t)
}

/// Predicted limit of mu_q * eps_q^{N+2} as q -> q*: exactly -1/N.
pub fn multiplier_scaled_limit(dim: u32) -> Result<f64> {
    if dim < 1 {
        return Err(QgError::InvalidDimension(dim as i64));
    }
    Ok(-1.0 / dim as f64)
}
