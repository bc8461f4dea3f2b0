//! The constrained energy, its exact discrete gradient, the Lagrange
//! multiplier, the density-level auxiliary functional, and the closed-form
//! trial family built from the radial profile.
//!
//! The discrete gradient is the exact derivative of the discrete energy with
//! respect to nodal values in the quadrature-weighted inner product; the
//! quasilinear part is (-Lap_h(u^2)) * u with the same discrete Laplacian as
//! the linear term, so centered finite differences of the energy reproduce
//! the gradient to second order in the probe step.

use crate::constants::ProblemParams;
use crate::error::{QgError, Result};
use crate::field::{neg_laplacian, Geometry, GridField};
use crate::radial_profile::RadialProfile;

use serde::{Deserialize, Serialize};

/// The four terms of the energy, reported separately.
/// total = kinetic + potential + quasilinear - nonlinear, same quadrature.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// 1/2 int |grad u|^2
    pub kinetic: f64,
    /// 1/2 int V u^2 (zero when no potential is supplied)
    pub potential: f64,
    /// 1/4 int |grad(u^2)|^2
    pub quasilinear: f64,
    /// a/(q+2) int |u|^{q+2}
    pub nonlinear: f64,
    pub total: f64,
}

/// Evaluate the energy of `u`; `v_pot` holds nodal potential values, `None`
/// selects the potential-free functional.
pub fn evaluate(u: &GridField, params: &ProblemParams, v_pot: Option<&[f64]>) -> EnergyBreakdown {
    let kinetic = 0.5 * u.dirichlet();
    let potential = match v_pot {
        Some(v) => {
            0.5 * u
                .weights()
                .iter()
                .zip(u.values().iter().zip(v))
                .map(|(w, (ui, vi))| w * vi * ui * ui)
                .sum::<f64>()
        }
        None => 0.0,
    };
    let quasilinear = 0.25 * u.dirichlet_sq();
    let nonlinear = params.a() / (params.q() + 2.0) * u.lp_integral(params.q() + 2.0);
    EnergyBreakdown {
        kinetic,
        potential,
        quasilinear,
        nonlinear,
        total: kinetic + potential + quasilinear - nonlinear,
    }
}

/// Unconstrained L2 gradient of the energy (without the multiplier term):
/// G(u) = Lu + (L u^2) u + V u - a |u|^q u with L the discrete -Laplacian.
/// Dirichlet rows are zeroed; admissible variations vanish there anyway.
pub fn gradient(u: &GridField, params: &ProblemParams, v_pot: Option<&[f64]>) -> Vec<f64> {
    let geom = u.geometry();
    let lin = neg_laplacian(geom, u.weights(), u.values());
    let sq: Vec<f64> = u.values().iter().map(|v| v * v).collect();
    let quas = neg_laplacian(geom, u.weights(), &sq);
    let q = params.q();
    let a = params.a();
    let mut g: Vec<f64> = u
        .values()
        .iter()
        .enumerate()
        .map(|(i, &ui)| {
            let pot = v_pot.map_or(0.0, |v| v[i] * ui);
            lin[i] + quas[i] * ui + pot - a * ui.abs().powf(q) * ui
        })
        .collect();
    for i in geom.dirichlet_nodes() {
        g[i] = 0.0;
    }
    g
}

/// Lagrange multiplier of a unit-mass state:
/// mu = int |grad u|^2 + int |grad u^2|^2 + int V u^2 - a int |u|^{q+2}.
pub fn multiplier(u: &GridField, params: &ProblemParams, v_pot: Option<&[f64]>) -> Result<f64> {
    let drift = (u.mass() - 1.0).abs();
    if drift > 1e-6 {
        return Err(QgError::NotNormalized(drift));
    }
    let pot = v_pot.map_or(0.0, |v| {
        u.weights()
            .iter()
            .zip(u.values().iter().zip(v))
            .map(|(w, (ui, vi))| w * vi * ui * ui)
            .sum::<f64>()
    });
    Ok(u.dirichlet() + u.dirichlet_sq() + pot - params.a() * u.lp_integral(params.q() + 2.0))
}

/// Density-level functional F(rho) = int |grad rho|^2 - N a*/(N+1) int |rho|^{2+2/N}.
/// Nonnegative with zero minimum over unit-L1 densities; its zero-energy
/// minimizers are exactly the rescaled profiles.
pub fn auxiliary_functional(rho: &GridField, dim: u32, a_star: f64) -> f64 {
    let n = dim as f64;
    rho.dirichlet() - n * a_star / (n + 1.0) * rho.lp_integral(2.0 + 2.0 / n)
}

/// Normalized trial state u_tau(x) = tau^{N/2} sqrt(v(tau |x - center|)) / sqrt(|v|_L1)
/// discretized on `geometry`. Unit mass by construction in the continuum.
pub fn trial_family(
    tau: f64,
    profile: &RadialProfile,
    center: f64,
    geometry: Geometry,
) -> Result<GridField> {
    assert!(tau > 0.0, "trial family needs tau > 0");
    let support = profile.radius() / tau;
    let available = match geometry {
        Geometry::Radial { r_max, .. } => {
            if center != 0.0 {
                return Err(QgError::InvalidConfig(
                    "radial trial states must be centered at the origin".into(),
                ));
            }
            r_max
        }
        Geometry::Interval { x_lo, x_hi, .. } => (center - x_lo).min(x_hi - center),
    };
    if support > available {
        return Err(QgError::DomainOverflow {
            needed: support,
            available,
        });
    }
    let n = profile.dim() as f64;
    let amp = tau.powf(n / 2.0) / profile.mass().sqrt();
    GridField::from_fn(geometry, |x| {
        amp * profile.sample(tau * (x - center).abs()).max(0.0).sqrt()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn profile(dim: u32, q: f64) -> RadialProfile {
        let p = ProblemParams::new(dim, q, 1.0).unwrap();
        RadialProfile::solve(&p, 1e-7).unwrap()
    }

    #[test]
    fn breakdown_total_is_exact_sum() {
        let params = ProblemParams::new(1, 4.0, 2.5).unwrap();
        let g = Geometry::symmetric_interval(8.0, 257).unwrap();
        let u = GridField::gaussian(g, 0.3, 1.0).unwrap();
        let v: Vec<f64> = g.coords().iter().map(|x| x * x).collect();
        let e = evaluate(&u, &params, Some(&v));
        assert_eq!(e.total, e.kinetic + e.potential + e.quasilinear - e.nonlinear);
        assert!(e.kinetic >= 0.0 && e.quasilinear >= 0.0 && e.potential >= 0.0);
    }

    #[test]
    fn zero_coupling_energy_is_nonnegative() {
        let params = ProblemParams::new(1, 4.0, 0.0).unwrap();
        let g = Geometry::symmetric_interval(8.0, 257).unwrap();
        let u = GridField::gaussian(g, 0.0, 1.0).unwrap();
        let e = evaluate(&u, &params, None);
        assert!(e.total >= 0.0);
        assert_eq!(e.nonlinear, 0.0);
        assert_eq!(e.potential, 0.0);
    }

    #[test]
    fn energy_decreases_in_coupling() {
        let g = Geometry::symmetric_interval(8.0, 513).unwrap();
        let u = GridField::gaussian(g, 0.0, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for a in [0.0, 1.0, 2.0, 4.0] {
            let params = ProblemParams::new(1, 3.0, a).unwrap();
            let e = evaluate(&u, &params, None).total;
            assert!(e < prev || a == 0.0);
            prev = e;
        }
    }

    #[test]
    fn translation_on_matching_nodes_preserves_energy() {
        let g = Geometry::symmetric_interval(10.0, 1025).unwrap();
        let params = ProblemParams::new(1, 3.0, 1.5).unwrap();
        let u = GridField::gaussian(g, 0.0, 0.8).unwrap();
        let shift = 16.0 * g.spacing();
        let shifted = GridField::gaussian(g, shift, 0.8).unwrap();
        let e0 = evaluate(&u, &params, None).total;
        let e1 = evaluate(&shifted, &params, None).total;
        assert_relative_eq!(e0, e1, max_relative = 1e-10);
    }

    #[test]
    fn gradient_of_zero_field_is_zero() {
        let params = ProblemParams::new(2, 3.0, 1.0).unwrap();
        let g = Geometry::radial(2, 6.0, 129).unwrap();
        let u = GridField::zeros(g).unwrap();
        for gi in gradient(&u, &params, None) {
            assert_eq!(gi, 0.0);
        }
    }

    /// Centered finite differences of the energy along random directions must
    /// reproduce the gradient pairing with second-order accuracy in the step.
    #[test]
    fn gradient_matches_energy_differences() {
        let mut rng = StdRng::seed_from_u64(7);
        let g = Geometry::symmetric_interval(7.0, 129).unwrap();
        let params = ProblemParams::new(1, 3.5, 1.7).unwrap();
        let u = GridField::gaussian(g, 0.2, 1.1).unwrap();
        let v: Vec<f64> = g.coords().iter().map(|x| 0.5 * x * x).collect();
        let grad = gradient(&u, &params, Some(&v));
        for _ in 0..5 {
            let phi: Vec<f64> = (0..g.nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let phi_field = GridField::new(g, phi).unwrap();
            let pairing: f64 = u
                .weights()
                .iter()
                .zip(grad.iter().zip(phi_field.values()))
                .map(|(w, (gi, pi))| w * gi * pi)
                .sum();
            let mut errs = Vec::new();
            for t in [1e-3, 5e-4, 2.5e-4] {
                let plus: Vec<f64> = u
                    .values()
                    .iter()
                    .zip(phi_field.values())
                    .map(|(a, b)| a + t * b)
                    .collect();
                let minus: Vec<f64> = u
                    .values()
                    .iter()
                    .zip(phi_field.values())
                    .map(|(a, b)| a - t * b)
                    .collect();
                let ep = evaluate(&GridField::new(g, plus).unwrap(), &params, Some(&v)).total;
                let em = evaluate(&GridField::new(g, minus).unwrap(), &params, Some(&v)).total;
                errs.push(((ep - em) / (2.0 * t) - pairing).abs());
            }
            let order = (errs[0] / errs[1]).log2().min((errs[1] / errs[2]).log2());
            assert!(
                order > 1.9 || errs[2] < 1e-12 * pairing.abs().max(1.0),
                "order {order}, errors {errs:?}"
            );
        }
    }

    #[test]
    fn multiplier_is_stationarity_pairing() {
        let g = Geometry::symmetric_interval(9.0, 513).unwrap();
        let params = ProblemParams::new(1, 4.0, 1.3).unwrap();
        let mut u = GridField::gaussian(g, 0.0, 1.2).unwrap();
        u.normalize_mass().unwrap();
        let mu = multiplier(&u, &params, None).unwrap();
        let grad = gradient(&u, &params, None);
        let pairing: f64 = u
            .weights()
            .iter()
            .zip(grad.iter().zip(u.values()))
            .map(|(w, (gi, ui))| w * gi * ui)
            .sum();
        assert_relative_eq!(mu, pairing, max_relative = 1e-12);
        // a = 0 and no potential: mu is a sum of squares
        let params0 = ProblemParams::new(1, 4.0, 0.0).unwrap();
        assert!(multiplier(&u, &params0, None).unwrap() >= 0.0);
    }

    #[test]
    fn multiplier_rejects_unnormalized_states() {
        let g = Geometry::symmetric_interval(9.0, 257).unwrap();
        let params = ProblemParams::new(1, 4.0, 1.0).unwrap();
        let u = GridField::gaussian(g, 0.0, 2.0).unwrap();
        let scaled = GridField::new(g, u.values().iter().map(|v| 2.0 * v).collect()).unwrap();
        assert!(matches!(
            multiplier(&scaled, &params, None),
            Err(QgError::NotNormalized(_))
        ));
    }

    #[test]
    fn trial_family_matches_closed_forms_at_critical_exponent() {
        let prof = profile(1, 6.0);
        let m = prof.mass();
        let g = Geometry::symmetric_interval(prof.radius() * 1.2, 32769).unwrap();
        for tau in [1.0, 2.0] {
            let u = trial_family(tau, &prof, 0.0, g).unwrap();
            assert_relative_eq!(u.mass(), 1.0, max_relative = 2e-4);
            // quasilinear: N tau^{N+2} / m with N = 1
            assert_relative_eq!(u.dirichlet_sq(), tau.powi(3) / m, max_relative = 2e-4);
            // power integral: (N+1) tau^{N+2} / m^{1+2/N}
            assert_relative_eq!(
                u.lp_integral(8.0),
                2.0 * tau.powi(3) / m.powi(3),
                max_relative = 2e-4
            );
        }
    }

    #[test]
    fn trial_family_quasilinear_minus_nonlinear_identity() {
        // at q = q*: quasilinear - nonlinear = (N tau^{N+2} / (4 m)) (1 - a/a*)
        let prof = profile(1, 6.0);
        let m = prof.mass();
        let a_star = m * m;
        let params = ProblemParams::new(1, 6.0, 2.0 * a_star).unwrap();
        let g = Geometry::symmetric_interval(prof.radius() * 1.2, 32769).unwrap();
        for tau in [1.0, 2.0] {
            let u = trial_family(tau, &prof, 0.0, g).unwrap();
            let e = evaluate(&u, &params, None);
            let predicted = tau.powi(3) / (4.0 * m) * (1.0 - 2.0);
            assert_relative_eq!(e.quasilinear - e.nonlinear, predicted, max_relative = 1e-3);
        }
    }

    #[test]
    fn trial_family_overflow() {
        let prof = profile(1, 6.0);
        let g = Geometry::symmetric_interval(prof.radius() * 0.3, 257).unwrap();
        assert!(matches!(
            trial_family(1.0, &prof, 0.0, g),
            Err(QgError::DomainOverflow { .. })
        ));
        // tau large enough shrinks the support into range
        assert!(trial_family(8.0, &prof, 0.0, g).is_ok());
    }

    #[test]
    fn supercritical_dilation_energy_diverges() {
        // q > q*: E(u^sigma) -> -infinity as sigma grows
        let params = ProblemParams::supercritical(1, 7.0, 25.0).unwrap();
        let n = 4097;
        let g = Geometry::symmetric_interval(10.0, n).unwrap();
        let mut u = GridField::gaussian(g, 0.0, 1.0).unwrap();
        u.normalize_mass().unwrap();
        let mut prev = evaluate(&u, &params, None).total;
        let mut last = prev;
        for sigma in [2.0, 4.0, 8.0] {
            let target = Geometry::symmetric_interval(10.0 / sigma, n).unwrap();
            let w = u.rescale_onto(sigma, 0.0, target).unwrap();
            last = evaluate(&w, &params, None).total;
            assert!(last < prev, "sigma {sigma}: {last} >= {prev}");
            prev = last;
        }
        assert!(last < -1e2);
    }

    #[test]
    fn auxiliary_functional_positive_below_unit_mass() {
        // densities with L1 mass c < 1 give F >= (1 - c^{2/N}) |grad rho|^2 > 0
        let prof = profile(1, 6.0);
        let a_star = prof.mass().powi(2);
        let g = Geometry::symmetric_interval(10.0, 1025).unwrap();
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..10 {
            let c: f64 = rng.gen_range(0.05..0.95);
            let width: f64 = rng.gen_range(0.5..2.0);
            let base = GridField::gaussian(g, 0.0, width).unwrap();
            let l1 = base.lp_integral(1.0);
            let rho =
                GridField::new(g, base.values().iter().map(|v| c * v / l1).collect()).unwrap();
            let f = auxiliary_functional(&rho, 1, a_star);
            let bound = (1.0 - c.powf(2.0)) * rho.dirichlet();
            assert!(f >= 0.9 * bound && f > 0.0, "c = {c}: F = {f}, bound = {bound}");
        }
    }
}
