//! Free-boundary radial profile solver.
//!
//! Computes the unique nonnegative radial solution of
//!
//!   v'' + (N-1)/r v' = 1 - v^{q/2},  v'(0) = 0,
//!
//! that vanishes together with its derivative at some finite radius R. The
//! center value alpha = v(0) is the shooting parameter: too large and v
//! crosses zero with negative slope, too small and v' turns around at a
//! positive value. Bisection on that event ordering pins alpha; the free
//! radius R is the turnaround radius of the converged lower trajectory.

use std::fmt::Write as _;
use std::path::Path;

use crate::constants::{GnConstants, ProblemParams};
use crate::error::{QgError, Result};
use crate::field::{Geometry, GridField};

#[derive(Debug, Clone)]
pub struct ProfileOpts {
    /// Boundary residual tolerance relative to the peak.
    pub tol: f64,
    /// Output mesh nodes on [0, R].
    pub nodes: usize,
    /// Base integration step for shooting.
    pub step: f64,
    /// Abort radius if no event fires.
    pub r_cap: f64,
}

impl Default for ProfileOpts {
    fn default() -> Self {
        // The double-zero boundary amplifies center-value roundoff by ~1e8,
        // so residuals below ~1e-8 * peak are not reachable by bisection.
        Self {
            tol: 1e-7,
            nodes: 4097,
            step: 2.5e-4,
            r_cap: 60.0,
        }
    }
}

/// The solved profile with its integrals, on a uniform mesh over [0, R].
#[derive(Debug, Clone)]
pub struct RadialProfile {
    q: f64,
    dim: u32,
    radius: f64,
    peak: f64,
    mass: f64,
    dirichlet: f64,
    boundary_value: f64,
    boundary_slope: f64,
    field: GridField,
}

impl RadialProfile {
    pub fn solve(params: &ProblemParams, tol: f64) -> Result<Self> {
        let opts = ProfileOpts {
            tol,
            ..ProfileOpts::default()
        };
        Self::solve_with(params, &opts)
    }

    pub fn solve_with(params: &ProblemParams, opts: &ProfileOpts) -> Result<Self> {
        if !(params.q() > 1.0) {
            return Err(QgError::InvalidExponent(params.q()));
        }
        if !(opts.tol > 0.0) {
            return Err(QgError::InvalidConfig(format!("tol must be > 0, got {}", opts.tol)));
        }
        let shooter = Shooter {
            dim: params.dim(),
            half_q: params.q() / 2.0,
            step: opts.step,
            r_cap: opts.r_cap,
        };

        // alpha = 1 cannot decay (the forcing wins at the center); the upper
        // end is a safe multiple of the 1-D double-zero value, grown as
        // needed for the extra damping in higher dimensions.
        let one_d_peak = ((params.q() + 2.0) / 2.0).powf(2.0 / params.q());
        let mut lo = 1.0;
        let mut hi = 4.0 * one_d_peak;
        let mut lo_shot = match shooter.classify(lo)? {
            Shot::TooSmall(ev) => ev,
            Shot::TooLarge(_) => {
                return Err(QgError::NoBracket {
                    lo,
                    hi,
                    detail: "lower trajectory crossed zero; event ordering inverted".into(),
                })
            }
        };
        let mut doublings = 0;
        loop {
            match shooter.classify(hi)? {
                Shot::TooLarge(_) => break,
                Shot::TooSmall(ev) => {
                    lo = hi;
                    lo_shot = ev;
                    hi *= 2.0;
                    doublings += 1;
                    if doublings > 16 {
                        return Err(QgError::NoBracket {
                            lo: 1.0,
                            hi,
                            detail: "no zero-crossing trajectory found".into(),
                        });
                    }
                }
            }
        }

        for _ in 0..200 {
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            match shooter.classify(mid)? {
                Shot::TooSmall(ev) => {
                    lo = mid;
                    lo_shot = ev;
                }
                Shot::TooLarge(_) => hi = mid,
            }
        }

        let peak = lo;
        let radius = lo_shot.radius;
        let (values, boundary_value, boundary_slope) =
            shooter.resample(peak, radius, opts.nodes)?;
        let tol_v = opts.tol * peak;
        let tol_s = opts.tol * peak / radius;
        if boundary_value.abs() > tol_v || boundary_slope.abs() > tol_s {
            return Err(QgError::IntegrationError(format!(
                "boundary residuals v(R) = {boundary_value:e}, v'(R) = {boundary_slope:e} exceed tol {:e}",
                opts.tol
            )));
        }

        let geometry = Geometry::radial(params.dim(), radius, opts.nodes)?;
        let field = GridField::new(geometry, values)?;
        let mass = field.lp_integral(1.0);
        let dirichlet = field.dirichlet();
        Ok(Self {
            q: params.q(),
            dim: params.dim(),
            radius,
            peak,
            mass,
            dirichlet,
            boundary_value,
            boundary_slope,
            field,
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    /// Support radius R.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Center value v(0).
    pub fn peak(&self) -> f64 {
        self.peak
    }

    /// L1 mass over R^N.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Integral of |grad v|^2 over R^N.
    pub fn dirichlet(&self) -> f64 {
        self.dirichlet
    }

    /// Integral of |grad sqrt(v)|^2 over R^N; the kinetic coefficient of the
    /// normalized trial family built from this profile.
    pub fn sqrt_dirichlet(&self) -> f64 {
        let root: Vec<f64> = self.field.values().iter().map(|v| v.sqrt()).collect();
        let sqrt_field = GridField::new(*self.field.geometry(), root)
            .expect("profile mesh is valid");
        sqrt_field.dirichlet()
    }

    pub fn boundary_residuals(&self) -> (f64, f64) {
        (self.boundary_value, self.boundary_slope)
    }

    pub fn field(&self) -> &GridField {
        &self.field
    }

    pub fn r_grid(&self) -> Vec<f64> {
        self.field.geometry().coords()
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    /// Linear interpolation of v at radius r (zero beyond R).
    pub fn sample(&self, r: f64) -> f64 {
        self.field.sample(r)
    }

    /// Relative residuals of the two integral identities tying the
    /// (q+2)/2-power integral and the Dirichlet energy to the mass:
    /// int v^{(q+2)/2} = mass/(1-theta) and int |grad v|^2 = theta mass/(1-theta).
    pub fn pohozaev_residuals(&self) -> (f64, f64) {
        let theta = theta_of(self.dim, self.q);
        let target_power = self.mass / (1.0 - theta);
        let target_dirichlet = theta * self.mass / (1.0 - theta);
        let power = self.field.lp_integral((self.q + 2.0) / 2.0);
        (
            (power - target_power).abs() / target_power,
            (self.dirichlet - target_dirichlet).abs() / target_dirichlet,
        )
    }

    /// LHS/RHS of the sharp interpolation inequality evaluated at v itself;
    /// equals 1 in the continuum.
    pub fn gn_equality_ratio(&self, gn: &GnConstants) -> f64 {
        gn_ratio(&self.field, self.q, gn)
    }

    /// Two-column CSV with the profile header.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# N={} q={} R={} mass={}",
            self.dim, self.q, self.radius, self.mass
        );
        s.push_str("r,v\n");
        let h = self.field.geometry().spacing();
        for (i, v) in self.field.values().iter().enumerate() {
            let _ = writeln!(s, "{},{}", i as f64 * h, v);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn theta_of(dim: u32, q: f64) -> f64 {
    let n = dim as f64;
    2.0 * q * n / ((q + 2.0) * (n + 2.0))
}

/// LHS/RHS of the sharp interpolation inequality for an arbitrary field u:
/// int |u|^{(q+2)/2} versus upsilon^{-1} (int |grad u|^2)^{(q+2)theta/4} |u|_{L1}^{(q+2)(1-theta)/2}.
pub fn gn_ratio(u: &GridField, q: f64, gn: &GnConstants) -> f64 {
    let lhs = u.lp_integral((q + 2.0) / 2.0);
    let grad = u.dirichlet();
    let l1 = u.lp_integral(1.0);
    let rhs = grad.powf((q + 2.0) * gn.theta / 4.0) * l1.powf((q + 2.0) * (1.0 - gn.theta) / 2.0)
        / gn.upsilon;
    lhs / rhs
}

enum Shot {
    /// v' turned around at positive v: center value too small.
    TooSmall(Event),
    /// v crossed zero with negative slope: center value too large.
    TooLarge(#[allow(dead_code)] Event),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    radius: f64,
    /// v at the event (turnaround minimum; 0 for crossings).
    #[allow(dead_code)]
    value: f64,
    /// v' at the event (crossing slope; 0 for turnarounds).
    #[allow(dead_code)]
    slope: f64,
}

struct Shooter {
    dim: u32,
    half_q: f64,
    step: f64,
    r_cap: f64,
}

impl Shooter {
    fn power(&self, v: f64) -> f64 {
        if v <= 0.0 {
            0.0
        } else {
            v.powf(self.half_q)
        }
    }

    /// Right-hand side of the first-order system (v, s).
    fn rhs(&self, r: f64, v: f64, s: f64) -> (f64, f64) {
        let damping = if self.dim > 1 {
            (self.dim - 1) as f64 * s / r
        } else {
            0.0
        };
        (s, 1.0 - self.power(v) - damping)
    }

    fn rk4_step(&self, r: f64, v: f64, s: f64, h: f64) -> (f64, f64) {
        let (k1v, k1s) = self.rhs(r, v, s);
        let (k2v, k2s) = self.rhs(r + 0.5 * h, v + 0.5 * h * k1v, s + 0.5 * h * k1s);
        let (k3v, k3s) = self.rhs(r + 0.5 * h, v + 0.5 * h * k2v, s + 0.5 * h * k2s);
        let (k4v, k4s) = self.rhs(r + h, v + h * k3v, s + h * k3s);
        (
            v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
            s + h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s),
        )
    }

    /// Series start around the regular singular point r = 0:
    /// v = alpha + c2 r^2 + c4 r^4 with 2N c2 = 1 - alpha^{q/2}.
    fn series_start(&self, alpha: f64, r: f64) -> (f64, f64) {
        let n = self.dim as f64;
        let c2 = (1.0 - self.power(alpha)) / (2.0 * n);
        let c4 = if alpha > 0.0 {
            -self.half_q * alpha.powf(self.half_q - 1.0) * c2 / (4.0 * n + 8.0)
        } else {
            0.0
        };
        let r2 = r * r;
        (alpha + c2 * r2 + c4 * r2 * r2, 2.0 * c2 * r + 4.0 * c4 * r2 * r)
    }

    /// Integrate from the center until v crosses zero or v' turns around.
    fn classify(&self, alpha: f64) -> Result<Shot> {
        let h = self.step;
        let (mut v, mut s) = self.series_start(alpha, h);
        let mut r = h;
        if s >= 0.0 {
            // no decay at all: the forcing dominates from the start
            return Ok(Shot::TooSmall(Event { radius: r, value: v, slope: s }));
        }
        loop {
            if r > self.r_cap {
                return Err(QgError::IntegrationError(format!(
                    "no event before r = {} for alpha = {alpha}",
                    self.r_cap
                )));
            }
            let (v1, s1) = self.rk4_step(r, v, s, h);
            let r1 = r + h;
            let crossed = v > 0.0 && v1 <= 0.0;
            let turned = s < 0.0 && s1 >= 0.0;
            if crossed || turned {
                let cross_ev = crossed.then(|| self.refine_value_root(r, v, s, r1, v1, s1));
                let turn_ev = turned.then(|| self.refine_slope_root(r, v, s, r1, v1, s1));
                return Ok(match (cross_ev, turn_ev) {
                    (Some(c), Some(t)) if t.radius < c.radius => Shot::TooSmall(t),
                    (Some(c), _) => Shot::TooLarge(c),
                    (None, Some(t)) => Shot::TooSmall(t),
                    (None, None) => unreachable!(),
                });
            }
            r = r1;
            v = v1;
            s = s1;
        }
    }

    /// Root of v on [r0, r1] from cubic Hermite interpolation.
    fn refine_value_root(&self, r0: f64, v0: f64, s0: f64, r1: f64, v1: f64, s1: f64) -> Event {
        let h = r1 - r0;
        let t = hermite_root(v0, s0 * h, v1, s1 * h, v0 / (v0 - v1));
        let (value, d) = hermite_eval(v0, s0 * h, v1, s1 * h, t);
        let _ = value; // root: value ~ 0 by construction
        Event {
            radius: r0 + t * h,
            value: 0.0,
            slope: d / h,
        }
    }

    /// Root of s on [r0, r1]; the slope derivative comes from the ODE itself.
    fn refine_slope_root(&self, r0: f64, v0: f64, s0: f64, r1: f64, v1: f64, s1: f64) -> Event {
        let h = r1 - r0;
        let ds0 = self.rhs(r0, v0, s0).1;
        let ds1 = self.rhs(r1, v1, s1).1;
        let t = hermite_root(s0, ds0 * h, s1, ds1 * h, s0 / (s0 - s1));
        let (value, _) = hermite_eval(v0, s0 * h, v1, s1 * h, t);
        Event {
            radius: r0 + t * h,
            value,
            slope: 0.0,
        }
    }

    /// Re-integrate at the converged center value onto a uniform mesh over
    /// [0, radius]; returns clamped values plus the raw end residuals.
    fn resample(&self, alpha: f64, radius: f64, nodes: usize) -> Result<(Vec<f64>, f64, f64)> {
        let cell = radius / (nodes - 1) as f64;
        let substeps = (cell / self.step).ceil().max(1.0) as usize;
        let h = cell / substeps as f64;
        let mut values = Vec::with_capacity(nodes);
        values.push(alpha);
        let (mut v, mut s) = self.series_start(alpha, h);
        let mut r = h;
        let mut sub = 1;
        while values.len() < nodes {
            if sub == substeps {
                values.push(v.max(0.0));
                sub = 0;
            }
            if values.len() == nodes {
                break;
            }
            let (v1, s1) = self.rk4_step(r, v, s, h);
            r += h;
            v = v1;
            s = s1;
            sub += 1;
            if !v.is_finite() || !s.is_finite() {
                return Err(QgError::IntegrationError(format!(
                    "non-finite state at r = {r} during resampling"
                )));
            }
        }
        Ok((values, v, s))
    }
}

/// Cubic Hermite basis evaluation: returns (H(t), H'(t)) where the data are
/// endpoint values f0, f1 and scaled endpoint slopes m0 = f'(0) h, m1 = f'(1) h.
fn hermite_eval(f0: f64, m0: f64, f1: f64, m1: f64, t: f64) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let value = f0 * (2.0 * t3 - 3.0 * t2 + 1.0)
        + m0 * (t3 - 2.0 * t2 + t)
        + f1 * (-2.0 * t3 + 3.0 * t2)
        + m1 * (t3 - t2);
    let deriv = f0 * (6.0 * t2 - 6.0 * t)
        + m0 * (3.0 * t2 - 4.0 * t + 1.0)
        + f1 * (-6.0 * t2 + 6.0 * t)
        + m1 * (3.0 * t2 - 2.0 * t);
    (value, deriv)
}

/// Newton iterations for a root of the cubic Hermite interpolant on [0, 1].
fn hermite_root(f0: f64, m0: f64, f1: f64, m1: f64, seed: f64) -> f64 {
    let mut t = seed.clamp(0.0, 1.0);
    for _ in 0..8 {
        let (value, deriv) = hermite_eval(f0, m0, f1, m1, t);
        if deriv == 0.0 {
            break;
        }
        let next = (t - value / deriv).clamp(0.0, 1.0);
        if (next - t).abs() < 1e-15 {
            return next;
        }
        t = next;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn solve(dim: u32, q: f64) -> RadialProfile {
        let params = ProblemParams::new(dim, q, 1.0).unwrap();
        RadialProfile::solve(&params, 1e-7).unwrap()
    }

    #[test]
    fn one_d_peak_matches_first_integral() {
        // in 1-D the double-zero condition fixes v(0) = ((q+2)/2)^{2/q}
        for q in [6.0, 5.0, 3.0] {
            let p = solve(1, q);
            let expected = ((q + 2.0) / 2.0).powf(2.0 / q);
            assert_relative_eq!(p.peak(), expected, max_relative = 5e-9);
        }
    }

    #[test]
    fn profile_decreases_and_vanishes_at_boundary() {
        for (dim, q) in [(1u32, 6.0), (2, 4.0), (3, 2.5)] {
            let p = solve(dim, q);
            let v = p.values();
            assert_eq!(v[0], p.peak());
            for i in 1..v.len() - 1 {
                assert!(
                    v[i] < v[i - 1] || (v[i] == 0.0 && v[i - 1] == 0.0),
                    "not decreasing at node {i} for (N, q) = ({dim}, {q})"
                );
            }
            let (bv, bs) = p.boundary_residuals();
            assert!(bv.abs() <= 1e-7 * p.peak());
            assert!(bs.abs() <= 1e-7 * p.peak() / p.radius());
            assert!(p.mass() > 0.0 && p.dirichlet() > 0.0);
        }
    }

    #[test]
    fn solve_is_reproducible() {
        let a = solve(2, 4.0);
        let b = solve(2, 4.0);
        assert!((a.peak() - b.peak()).abs() <= 1e-10 * a.peak());
        assert_eq!(a.radius(), b.radius());
    }

    #[test]
    fn critical_pohozaev_ratios() {
        // at q = q*: dirichlet/mass = N and power-integral/mass = N+1
        for (dim, q_star) in [(1u32, 6.0), (2, 4.0)] {
            let p = solve(dim, q_star);
            assert_relative_eq!(p.dirichlet() / p.mass(), dim as f64, max_relative = 1e-5);
            let power = p.field().lp_integral((q_star + 2.0) / 2.0);
            assert_relative_eq!(power / p.mass(), dim as f64 + 1.0, max_relative = 1e-5);
            let (r1, r2) = p.pohozaev_residuals();
            assert!(r1 < 1e-5 && r2 < 1e-5, "residuals ({r1:e}, {r2:e})");
        }
    }

    #[test]
    fn gn_ratio_is_one_at_optimizer() {
        let params = ProblemParams::new(1, 6.0, 1.0).unwrap();
        let p = RadialProfile::solve(&params, 1e-7).unwrap();
        let gn = GnConstants::from_profile_mass(&params, p.mass()).unwrap();
        let ratio = p.gn_equality_ratio(&gn);
        let h = p.field().geometry().spacing();
        assert!((ratio - 1.0).abs() <= 5.0 * h * h + 1e-9, "ratio = {ratio}");
    }

    #[test]
    fn gn_ratio_is_dilation_invariant() {
        // resample v(2r) on a half mesh: the discrete sums scale exactly
        let params = ProblemParams::new(1, 6.0, 1.0).unwrap();
        let p = RadialProfile::solve(&params, 1e-7).unwrap();
        let gn = GnConstants::from_profile_mass(&params, p.mass()).unwrap();
        let n = p.values().len();
        let geometry = Geometry::radial(1, p.radius() / 2.0, n).unwrap();
        let dilated = GridField::new(geometry, p.values().to_vec()).unwrap();
        let r0 = gn_ratio(p.field(), 6.0, &gn);
        let r1 = gn_ratio(&dilated, 6.0, &gn);
        assert_relative_eq!(r0, r1, max_relative = 1e-10);
    }

    #[test]
    fn gn_ratio_below_one_off_optimizer() {
        let params = ProblemParams::new(1, 6.0, 1.0).unwrap();
        let p = RadialProfile::solve(&params, 1e-7).unwrap();
        let gn = GnConstants::from_profile_mass(&params, p.mass()).unwrap();
        let g = Geometry::radial(1, 8.0, 2049).unwrap();
        let bump = GridField::gaussian(g, 0.0, 1.0).unwrap();
        let ratio = gn_ratio(&bump, 6.0, &gn);
        assert!(ratio < 1.0, "gaussian should not be optimal, got {ratio}");
    }

    #[test]
    fn rejects_subunit_exponent() {
        let params = ProblemParams::new(1, 0.9, 1.0).unwrap();
        assert!(matches!(
            RadialProfile::solve(&params, 1e-7),
            Err(QgError::InvalidExponent(_))
        ));
    }

    #[test]
    fn csv_has_pinned_header() {
        let p = solve(1, 6.0);
        let csv = p.to_csv();
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("# N=1 q=6 R="));
        assert!(header.contains(" mass="));
        assert_eq!(lines.next().unwrap(), "r,v");
    }
}
