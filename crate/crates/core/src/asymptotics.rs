//! Sweeps in q toward the critical exponent and regime probes.
//!
//! Blow-up sweeps (coupling above the threshold) minimize the potential-free
//! energy on meshes that shrink with the predicted scale eps_q, warm-starting
//! each member from the previous minimizer rescaled to the new mesh, and
//! compare the measured minimum, integral ratios, multiplier, and rescaled
//! profile against their predicted limits. Compact sweeps (coupling below
//! the threshold) run on a fixed mesh and track the Cauchy behavior of the
//! minima and minimizers. The nonexistence probe and the threshold bisection
//! quantify the existence boundary at q = q*.

use crate::constants::{blowup_scale, energy_asymptote, GnConstants, ProblemParams};
use crate::energy::{self, trial_family};
use crate::error::{QgError, Result};
use crate::field::{Geometry, GridField};
use crate::minimizer::{minimize, InitSpec, MinimizeOpts};
use crate::radial_profile::RadialProfile;

use serde::{Deserialize, Serialize};

/// Per-q diagnostics of a sweep toward q*. Fields that only make sense in
/// blow-up mode (scales, ratios, rescaled-profile distance) are NaN in
/// compact mode.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepRecord {
    pub q: f64,
    pub eps_q: f64,
    pub t_q: f64,
    /// Measured minimum energy.
    pub d_numeric: f64,
    /// Leading-order predicted minimum, -(q*-q)/(4q) t_q.
    pub d_formula: f64,
    /// int |grad u^2|^2 / t_q  (tends to 1)
    pub ratio_quasilinear: f64,
    /// (4a/(q+2)) int u^{q+2} / t_q  (tends to 1)
    pub ratio_nonlinear: f64,
    /// int |grad u|^2 / int |grad u^2|^2  (tends to 0)
    pub ratio_kinetic: f64,
    /// mu_q eps_q^{N+2}  (tends to -1/N)
    pub mu_scaled: f64,
    /// relative L2 distance of the rescaled density to the limit profile
    pub profile_l2_dist: f64,
    /// argmax of the minimizer, physical coordinates
    pub peak_location: f64,
    /// int V u^2
    pub potential_mass: f64,
}

impl SweepRecord {
    pub fn csv_header() -> &'static str {
        "q,eps_q,t_q,d_numeric,d_formula,ratio_quasilinear,ratio_nonlinear,ratio_kinetic,mu_scaled,profile_l2_dist,peak_location,potential_mass"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e}",
            self.q,
            self.eps_q,
            self.t_q,
            self.d_numeric,
            self.d_formula,
            self.ratio_quasilinear,
            self.ratio_nonlinear,
            self.ratio_kinetic,
            self.mu_scaled,
            self.profile_l2_dist,
            self.peak_location,
            self.potential_mass
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// a > a*: minimizers collapse at scale eps_q; meshes shrink with eps_q.
    Blowup,
    /// a < a*: minimizers converge; fixed mesh.
    Compact,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOpts {
    pub mode: SweepMode,
    /// Blow-up member half-width in rescaled units: the physical domain is
    /// [-L eps_q, L eps_q].
    pub rescaled_half_width: f64,
    /// Lower bound on the physical half-width (lets confined runs keep room
    /// for the peak to wander).
    pub min_half_width: f64,
    /// Compact-mode half-width.
    pub fixed_half_width: f64,
    /// Mesh nodes per eps_q in blow-up mode (>= 64 resolves the collapse).
    pub nodes_per_eps: usize,
    pub max_nodes: usize,
    pub compact_nodes: usize,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub profile_tol: f64,
}

impl Default for SweepOpts {
    fn default() -> Self {
        Self {
            mode: SweepMode::Blowup,
            rescaled_half_width: 12.0,
            min_half_width: 0.0,
            fixed_half_width: 8.0,
            nodes_per_eps: 64,
            max_nodes: 65_537,
            compact_nodes: 4097,
            grad_tol: 1e-6,
            max_iters: 60_000,
            profile_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    /// Rescaled states w_q (blow-up mode), one per record, on their
    /// rescaled meshes.
    pub rescaled_states: Vec<GridField>,
    /// Minimizers, one per record, on the member meshes.
    pub minimizers: Vec<GridField>,
    /// ||u_{k+1} - u_k||_2 between successive minimizers (compact mode,
    /// where members share one mesh).
    pub successive_distances: Vec<f64>,
}

fn member_geometry(dim: u32, half_width: f64, nodes: usize) -> Result<Geometry> {
    if dim == 1 {
        Geometry::symmetric_interval(half_width, nodes)
    } else {
        Geometry::radial(dim, half_width, nodes)
    }
}

fn sample_potential(geometry: &Geometry, v: Option<&dyn Fn(f64) -> f64>) -> Option<Vec<f64>> {
    v.map(|f| geometry.coords().iter().map(|x| f(*x)).collect())
}

fn potential_mass(u: &GridField, v: Option<&[f64]>) -> f64 {
    match v {
        Some(vals) => u
            .weights()
            .iter()
            .zip(u.values().iter().zip(vals))
            .map(|(w, (ui, vi))| w * vi * ui * ui)
            .sum(),
        None => 0.0,
    }
}

fn fail_member(q: f64, err: QgError) -> QgError {
    QgError::PartialSweep {
        q,
        source: Box::new(err),
    }
}

/// Run a q-sweep toward q*. `q_list` must increase strictly and stay below
/// q*. Blow-up mode expects the template coupling above the threshold,
/// compact mode below; a member that fails to minimize aborts the sweep with
/// a partial-sweep error naming its q.
pub fn sweep(
    q_list: &[f64],
    template: &ProblemParams,
    v: Option<&dyn Fn(f64) -> f64>,
    opts: &SweepOpts,
) -> Result<SweepOutput> {
    let q_star = template.q_star();
    if q_list.is_empty()
        || q_list.windows(2).any(|w| w[1] <= w[0])
        || q_list.iter().any(|&q| q >= q_star)
    {
        return Err(QgError::InvalidConfig(
            "sweep needs a strictly increasing q list below q*".into(),
        ));
    }
    match opts.mode {
        SweepMode::Blowup => sweep_blowup(q_list, template, v, opts),
        SweepMode::Compact => sweep_compact(q_list, template, v, opts),
    }
}

fn sweep_blowup(
    q_list: &[f64],
    template: &ProblemParams,
    v: Option<&dyn Fn(f64) -> f64>,
    opts: &SweepOpts,
) -> Result<SweepOutput> {
    let dim = template.dim();
    let n = dim as f64;
    let q_star = template.q_star();
    // the limit profile and its scale, fixed across the sweep
    let star_params = template.with_q(q_star)?;
    let star_profile = RadialProfile::solve(&star_params, opts.profile_tol)?;
    let star_mass = star_profile.mass();
    let lambda = (star_mass / n).powf(1.0 / (n + 2.0));

    let mut out = SweepOutput {
        records: Vec::new(),
        rescaled_states: Vec::new(),
        minimizers: Vec::new(),
        successive_distances: Vec::new(),
    };
    let mut warm: Option<(GridField, f64)> = None; // previous minimizer and its eps

    for &q in q_list {
        let params = template.with_q(q).map_err(|e| fail_member(q, e))?;
        let profile =
            RadialProfile::solve(&params, opts.profile_tol).map_err(|e| fail_member(q, e))?;
        let gn = GnConstants::from_profile_mass(&params, profile.mass())
            .map_err(|e| fail_member(q, e))?;
        let scale = blowup_scale(&params, &gn).map_err(|e| fail_member(q, e))?;
        let d_formula = energy_asymptote(&params, &gn).map_err(|e| fail_member(q, e))?;

        let half_width = (opts.rescaled_half_width * scale.eps).max(opts.min_half_width);
        let nodes_f = 2.0 * half_width / scale.eps * opts.nodes_per_eps as f64;
        let nodes = (nodes_f.ceil() as usize | 1).clamp(1025, opts.max_nodes | 1);
        let geometry = member_geometry(dim, half_width, nodes).map_err(|e| fail_member(q, e))?;
        let v_nodes = sample_potential(&geometry, v);

        let init = match &warm {
            Some((u_prev, eps_prev)) => {
                let sigma = eps_prev / scale.eps;
                let peak = u_prev.peak_location();
                let (lo, hi) = match u_prev.geometry() {
                    Geometry::Radial { r_max, .. } => (0.0, *r_max),
                    Geometry::Interval { x_lo, x_hi, .. } => (*x_lo, *x_hi),
                };
                let center = (peak * (1.0 - sigma)).clamp(lo, hi);
                match u_prev.rescale_onto(sigma, center, geometry) {
                    Ok(mut w) => {
                        w.positive_part();
                        if w.normalize_mass().is_ok() {
                            InitSpec::Field(w)
                        } else {
                            InitSpec::default()
                        }
                    }
                    Err(_) => InitSpec::default(),
                }
            }
            None => InitSpec::default(),
        };
        let min_opts = MinimizeOpts {
            grad_tol: opts.grad_tol,
            max_iters: opts.max_iters,
            divergence_floor: Some(-10.0 * d_formula.abs()),
            init,
            ..MinimizeOpts::default()
        };
        let result =
            minimize(&params, geometry, v_nodes.as_deref(), &min_opts).map_err(|e| fail_member(q, e))?;
        if !result.converged {
            return Err(fail_member(
                q,
                QgError::InvalidRegime("sweep member diverged instead of converging".into()),
            ));
        }
        let u = &result.u;

        // rescale about the peak onto the mesh in eps units; node-aligned, so
        // the resampling is exact
        let rescaled_geom = match geometry {
            Geometry::Radial { dim, r_max, nodes } => Geometry::Radial {
                dim,
                r_max: r_max / scale.eps,
                nodes,
            },
            Geometry::Interval { x_lo, x_hi, nodes } => Geometry::Interval {
                x_lo: x_lo / scale.eps,
                x_hi: x_hi / scale.eps,
                nodes,
            },
        };
        let w_q = u
            .rescale_onto(scale.eps, u.peak_location(), rescaled_geom)
            .map_err(|e| fail_member(q, e))?;

        // limit density lambda^N v_{q*}(lambda |x - x0|) / |v_{q*}|_L1 with
        // x0 aligned on the rescaled peak
        let x0 = w_q.peak_location();
        let w_sq = GridField::new(
            rescaled_geom,
            w_q.values().iter().map(|x| x * x).collect(),
        )
        .map_err(|e| fail_member(q, e))?;
        let reference = GridField::from_fn(rescaled_geom, |x| {
            lambda.powi(dim as i32) * star_profile.sample(lambda * (x - x0).abs()) / star_mass
        })
        .map_err(|e| fail_member(q, e))?;
        let profile_l2_dist = w_sq.l2_distance(&reference) / reference.norm_of(reference.values());

        let quasilinear = u.dirichlet_sq();
        let record = SweepRecord {
            q,
            eps_q: scale.eps,
            t_q: scale.t,
            d_numeric: result.energy.total,
            d_formula,
            ratio_quasilinear: quasilinear / scale.t,
            ratio_nonlinear: 4.0 * params.a() / (q + 2.0) * u.lp_integral(q + 2.0) / scale.t,
            ratio_kinetic: u.dirichlet() / quasilinear,
            mu_scaled: result.mu / scale.t,
            profile_l2_dist,
            peak_location: u.peak_location(),
            potential_mass: potential_mass(u, v_nodes.as_deref()),
        };
        out.records.push(record);
        out.rescaled_states.push(w_q);
        out.minimizers.push(u.clone());
        warm = Some((u.clone(), scale.eps));
    }
    Ok(out)
}

fn sweep_compact(
    q_list: &[f64],
    template: &ProblemParams,
    v: Option<&dyn Fn(f64) -> f64>,
    opts: &SweepOpts,
) -> Result<SweepOutput> {
    let dim = template.dim();
    let geometry = member_geometry(dim, opts.fixed_half_width, opts.compact_nodes)?;
    let v_nodes = sample_potential(&geometry, v);
    let mut out = SweepOutput {
        records: Vec::new(),
        rescaled_states: Vec::new(),
        minimizers: Vec::new(),
        successive_distances: Vec::new(),
    };
    let mut warm: Option<GridField> = None;

    for &q in q_list {
        let params = template.with_q(q).map_err(|e| fail_member(q, e))?;
        let init = match &warm {
            Some(u) => InitSpec::Field(u.clone()),
            None => InitSpec::default(),
        };
        let min_opts = MinimizeOpts {
            grad_tol: opts.grad_tol,
            max_iters: opts.max_iters,
            init,
            ..MinimizeOpts::default()
        };
        let result =
            minimize(&params, geometry, v_nodes.as_deref(), &min_opts).map_err(|e| fail_member(q, e))?;
        if !result.converged {
            return Err(fail_member(
                q,
                QgError::InvalidRegime("compact sweep member did not converge".into()),
            ));
        }
        let u = result.u;
        if let Some(prev) = &warm {
            out.successive_distances.push(u.l2_distance(prev));
        }
        out.records.push(SweepRecord {
            q,
            eps_q: f64::NAN,
            t_q: f64::NAN,
            d_numeric: result.energy.total,
            d_formula: f64::NAN,
            ratio_quasilinear: f64::NAN,
            ratio_nonlinear: f64::NAN,
            ratio_kinetic: u.dirichlet() / u.dirichlet_sq(),
            mu_scaled: f64::NAN,
            profile_l2_dist: f64::NAN,
            peak_location: u.peak_location(),
            potential_mass: potential_mass(&u, v_nodes.as_deref()),
        });
        out.minimizers.push(u.clone());
        warm = Some(u);
    }
    Ok(out)
}

/// Scaled-multiplier trend against the predicted limit -1/N.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendReport {
    pub values: Vec<f64>,
    pub target: f64,
    pub deviations: Vec<f64>,
    pub monotone_approach: bool,
}

pub fn multiplier_track(records: &[SweepRecord], dim: u32) -> Result<TrendReport> {
    if records.len() < 3 {
        return Err(QgError::InvalidConfig(
            "multiplier track needs at least 3 records".into(),
        ));
    }
    let target = -1.0 / dim as f64;
    let values: Vec<f64> = records.iter().map(|r| r.mu_scaled).collect();
    let deviations: Vec<f64> = values.iter().map(|m| (m - target).abs()).collect();
    let monotone_approach = deviations.windows(2).all(|w| w[1] <= w[0]);
    Ok(TrendReport {
        values,
        target,
        deviations,
        monotone_approach,
    })
}

/// Peak distances to the zero set of V (given as closed intervals) and the
/// potential masses along a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub peak_distances: Vec<f64>,
    pub potential_masses: Vec<f64>,
}

pub fn concentration_track(
    records: &[SweepRecord],
    v_zero_set: &[(f64, f64)],
) -> ConcentrationReport {
    let dist = |x: f64| -> f64 {
        v_zero_set
            .iter()
            .map(|&(lo, hi)| {
                if x < lo {
                    lo - x
                } else if x > hi {
                    x - hi
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    };
    ConcentrationReport {
        peak_distances: records.iter().map(|r| dist(r.peak_location)).collect(),
        potential_masses: records.iter().map(|r| r.potential_mass).collect(),
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GapRecord {
    pub q: f64,
    pub d_with_potential: f64,
    pub d_free: f64,
    pub gap: f64,
}

/// Minimize both the confined and the potential-free problem per q on one
/// mesh and report d_a(q) - d~_a(q), which is nonnegative and vanishes as
/// q approaches q*.
pub fn energy_gap(
    q_list: &[f64],
    template: &ProblemParams,
    v: &dyn Fn(f64) -> f64,
    opts: &SweepOpts,
) -> Result<Vec<GapRecord>> {
    let confined = sweep(q_list, template, Some(v), opts)?;
    let free = sweep(q_list, template, None, opts)?;
    Ok(confined
        .records
        .iter()
        .zip(&free.records)
        .map(|(c, f)| GapRecord {
            q: c.q,
            d_with_potential: c.d_numeric,
            d_free: f.d_numeric,
            gap: c.d_numeric - f.d_numeric,
        })
        .collect())
}

/// Least-squares fit of log|y| against log(tau); returns (slope, amplitude).
pub fn power_law_fit(taus: &[f64], values: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = taus
        .iter()
        .zip(values)
        .filter(|(t, v)| **t > 0.0 && v.abs() > 0.0 && v.is_finite())
        .map(|(t, v)| (t.ln(), v.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    Some((slope, intercept.exp()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub taus: Vec<f64>,
    pub totals: Vec<f64>,
    pub kinetics: Vec<f64>,
    /// quasilinear - nonlinear per tau: the scale-critical part of the energy.
    pub scale_terms: Vec<f64>,
    /// Fit of the scale-critical term when it is negative: slope tends to
    /// N+2, coefficient to N(1 - a/a*)/(4 |v_{q*}|_L1).
    pub scale_slope: Option<f64>,
    pub scale_coefficient: Option<f64>,
    /// Fit of |total| over the trailing half of the tau list.
    pub total_slope: Option<f64>,
}

/// Evaluate the energy along the normalized trial family u_tau and fit the
/// power law of its dominant term. For q = q* with a above the threshold the
/// scale-critical term drives the energy to -infinity like tau^{N+2}; for
/// q > q* the nonlinear term wins on its own.
pub fn nonexistence_probe(
    params: &ProblemParams,
    star_profile: &RadialProfile,
    taus: &[f64],
    geometry: Geometry,
    v: Option<&dyn Fn(f64) -> f64>,
) -> Result<DivergenceReport> {
    if taus.is_empty() {
        return Err(QgError::InvalidConfig("probe needs a tau list".into()));
    }
    let center = match geometry {
        Geometry::Radial { .. } => 0.0,
        Geometry::Interval { x_lo, x_hi, .. } => 0.5 * (x_lo + x_hi),
    };
    let v_nodes = sample_potential(&geometry, v);
    let mut totals = Vec::new();
    let mut kinetics = Vec::new();
    let mut scale_terms = Vec::new();
    for &tau in taus {
        let u = trial_family(tau, star_profile, center, geometry)?;
        let e = energy::evaluate(&u, params, v_nodes.as_deref());
        totals.push(e.total);
        kinetics.push(e.kinetic);
        scale_terms.push(e.quasilinear - e.nonlinear);
    }
    let negative_scale: Vec<(f64, f64)> = taus
        .iter()
        .zip(&scale_terms)
        .filter(|(_, s)| **s < 0.0)
        .map(|(t, s)| (*t, *s))
        .collect();
    let (scale_slope, scale_coefficient) = if negative_scale.len() >= 2 {
        let (ts, vs): (Vec<f64>, Vec<f64>) = negative_scale.into_iter().unzip();
        match power_law_fit(&ts, &vs) {
            Some((slope, amp)) => (Some(slope), Some(-amp)),
            None => (None, None),
        }
    } else {
        (None, None)
    };
    let tail = taus.len() / 2;
    let total_slope = power_law_fit(&taus[tail..], &totals[tail..]).map(|(s, _)| s);
    Ok(DivergenceReport {
        taus: taus.to_vec(),
        totals,
        kinetics,
        scale_terms,
        scale_slope,
        scale_coefficient,
        total_slope,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdOpts {
    pub half_width: f64,
    pub nodes: usize,
    /// Bisection stops when the bracket width falls below rel_tol times the
    /// bracket midpoint.
    pub rel_tol: f64,
    /// Divergence floor for the classification runs. Converged states sit at
    /// O(1) energies, so anything far below that is a safe cut.
    pub floor: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub profile_tol: f64,
    /// Target node count across the seed support; sets how narrow the
    /// trial-family seed starts.
    pub seed_support_nodes: usize,
}

impl Default for ThresholdOpts {
    fn default() -> Self {
        Self {
            half_width: 4.0,
            nodes: 8193,
            rel_tol: 0.02,
            floor: -1e3,
            grad_tol: 1e-5,
            max_iters: 60_000,
            profile_tol: 1e-7,
            seed_support_nodes: 24,
        }
    }
}

/// Bisect the coupling threshold at q = q*: a run that collapses through the
/// divergence floor classifies its coupling as too large, a converged run as
/// admissible. Returns the bracket midpoint once the bracket is tight.
///
/// The seed is a narrow trial-family state: when the coupling exceeds the
/// threshold the collapse branch is downhill from it, while below the
/// threshold the flow relaxes back to the confined ground state.
pub fn threshold_bisect(
    dim: u32,
    v: &dyn Fn(f64) -> f64,
    a_bracket: (f64, f64),
    opts: &ThresholdOpts,
) -> Result<f64> {
    let (mut lo, mut hi) = a_bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(QgError::InvalidConfig(format!(
            "bad coupling bracket [{lo}, {hi}]"
        )));
    }
    let q_star = 2.0 + 4.0 / dim as f64;
    let star_params = ProblemParams::new(dim, q_star, 1.0)?;
    let star_profile = RadialProfile::solve(&star_params, opts.profile_tol)?;
    let geometry = member_geometry(dim, opts.half_width, opts.nodes)?;
    let v_nodes: Vec<f64> = geometry.coords().iter().map(|x| v(*x)).collect();

    // center the seed on the potential minimum
    let mut best = 0usize;
    for (i, vi) in v_nodes.iter().enumerate() {
        if *vi < v_nodes[best] {
            best = i;
        }
    }
    let center = geometry.coord(best);
    let tau_seed = (star_profile.radius()
        / (opts.seed_support_nodes as f64 * geometry.spacing()))
    .max(4.0);
    let seed = trial_family(tau_seed, &star_profile, center, geometry)?;

    let classify = |a: f64| -> Result<bool> {
        let params = ProblemParams::new(dim, q_star, a)?;
        let min_opts = MinimizeOpts {
            grad_tol: opts.grad_tol,
            max_iters: opts.max_iters,
            divergence_floor: Some(opts.floor),
            init: InitSpec::Field(seed.clone()),
            ..MinimizeOpts::default()
        };
        let result = minimize(&params, geometry, Some(&v_nodes), &min_opts)?;
        Ok(result.diverged)
    };

    if classify(lo)? {
        return Err(QgError::BadBracket {
            lo,
            hi,
            verdict: "both ends diverge".into(),
        });
    }
    if !classify(hi)? {
        return Err(QgError::BadBracket {
            lo,
            hi,
            verdict: "both ends converge".into(),
        });
    }
    while hi - lo > opts.rel_tol * 0.5 * (hi + lo) {
        let mid = 0.5 * (lo + hi);
        if classify(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Fit the decay rate of log(w) on |x| >= inner; positive when the tail is
/// exponentially small.
pub fn exponential_tail_rate(w: &GridField, inner: f64) -> Option<f64> {
    let geom = w.geometry();
    let pts: Vec<(f64, f64)> = (0..geom.nodes())
        .filter_map(|i| {
            let x = geom.coord(i).abs();
            let val = w.values()[i];
            (x >= inner && val > 1e-250).then(|| (x, val.ln()))
        })
        .collect();
    if pts.len() < 8 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return None;
    }
    Some(-(n * sxy - sx * sy) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn power_law_fit_recovers_exact_powers() {
        let taus = [1.0, 2.0, 4.0, 8.0];
        let vals: Vec<f64> = taus.iter().map(|t| -0.25 * t * t * t).collect();
        let (slope, amp) = power_law_fit(&taus, &vals).unwrap();
        assert_relative_eq!(slope, 3.0, max_relative = 1e-12);
        assert_relative_eq!(amp, 0.25, max_relative = 1e-12);
    }

    #[test]
    fn multiplier_track_on_injected_constant() {
        // mu_q = -t_q / N gives mu_scaled exactly -1/N
        let records: Vec<SweepRecord> = (0..4)
            .map(|k| {
                let t = 10.0f64.powi(k + 1);
                SweepRecord {
                    q: 5.0 + 0.2 * k as f64,
                    eps_q: t.powf(-1.0 / 3.0),
                    t_q: t,
                    d_numeric: 0.0,
                    d_formula: 0.0,
                    ratio_quasilinear: 1.0,
                    ratio_nonlinear: 1.0,
                    ratio_kinetic: 0.1,
                    mu_scaled: (-t / 2.0) / t,
                    profile_l2_dist: 0.0,
                    peak_location: 0.0,
                    potential_mass: 0.0,
                }
            })
            .collect();
        let report = multiplier_track(&records, 2).unwrap();
        for d in &report.deviations {
            assert!(*d < 1e-15);
        }
        assert!(report.monotone_approach);
        assert!(multiplier_track(&records[..2], 2).is_err());
    }

    #[test]
    fn concentration_distance_to_interval_set() {
        let mut records: Vec<SweepRecord> = Vec::new();
        for peak in [2.0, -0.5, 0.3] {
            records.push(SweepRecord {
                q: 5.0,
                eps_q: 1.0,
                t_q: 1.0,
                d_numeric: 0.0,
                d_formula: 0.0,
                ratio_quasilinear: 1.0,
                ratio_nonlinear: 1.0,
                ratio_kinetic: 0.1,
                mu_scaled: -1.0,
                profile_l2_dist: 0.0,
                peak_location: peak,
                potential_mass: 0.0,
            });
        }
        let report = concentration_track(&records, &[(-1.0, 1.0)]);
        assert_eq!(report.peak_distances, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn sweep_rejects_bad_q_lists() {
        let template = ProblemParams::new(1, 5.0, 10.0).unwrap();
        let opts = SweepOpts::default();
        assert!(sweep(&[], &template, None, &opts).is_err());
        assert!(sweep(&[5.0, 4.5], &template, None, &opts).is_err());
        assert!(sweep(&[5.0, 6.0], &template, None, &opts).is_err());
    }

    #[test]
    fn tail_rate_of_exponential_data() {
        let g = Geometry::symmetric_interval(10.0, 513).unwrap();
        let w = GridField::from_fn(g, |x| (-1.7 * x.abs()).exp()).unwrap();
        let rate = exponential_tail_rate(&w, 2.0).unwrap();
        assert_relative_eq!(rate, 1.7, max_relative = 1e-6);
    }
}
