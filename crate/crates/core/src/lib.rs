//! Normalized ground states of a quasilinear Schrödinger energy.
//!
//! The library minimizes
//!
//!   E(u) = 1/2 ∫ (|∇u|² + V|u|²) + 1/4 ∫ |∇u²|² − a/(q+2) ∫ |u|^{q+2}
//!
//! over the unit L² sphere on truncated radial or interval meshes, and
//! verifies its structural identities numerically: the free-boundary radial
//! profile and its integral identities, the sharp interpolation constants,
//! the existence threshold in the coupling a at the critical exponent
//! q* = 2 + 4/N, and the concentration behavior of minimizers as q
//! approaches q* from below.

pub mod asymptotics;
pub mod constants;
pub mod energy;
pub mod error;
pub mod field;
pub mod minimizer;
pub mod radial_profile;

pub use asymptotics::{
    concentration_track, energy_gap, exponential_tail_rate, multiplier_track,
    nonexistence_probe, power_law_fit, sweep, threshold_bisect, ConcentrationReport,
    DivergenceReport, GapRecord, SweepMode, SweepOpts, SweepOutput, SweepRecord,
    ThresholdOpts, TrendReport,
};
pub use constants::{
    blowup_scale, critical_exponent, energy_asymptote, existence_threshold,
    multiplier_scaled_limit, BlowupScale, GnConstants, ProblemParams,
};
pub use energy::{auxiliary_functional, evaluate, gradient, multiplier, trial_family, EnergyBreakdown};
pub use error::{QgError, Result};
pub use minimizer::{descend_step, detect_divergence, minimize, InitSpec, MinimizationResult, MinimizeOpts, SobolevSolver};
pub use field::{Geometry, GridField};
pub use radial_profile::{gn_ratio, ProfileOpts, RadialProfile};
