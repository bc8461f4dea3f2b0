//! Discrete fields on uniform radial or interval meshes.
//!
//! Radial meshes carry the measure omega_N r^{N-1} dr in their quadrature
//! weights, so every integral below is an integral over R^N restricted to
//! radially symmetric functions. Interval meshes are plain 1-D with dx.
//! Differentiation is second-order central, one-sided at mesh ends; the
//! radial origin uses even symmetry (derivative 0).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{QgError, Result};

pub const MIN_NODES: usize = 16;

/// Surface area of the unit sphere in R^N: 2 pi^{N/2} / Gamma(N/2).
pub fn unit_sphere_area(dim: u32) -> f64 {
    // Gamma at half-integer arguments by upward recursion.
    let mut k = if dim % 2 == 0 { 2 } else { 1 };
    let mut gamma = if k == 1 { std::f64::consts::PI.sqrt() } else { 1.0 };
    while k < dim {
        gamma *= k as f64 / 2.0;
        k += 2;
    }
    2.0 * std::f64::consts::PI.powf(dim as f64 / 2.0) / gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    /// Ball of radius `r_max` in R^dim, reduced to the radial coordinate.
    Radial { dim: u32, r_max: f64, nodes: usize },
    /// Interval [x_lo, x_hi] in 1-D.
    Interval { x_lo: f64, x_hi: f64, nodes: usize },
}

impl Geometry {
    pub fn radial(dim: u32, r_max: f64, nodes: usize) -> Result<Self> {
        let g = Geometry::Radial { dim, r_max, nodes };
        g.validate()?;
        Ok(g)
    }

    pub fn interval(x_lo: f64, x_hi: f64, nodes: usize) -> Result<Self> {
        let g = Geometry::Interval { x_lo, x_hi, nodes };
        g.validate()?;
        Ok(g)
    }

    /// Symmetric interval [-half_width, half_width].
    pub fn symmetric_interval(half_width: f64, nodes: usize) -> Result<Self> {
        Self::interval(-half_width, half_width, nodes)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Geometry::Radial { dim, r_max, nodes } => {
                if dim < 1 {
                    return Err(QgError::InvalidDimension(dim as i64));
                }
                if nodes < MIN_NODES || !(r_max > 0.0) {
                    return Err(QgError::InvalidConfig(format!(
                        "radial mesh needs r_max > 0 and nodes >= {MIN_NODES}, got r_max = {r_max}, nodes = {nodes}"
                    )));
                }
            }
            Geometry::Interval { x_lo, x_hi, nodes } => {
                if nodes < MIN_NODES || !(x_hi > x_lo) {
                    return Err(QgError::InvalidConfig(format!(
                        "interval mesh needs x_hi > x_lo and nodes >= {MIN_NODES}, got [{x_lo}, {x_hi}], nodes = {nodes}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        match *self {
            Geometry::Radial { nodes, .. } | Geometry::Interval { nodes, .. } => nodes,
        }
    }

    /// Ambient dimension: N for radial, 1 for interval.
    pub fn dim(&self) -> u32 {
        match *self {
            Geometry::Radial { dim, .. } => dim,
            Geometry::Interval { .. } => 1,
        }
    }

    pub fn spacing(&self) -> f64 {
        match *self {
            Geometry::Radial { r_max, nodes, .. } => r_max / (nodes - 1) as f64,
            Geometry::Interval { x_lo, x_hi, nodes } => (x_hi - x_lo) / (nodes - 1) as f64,
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        match *self {
            Geometry::Radial { .. } => i as f64 * self.spacing(),
            Geometry::Interval { x_lo, .. } => x_lo + i as f64 * self.spacing(),
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.nodes()).map(|i| self.coord(i)).collect()
    }

    fn extent(&self) -> (f64, f64) {
        match *self {
            Geometry::Radial { r_max, .. } => (0.0, r_max),
            Geometry::Interval { x_lo, x_hi, .. } => (x_lo, x_hi),
        }
    }

    /// Trapezoidal quadrature weights embedding the measure. The first radial
    /// cell integrates r^{N-1} exactly so the origin keeps a positive weight.
    pub fn quad_weights(&self) -> Vec<f64> {
        let n = self.nodes();
        let h = self.spacing();
        let mut w = vec![0.0; n];
        match *self {
            Geometry::Interval { .. } => {
                for wi in w.iter_mut() {
                    *wi = h;
                }
                w[0] = 0.5 * h;
                w[n - 1] = 0.5 * h;
            }
            Geometry::Radial { dim, .. } => {
                let omega = unit_sphere_area(dim);
                let nf = dim as f64;
                let first_cell = omega * h.powi(dim as i32) / nf;
                w[0] += 0.5 * first_cell;
                w[1] += 0.5 * first_cell;
                for j in 1..n - 1 {
                    let rj = j as f64 * h;
                    let rj1 = (j + 1) as f64 * h;
                    w[j] += 0.5 * omega * h * rj.powi(dim as i32 - 1);
                    w[j + 1] += 0.5 * omega * h * rj1.powi(dim as i32 - 1);
                }
            }
        }
        w
    }

    /// Second-order first derivative of nodal data. Radial fields are even
    /// across the origin, so the derivative there is exactly zero.
    pub fn derivative_of(&self, f: &[f64]) -> Vec<f64> {
        let n = self.nodes();
        assert_eq!(f.len(), n);
        let h = self.spacing();
        let mut d = vec![0.0; n];
        d[0] = match self {
            Geometry::Radial { .. } => 0.0,
            Geometry::Interval { .. } => (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h),
        };
        for i in 1..n - 1 {
            d[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
        }
        d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
        d
    }

    /// Adjoint of `derivative_of` against the plain (unweighted) pairing:
    /// out_j = sum_i D_{ij} g_i.
    fn derivative_transpose(&self, g: &[f64]) -> Vec<f64> {
        let n = self.nodes();
        assert_eq!(g.len(), n);
        let h = self.spacing();
        let inv2h = 1.0 / (2.0 * h);
        let mut out = vec![0.0; n];
        if let Geometry::Interval { .. } = self {
            out[0] += -3.0 * inv2h * g[0];
            out[1] += 4.0 * inv2h * g[0];
            out[2] += -inv2h * g[0];
        }
        for i in 1..n - 1 {
            out[i + 1] += inv2h * g[i];
            out[i - 1] -= inv2h * g[i];
        }
        out[n - 1] += 3.0 * inv2h * g[n - 1];
        out[n - 2] += -4.0 * inv2h * g[n - 1];
        out[n - 3] += inv2h * g[n - 1];
        out
    }

    /// Indices whose values are pinned to zero by the domain truncation:
    /// the outer radius for radial meshes, both ends for intervals.
    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        match *self {
            Geometry::Radial { nodes, .. } => vec![nodes - 1],
            Geometry::Interval { nodes, .. } => vec![0, nodes - 1],
        }
    }
}

/// Discrete minus-Laplacian that is the exact gradient of the quadratic form
/// f -> sum_i w_i (Df)_i^2: L = W^{-1} D^T W D. Self-adjoint and nonnegative
/// in the w-weighted inner product.
pub fn neg_laplacian(geom: &Geometry, weights: &[f64], f: &[f64]) -> Vec<f64> {
    let mut g = geom.derivative_of(f);
    for (gi, wi) in g.iter_mut().zip(weights) {
        *gi *= wi;
    }
    let mut out = geom.derivative_transpose(&g);
    for (oi, wi) in out.iter_mut().zip(weights) {
        *oi /= wi;
    }
    out
}

/// A discretized function with its quadrature weights.
#[derive(Debug, Clone)]
pub struct GridField {
    geometry: Geometry,
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl GridField {
    /// Wrap nodal values; Dirichlet nodes are forced to zero (the fields
    /// represent functions truncated to the mesh domain).
    pub fn new(geometry: Geometry, mut values: Vec<f64>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.nodes() {
            return Err(QgError::InvalidConfig(format!(
                "value count {} does not match mesh nodes {}",
                values.len(),
                geometry.nodes()
            )));
        }
        for i in geometry.dirichlet_nodes() {
            values[i] = 0.0;
        }
        let weights = geometry.quad_weights();
        Ok(Self { geometry, values, weights })
    }

    pub fn zeros(geometry: Geometry) -> Result<Self> {
        let n = geometry.nodes();
        Self::new(geometry, vec![0.0; n])
    }

    pub fn from_fn(geometry: Geometry, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..geometry.nodes()).map(|i| f(geometry.coord(i))).collect();
        Self::new(geometry, values)
    }

    /// Gaussian bump with unit continuum L2 mass, centered at `center`.
    pub fn gaussian(geometry: Geometry, center: f64, width: f64) -> Result<Self> {
        let dim = geometry.dim() as f64;
        let norm = (std::f64::consts::PI * width * width).powf(-dim / 4.0);
        let mut field = Self::from_fn(geometry, |x| {
            let d = x - center;
            norm * (-d * d / (2.0 * width * width)).exp()
        })?;
        // radial bumps off the origin need the mirror image to stay smooth
        if let (Geometry::Radial { .. }, true) = (&geometry, center != 0.0) {
            field = Self::from_fn(geometry, |r| {
                let d1 = r - center;
                let d2 = r + center;
                norm * ((-d1 * d1 / (2.0 * width * width)).exp()
                    + (-d2 * d2 / (2.0 * width * width)).exp())
            })?;
        }
        Ok(field)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Quadrature of arbitrary nodal data on this mesh.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// The L2 mass: integral of u^2.
    pub fn mass(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v * v)
            .sum()
    }

    /// Integral of |u|^p for p > 0.
    pub fn lp_integral(&self, p: f64) -> f64 {
        assert!(p > 0.0, "lp_integral needs p > 0");
        self.weights
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v.abs().powf(p))
            .sum()
    }

    pub fn derivative(&self) -> Vec<f64> {
        self.geometry.derivative_of(&self.values)
    }

    /// Dirichlet energy: integral of |grad u|^2.
    pub fn dirichlet(&self) -> f64 {
        let d = self.derivative();
        self.integrate_squares(&d)
    }

    /// Integral of |grad(u^2)|^2, the quasilinear energy density.
    pub fn dirichlet_sq(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        let d = self.geometry.derivative_of(&sq);
        self.integrate_squares(&d)
    }

    fn integrate_squares(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v * v).sum()
    }

    /// Weighted L2 norm of nodal data.
    pub fn norm_of(&self, f: &[f64]) -> f64 {
        self.integrate_squares(f).sqrt()
    }

    /// Weighted L2 distance between this field and another on the same mesh.
    pub fn l2_distance(&self, other: &GridField) -> f64 {
        assert_eq!(self.geometry, other.geometry);
        self.weights
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale w(x) = eps^{N/2} u(eps x + center) onto `target`, sampling u by
    /// linear interpolation (zero outside its mesh). Radial sampling reflects
    /// negative radii. Mass is preserved up to interpolation error.
    pub fn rescale_onto(&self, eps: f64, center: f64, target: Geometry) -> Result<GridField> {
        assert!(eps > 0.0, "rescale needs eps > 0");
        let (lo, hi) = self.geometry.extent();
        if !(center >= lo && center <= hi) {
            return Err(QgError::InvalidConfig(format!(
                "rescale center {center} outside the source domain [{lo}, {hi}]"
            )));
        }
        // support of the result in target coordinates
        let support = self.support_radius_about(center);
        if support > 0.0 {
            let (tlo, thi) = target.extent();
            let needed = support / eps;
            let available = match target {
                Geometry::Radial { .. } => thi,
                Geometry::Interval { .. } => (-tlo).min(thi),
            };
            if needed > available * (1.0 + 1e-12) {
                return Err(QgError::DomainOverflow { needed, available });
            }
        }
        let amp = eps.powf(self.geometry.dim() as f64 / 2.0);
        let out = GridField::from_fn(target, |x| amp * self.sample(eps * x + center))?;
        Ok(out)
    }

    /// Rescale onto a mesh of the same shape and node count with extent
    /// divided by eps (so aligned meshes resample exactly).
    pub fn rescale(&self, eps: f64, center: f64) -> Result<GridField> {
        let target = match self.geometry {
            Geometry::Radial { dim, r_max, nodes } => Geometry::Radial {
                dim,
                r_max: r_max / eps,
                nodes,
            },
            Geometry::Interval { x_lo, x_hi, nodes } => Geometry::Interval {
                x_lo: x_lo / eps,
                x_hi: x_hi / eps,
                nodes,
            },
        };
        self.rescale_onto(eps, center, target)
    }

    /// Largest |x - center| over nodes with nonzero value; 0 for the zero field.
    fn support_radius_about(&self, center: f64) -> f64 {
        let mut radius: f64 = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            if *v != 0.0 {
                let x = self.geometry.coord(i);
                radius = radius.max((x - center).abs());
                if let Geometry::Radial { .. } = self.geometry {
                    // the mirror image at -x is part of the same function
                    radius = radius.max((x + center).abs());
                }
            }
        }
        radius
    }

    /// Linear interpolation of the nodal values, zero outside the mesh.
    /// Radial fields are even: negative coordinates reflect.
    pub fn sample(&self, x: f64) -> f64 {
        let x = match self.geometry {
            Geometry::Radial { .. } => x.abs(),
            Geometry::Interval { .. } => x,
        };
        let (lo, hi) = self.geometry.extent();
        if x < lo || x > hi {
            return 0.0;
        }
        let h = self.geometry.spacing();
        let t = (x - lo) / h;
        let i = (t.floor() as usize).min(self.values.len() - 2);
        let frac = t - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Scale to unit mass; returns the mass before normalization.
    pub fn normalize_mass(&mut self) -> Result<f64> {
        let m = self.mass();
        if !(m > 0.0) || !m.is_finite() {
            return Err(QgError::InvalidMass(m));
        }
        let s = 1.0 / m.sqrt();
        for v in self.values.iter_mut() {
            *v *= s;
        }
        Ok(m)
    }

    /// Clamp negative nodal values to zero.
    pub fn positive_part(&mut self) {
        for v in self.values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    /// Coordinate of the largest value.
    pub fn peak_location(&self) -> f64 {
        let mut best = 0usize;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        self.geometry.coord(best)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        match self.geometry {
            Geometry::Radial { dim, r_max, nodes } => {
                let _ = writeln!(s, "# geometry=radial dim={dim} r_max={r_max} nodes={nodes}");
            }
            Geometry::Interval { x_lo, x_hi, nodes } => {
                let _ = writeln!(s, "# geometry=interval x_lo={x_lo} x_hi={x_hi} nodes={nodes}");
            }
        }
        s.push_str("x,u\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{},{}", self.geometry.coord(i), v);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<GridField> {
        let mut geometry: Option<Geometry> = None;
        let mut values = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let fields: std::collections::HashMap<&str, &str> = rest
                    .split_whitespace()
                    .filter_map(|kv| kv.split_once('='))
                    .collect();
                if let Some(kind) = fields.get("geometry") {
                    geometry = Some(match *kind {
                        "radial" => Geometry::Radial {
                            dim: parse_header(&fields, "dim")?,
                            r_max: parse_header(&fields, "r_max")?,
                            nodes: parse_header(&fields, "nodes")?,
                        },
                        "interval" => Geometry::Interval {
                            x_lo: parse_header(&fields, "x_lo")?,
                            x_hi: parse_header(&fields, "x_hi")?,
                            nodes: parse_header(&fields, "nodes")?,
                        },
                        other => {
                            return Err(QgError::CsvParse(format!("unknown geometry '{other}'")))
                        }
                    });
                }
                continue;
            }
            if line.starts_with(|c: char| c.is_ascii_alphabetic()) {
                continue; // column header row
            }
            let (_, u) = line
                .split_once(',')
                .ok_or_else(|| QgError::CsvParse(format!("bad row '{line}'")))?;
            values.push(
                u.trim()
                    .parse::<f64>()
                    .map_err(|e| QgError::CsvParse(format!("bad value '{u}': {e}")))?,
            );
        }
        let geometry =
            geometry.ok_or_else(|| QgError::CsvParse("missing geometry header".into()))?;
        GridField::new(geometry, values)
    }

    pub fn read_csv(path: &Path) -> Result<GridField> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text)
    }
}

fn parse_header<T: std::str::FromStr>(
    fields: &std::collections::HashMap<&str, &str>,
    key: &str,
) -> Result<T> {
    fields
        .get(key)
        .ok_or_else(|| QgError::CsvParse(format!("missing header field '{key}'")))?
        .parse::<T>()
        .map_err(|_| QgError::CsvParse(format!("bad header field '{key}'")))
}
