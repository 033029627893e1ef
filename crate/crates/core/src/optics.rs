//! Optical data ingestion and the dielectric permittivity on the imaginary
//! frequency axis.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::constants::{C, EV_TO_RAD_PER_S};
use crate::quad::{self, QuadError, Tolerance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("row {row} (line {line}): {reason}")]
    MalformedRow { row: usize, line: usize, reason: String },
    #[error("optical table is empty")]
    EmptyTable,
    #[error("optical table needs at least 2 points, found {0}")]
    TooFewPoints(usize),
    #[error("duplicate angular frequency {0:e} rad/s")]
    DuplicateFrequency(f64),
    #[error("unknown frequency unit {0:?} (expected eV, rad/s or um)")]
    UnknownUnit(String),
    #[error("no frequency unit declared: add a '#unit:' header or pass one explicitly")]
    MissingUnit,
    #[error("imaginary frequency must be positive, got {0:e}")]
    NonPositiveFrequency(f64),
    #[error("permittivity must be at least 1, got {0}")]
    PermittivityBelowOne(f64),
    #[error("invalid Drude parameters: omega_p = {omega_p:e}, gamma = {gamma:e}")]
    InvalidDrude { omega_p: f64, gamma: f64 },
    #[error("dispersion integral at xi = {xi:e}: {source}")]
    Quadrature {
        xi: f64,
        #[source]
        source: QuadError,
    },
}

/// Unit of the first column of an optical table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrequencyUnit {
    ElectronVolt,
    RadPerSecond,
    Micrometer,
}

impl FrequencyUnit {
    /// Angular frequency in rad/s for a value given in this unit.
    pub fn to_omega(self, x: f64) -> f64 {
        match self {
            Self::ElectronVolt => x * EV_TO_RAD_PER_S,
            Self::RadPerSecond => x,
            Self::Micrometer => 2.0 * PI * C / (x * 1e-6),
        }
    }
}

impl FromStr for FrequencyUnit {
    type Err = OpticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ev" => Ok(Self::ElectronVolt),
            "rad/s" | "rad_per_s" | "rad_s" => Ok(Self::RadPerSecond),
            "um" | "µm" | "micrometer" | "micrometers" => Ok(Self::Micrometer),
            other => Err(OpticsError::UnknownUnit(other.to_string())),
        }
    }
}

impl fmt::Display for FrequencyUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ElectronVolt => "eV",
            Self::RadPerSecond => "rad/s",
            Self::Micrometer => "um",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalPoint {
    pub omega: f64,
    pub n: f64,
    pub k: f64,
}

impl OpticalPoint {
    pub fn im_epsilon(&self) -> f64 {
        2.0 * self.n * self.k
    }
}

/// Tabulated complex refractive index against angular frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalDataset {
    points: Vec<OpticalPoint>,
    pub metal_name: String,
    pub source: String,
}

impl OpticalDataset {
    /// Builds a dataset, sorting by frequency and checking the invariants.
    pub fn new(mut points: Vec<OpticalPoint>, metal_name: impl Into<String>, source: impl Into<String>) -> Result<Self, OpticsError> {
        if points.is_empty() {
            return Err(OpticsError::EmptyTable);
        }
        for (i, p) in points.iter().enumerate() {
            let bad = if !(p.omega.is_finite() && p.omega > 0.0) {
                Some("frequency must be positive and finite")
            } else if !(p.n.is_finite() && p.n >= 0.0) {
                Some("n must be non-negative")
            } else if !(p.k.is_finite() && p.k >= 0.0) {
                Some("k must be non-negative")
            } else {
                None
            };
            if let Some(reason) = bad {
                return Err(OpticsError::MalformedRow {
                    row: i + 1,
                    line: i + 1,
                    reason: reason.to_string(),
                });
            }
        }
        points.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        if let Some(w) = points.windows(2).find(|w| w[0].omega == w[1].omega) {
            return Err(OpticsError::DuplicateFrequency(w[0].omega));
        }
        if points.len() < 2 {
            return Err(OpticsError::TooFewPoints(points.len()));
        }
        Ok(Self {
            points,
            metal_name: metal_name.into(),
            source: source.into(),
        })
    }

    pub fn points(&self) -> &[OpticalPoint] {
        &self.points
    }

    pub fn omega_min(&self) -> f64 {
        self.points[0].omega
    }

    pub fn omega_max(&self) -> f64 {
        self.points[self.points.len() - 1].omega
    }

    /// Im eps at `omega`, interpolated log-log inside the table; `None`
    /// outside the tabulated range.
    pub fn im_epsilon_at(&self, omega: f64) -> Option<f64> {
        if omega < self.omega_min() || omega > self.omega_max() {
            return None;
        }
        let idx = self.points.partition_point(|p| p.omega <= omega);
        let i = idx.clamp(1, self.points.len() - 1);
        Some(segment_value(&self.points[i - 1], &self.points[i], omega))
    }

    /// Builds a table whose Im eps follows the Drude form exactly at each of
    /// `omegas`, with `n` and `k` from the Drude complex permittivity.
    pub fn drude_synthetic(drude: DrudeParameters, omegas: &[f64]) -> Result<Self, OpticsError> {
        let points = omegas
            .iter()
            .map(|&w| {
                let g = drude.gamma;
                let wp2 = drude.omega_p * drude.omega_p;
                let re = 1.0 - wp2 / (w * w + g * g);
                let im = wp2 * g / (w * (w * w + g * g));
                let modulus = re.hypot(im);
                let n = ((modulus + re) / 2.0).max(0.0).sqrt();
                let k = ((modulus - re) / 2.0).max(0.0).sqrt();
                // Re-split so that 2nk reproduces Im eps to rounding.
                let k = if n > 0.0 { im / (2.0 * n) } else { k };
                OpticalPoint { omega: w, n, k }
            })
            .collect();
        Self::new(points, "Drude", format!("synthetic Drude omega_p={:e} gamma={:e}", drude.omega_p, drude.gamma))
    }
}

fn segment_value(a: &OpticalPoint, b: &OpticalPoint, omega: f64) -> f64 {
    let (ya, yb) = (a.im_epsilon(), b.im_epsilon());
    if ya > 0.0 && yb > 0.0 {
        let t = (omega / a.omega).ln() / (b.omega / a.omega).ln();
        (ya.ln() + t * (yb.ln() - ya.ln())).exp()
    } else {
        let t = (omega - a.omega) / (b.omega - a.omega);
        ya + t * (yb - ya)
    }
}

/// Parses a whitespace- or comma-delimited `x n k` table.
///
/// A `#unit:` header selects the unit of `x`; `unit_override`, when given,
/// takes precedence.
pub fn load_optical_table(raw: &str, unit_override: Option<FrequencyUnit>) -> Result<OpticalDataset, OpticsError> {
    let mut header_unit = None;
    let mut metal = String::new();
    let mut rows = Vec::new();
    let mut row = 0;
    for (lineno, line) in raw.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(u) = comment.strip_prefix("unit:") {
                header_unit = Some(u.parse::<FrequencyUnit>()?);
            } else if metal.is_empty() && !comment.is_empty() {
                metal = comment.to_string();
            }
            continue;
        }
        row += 1;
        let fields: Vec<&str> = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let malformed = |reason: String| OpticsError::MalformedRow {
            row,
            line: lineno + 1,
            reason,
        };
        if fields.len() != 3 {
            return Err(malformed(format!("expected 3 columns (x n k), found {}", fields.len())));
        }
        let mut vals = [0.0; 3];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f.parse::<f64>().map_err(|_| malformed(format!("cannot parse {f:?} as a number")))?;
        }
        if !(vals[0].is_finite() && vals[0] > 0.0) {
            return Err(malformed("frequency or wavelength must be positive".into()));
        }
        if !(vals[1] >= 0.0 && vals[2] >= 0.0) {
            return Err(malformed("n and k must be non-negative".into()));
        }
        rows.push((row, lineno + 1, vals));
    }
    if rows.is_empty() {
        return Err(OpticsError::EmptyTable);
    }
    let unit = unit_override.or(header_unit).ok_or(OpticsError::MissingUnit)?;
    let points = rows
        .iter()
        .map(|(_, _, v)| OpticalPoint {
            omega: unit.to_omega(v[0]),
            n: v[1],
            k: v[2],
        })
        .collect();
    OpticalDataset::new(points, metal, format!("optical table ({unit})"))
}

/// Drude model parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrudeParameters {
    pub omega_p: f64,
    pub gamma: f64,
}

impl DrudeParameters {
    pub const GOLD: Self = Self {
        omega_p: 1.37e16,
        gamma: 5.3e13,
    };

    pub fn new(omega_p: f64, gamma: f64) -> Result<Self, OpticsError> {
        if !(omega_p > 0.0 && omega_p.is_finite() && gamma >= 0.0 && gamma.is_finite()) {
            return Err(OpticsError::InvalidDrude { omega_p, gamma });
        }
        Ok(Self { omega_p, gamma })
    }
}

impl Default for DrudeParameters {
    fn default() -> Self {
        Self::GOLD
    }
}

fn check_xi(xi: f64) -> Result<(), OpticsError> {
    if xi > 0.0 && xi.is_finite() {
        Ok(())
    } else {
        Err(OpticsError::NonPositiveFrequency(xi))
    }
}

pub fn drude_permittivity(drude: DrudeParameters, xi: f64) -> Result<f64, OpticsError> {
    check_xi(xi)?;
    Ok(1.0 + drude.omega_p * drude.omega_p / (xi * (xi + drude.gamma)))
}

pub fn plasma_permittivity(omega_p: f64, xi: f64) -> Result<f64, OpticsError> {
    check_xi(xi)?;
    Ok(1.0 + omega_p * omega_p / (xi * xi))
}

/// Z = 1/sqrt(eps).
pub fn leontovich_impedance(epsilon: f64) -> Result<f64, OpticsError> {
    if !(epsilon >= 1.0) {
        return Err(OpticsError::PermittivityBelowOne(epsilon));
    }
    Ok(1.0 / epsilon.sqrt())
}

/// eps(i xi) from the dispersion relation over tabulated Im eps with a
/// Drude extension below the table and zero above it.
pub fn permittivity_imag_axis(dataset: &OpticalDataset, drude: DrudeParameters, xi: f64) -> Result<f64, OpticsError> {
    permittivity_imag_axis_with(dataset, drude, xi, Tolerance::default())
}

pub fn permittivity_imag_axis_with(
    dataset: &OpticalDataset,
    drude: DrudeParameters,
    xi: f64,
    tol: Tolerance,
) -> Result<f64, OpticsError> {
    check_xi(xi)?;
    let qerr = |source| OpticsError::Quadrature { xi, source };
    let xi2 = xi * xi;

    // Tabulated part, integrated per segment in u = ln(omega):
    // omega * Im eps / (omega^2 + xi^2) d omega = omega^2 Im eps / (omega^2 + xi^2) du
    let pts = dataset.points();
    let u_min = pts[0].omega.ln();
    let u_max = pts[pts.len() - 1].omega.ln();
    let mut breaks: Vec<f64> = pts.iter().map(|p| p.omega.ln()).collect();
    let u_xi = xi.ln();
    if u_xi > u_min && u_xi < u_max {
        let pos = breaks.partition_point(|&u| u < u_xi);
        if breaks[pos] != u_xi {
            breaks.insert(pos, u_xi);
        }
    }
    let table = quad::integrate_panels(
        |u: f64| {
            let w = u.exp();
            let im = dataset.im_epsilon_at(w.clamp(pts[0].omega, pts[pts.len() - 1].omega)).unwrap_or(0.0);
            w * w * im / (w * w + xi2)
        },
        &breaks,
        tol,
    )
    .map_err(qerr)?;

    // Drude extension below the table.
    let low = drude_low_frequency_part(drude, xi, pts[0].omega, tol).map_err(qerr)?;

    let eps = 1.0 + (2.0 / PI) * (table.value + low);
    if !(eps >= 1.0) {
        return Err(OpticsError::PermittivityBelowOne(eps));
    }
    Ok(eps)
}

// int_0^{omega_lo} omega * Im eps_D / (omega^2 + xi^2) d omega
fn drude_low_frequency_part(drude: DrudeParameters, xi: f64, omega_lo: f64, tol: Tolerance) -> Result<f64, QuadError> {
    let wp2 = drude.omega_p * drude.omega_p;
    let g = drude.gamma;
    if wp2 == 0.0 {
        return Ok(0.0);
    }
    if g == 0.0 {
        // Plasma limit: the delta function at omega = 0 carries the whole
        // weight, giving (pi/2) omega_p^2 / xi^2.
        return Ok(0.5 * PI * wp2 / (xi * xi));
    }
    // The integrand wp2*g / ((w^2+g^2)(w^2+xi^2)) has a closed form away from
    // xi = gamma, where it loses digits.
    if (xi - g).abs() > 1e-3 * xi.max(g) {
        let w = omega_lo;
        return Ok(wp2 * g / (xi * xi - g * g) * ((w / g).atan() / g - (w / xi).atan() / xi));
    }
    let mut breaks = vec![0.0];
    for b in [g.min(xi), g.max(xi)] {
        if b < omega_lo && b > *breaks.last().unwrap() {
            breaks.push(b);
        }
    }
    breaks.push(omega_lo);
    quad::integrate_panels(|w: f64| wp2 * g / ((w * w + g * g) * (w * w + xi * xi)), &breaks, tol).map(|r| r.value)
}

/// Declared behaviour of a permittivity model as xi -> 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroFrequencyBehavior {
    DrudeLike,
    PlasmaLike,
    Finite,
}

/// A dielectric permittivity on the imaginary frequency axis.
pub trait Permittivity: Send + Sync + fmt::Debug {
    fn epsilon(&self, xi: f64) -> Result<f64, OpticsError>;
    fn zero_frequency(&self) -> ZeroFrequencyBehavior;
}

pub type PermittivityFn = Arc<dyn Permittivity>;

#[derive(Debug, Clone, Copy)]
pub struct Drude(pub DrudeParameters);

impl Permittivity for Drude {
    fn epsilon(&self, xi: f64) -> Result<f64, OpticsError> {
        drude_permittivity(self.0, xi)
    }

    fn zero_frequency(&self) -> ZeroFrequencyBehavior {
        if self.0.gamma > 0.0 {
            ZeroFrequencyBehavior::DrudeLike
        } else {
            ZeroFrequencyBehavior::PlasmaLike
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Plasma {
    pub omega_p: f64,
}

impl Permittivity for Plasma {
    fn epsilon(&self, xi: f64) -> Result<f64, OpticsError> {
        plasma_permittivity(self.omega_p, xi)
    }

    fn zero_frequency(&self) -> ZeroFrequencyBehavior {
        ZeroFrequencyBehavior::PlasmaLike
    }
}

/// Frequency-independent permittivity.
#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl Permittivity for Constant {
    fn epsilon(&self, xi: f64) -> Result<f64, OpticsError> {
        check_xi(xi)?;
        if !(self.0 >= 1.0) {
            return Err(OpticsError::PermittivityBelowOne(self.0));
        }
        Ok(self.0)
    }

    fn zero_frequency(&self) -> ZeroFrequencyBehavior {
        ZeroFrequencyBehavior::Finite
    }
}

/// Permittivity from an optical table via the dispersion relation, memoized
/// per frequency.
#[derive(Debug)]
pub struct Tabulated {
    dataset: OpticalDataset,
    drude: DrudeParameters,
    tol: Tolerance,
    cache: Mutex<HashMap<u64, f64>>,
}

impl Tabulated {
    pub fn new(dataset: OpticalDataset, drude: DrudeParameters) -> Self {
        Self::with_tolerance(dataset, drude, Tolerance::default())
    }

    pub fn with_tolerance(dataset: OpticalDataset, drude: DrudeParameters, tol: Tolerance) -> Self {
        Self {
            dataset,
            drude,
            tol,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn dataset(&self) -> &OpticalDataset {
        &self.dataset
    }

    pub fn drude(&self) -> DrudeParameters {
        self.drude
    }
}

impl Permittivity for Tabulated {
    fn epsilon(&self, xi: f64) -> Result<f64, OpticsError> {
        let key = xi.to_bits();
        if let Some(&v) = self.cache.lock().expect("permittivity cache poisoned").get(&key) {
            return Ok(v);
        }
        let v = permittivity_imag_axis_with(&self.dataset, self.drude, xi, self.tol)?;
        self.cache.lock().expect("permittivity cache poisoned").insert(key, v);
        Ok(v)
    }

    fn zero_frequency(&self) -> ZeroFrequencyBehavior {
        if self.drude.gamma > 0.0 {
            ZeroFrequencyBehavior::DrudeLike
        } else {
            ZeroFrequencyBehavior::PlasmaLike
        }
    }
}

/// Log-spaced angular frequencies, handy for synthetic tables.
pub fn log_grid(omega_min: f64, omega_max: f64, n: usize) -> Vec<f64> {
    let (a, b) = (omega_min.ln(), omega_max.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}
