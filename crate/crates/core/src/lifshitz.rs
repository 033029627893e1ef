//! Finite-temperature Lifshitz pressure and free energy between two
//! identical half-spaces.
//!
//! The transverse-momentum integral is taken over `y = 2 q_l z`, which makes
//! the integrand decay like `e^{-y}` for every Matsubara index and
//! separation. Matsubara terms are evaluated in parallel and summed in index
//! order, so results do not depend on scheduling.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::constants::{C, HBAR, K_B};
use crate::optics::{leontovich_impedance, OpticsError, PermittivityFn};
use crate::quad::{self, CompensatedSum, QuadError, Tolerance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LifshitzError {
    #[error("separation must be positive, got {0:e} m")]
    InvalidSeparation(f64),
    #[error("invalid thermal state: {0}")]
    InvalidState(String),
    #[error("{0} model requires a permittivity")]
    MissingPermittivity(ReflectionKind),
    #[error("plasma frequency must be positive for the {0} model")]
    MissingPlasmaFrequency(ReflectionKind),
    #[error("transverse wave number must be positive, got {0:e}")]
    InvalidWaveNumber(f64),
    #[error("Matsubara index {l}: {source}")]
    Optics {
        l: usize,
        #[source]
        source: OpticsError,
    },
    #[error("Matsubara index {l}: {source}")]
    Quadrature {
        l: usize,
        #[source]
        source: QuadError,
    },
    #[error("Matsubara sum truncated at l_max = {l_max}: tail bound {tail:e} exceeds tolerance on value {value:e}")]
    TruncationTail { l_max: usize, tail: f64, value: f64 },
    #[error("finite-difference step {step} K does not fit below T = {temperature} K")]
    StepUnderflow { temperature: f64, step: f64 },
    #[error("temperatures must be positive and strictly descending")]
    TemperatureOrder,
    #[error("pressure curve: {0}")]
    Curve(String),
    #[error("unknown reflection model {0:?}")]
    UnknownKind(String),
}

/// Squared reflection coefficient with its complement, kept separately to
/// avoid cancellation when `r^2` is close to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rsq {
    pub r2: f64,
    pub one_minus: f64,
}

impl Rsq {
    pub const PERFECT: Self = Self { r2: 1.0, one_minus: 0.0 };
    pub const NONE: Self = Self { r2: 0.0, one_minus: 1.0 };

    /// `r = (a - b) / (a + b)` for non-negative `a`, `b`.
    fn from_ratio(a: f64, b: f64) -> Self {
        let s = a + b;
        if s == 0.0 || !s.is_finite() {
            return Self::PERFECT;
        }
        let r = (a - b) / s;
        Self {
            r2: r * r,
            one_minus: (4.0 * a * b / (s * s)).clamp(0.0, 1.0),
        }
    }

    // 1 - r^2 e^{-y}, computed without cancellation.
    #[inline]
    fn denominator(&self, expm1_neg_y: f64) -> f64 {
        self.one_minus - self.r2 * expm1_neg_y
    }

    #[inline]
    fn log_one_minus(&self, y: f64, expm1_neg_y: f64) -> f64 {
        let a = self.r2 * (-y).exp();
        if a < 0.5 {
            (-a).ln_1p()
        } else {
            self.denominator(expm1_neg_y).ln()
        }
    }
}

/// Reflection coefficients at one Matsubara frequency, as a function of the
/// transverse wave number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficients {
    /// Independent of the transverse wave number.
    Fixed { par: Rsq, perp: Rsq },
    /// Leontovich extrapolation to zero frequency.
    ImpedanceZero { omega_p: f64 },
    /// Plasma-model zero-frequency limit.
    PlasmaZero { omega_p: f64 },
    /// Leontovich impedance at a nonzero Matsubara frequency.
    Leontovich { xi: f64, z: f64 },
    /// Polarization-dependent impedances with the mass-shell substitution.
    ExactImpedance { xi: f64, eps: f64 },
    /// Fresnel coefficients of a local dielectric half-space.
    Dielectric { xi: f64, eps: f64 },
}

impl Coefficients {
    /// `(r_par^2, r_perp^2)` at transverse wave number `k` with
    /// `q = sqrt(k^2 + xi^2/c^2)`.
    pub fn rsq(&self, k: f64, q: f64) -> (Rsq, Rsq) {
        match *self {
            Self::Fixed { par, perp } => (par, perp),
            Self::ImpedanceZero { omega_p } => (Rsq::PERFECT, Rsq::from_ratio(C * k, omega_p)),
            Self::PlasmaZero { omega_p } => {
                let kp = k.hypot(omega_p / C);
                (Rsq::PERFECT, Rsq::from_ratio(kp, k))
            }
            Self::Leontovich { xi, z } => (Rsq::from_ratio(z * xi, C * q), Rsq::from_ratio(z * C * q, xi)),
            Self::ExactImpedance { xi, eps } => {
                let z = 1.0 / eps.sqrt();
                let s2 = if q > 0.0 { (k / q).powi(2) } else { 0.0 };
                let root = (1.0 - s2 / eps).sqrt();
                let (z_par, z_perp) = (z * root, z / root);
                (Rsq::from_ratio(z_par * xi, C * q), Rsq::from_ratio(z_perp * C * q, xi))
            }
            Self::Dielectric { xi, eps } => {
                let kl = k.hypot(eps.sqrt() * xi / C);
                (Rsq::from_ratio(kl, eps * q), Rsq::from_ratio(kl, q))
            }
        }
    }
}

/// Anything that can supply reflection coefficients per Matsubara index.
pub trait Reflectivity: Send + Sync {
    fn coefficients(&self, l: usize, xi: f64) -> Result<Coefficients, LifshitzError>;

    fn tag(&self) -> String {
        "custom".to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReflectionKind {
    Impedance,
    ExactImpedance,
    LifshitzDrude,
    LifshitzSchwinger,
    LifshitzPlasma,
    IdealMetal,
}

impl ReflectionKind {
    pub const ALL: [Self; 6] = [
        Self::Impedance,
        Self::ExactImpedance,
        Self::LifshitzDrude,
        Self::LifshitzSchwinger,
        Self::LifshitzPlasma,
        Self::IdealMetal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Impedance => "impedance",
            Self::ExactImpedance => "exact_impedance",
            Self::LifshitzDrude => "lifshitz_drude",
            Self::LifshitzSchwinger => "lifshitz_schwinger",
            Self::LifshitzPlasma => "lifshitz_plasma",
            Self::IdealMetal => "ideal_metal",
        }
    }
}

impl fmt::Display for ReflectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReflectionKind {
    type Err = LifshitzError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.trim().to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        Self::ALL
            .into_iter()
            .find(|k| k.name().replace('_', "") == norm)
            .ok_or_else(|| LifshitzError::UnknownKind(s.to_string()))
    }
}

/// A named prescription for the reflection coefficients, including its
/// zero-frequency rule.
#[derive(Debug, Clone)]
pub struct ReflectionModel {
    kind: ReflectionKind,
    permittivity: Option<PermittivityFn>,
    omega_p: f64,
}

impl ReflectionModel {
    pub fn new(kind: ReflectionKind, permittivity: PermittivityFn, omega_p: f64) -> Result<Self, LifshitzError> {
        if matches!(kind, ReflectionKind::Impedance | ReflectionKind::ExactImpedance | ReflectionKind::LifshitzPlasma)
            && !(omega_p > 0.0 && omega_p.is_finite())
        {
            return Err(LifshitzError::MissingPlasmaFrequency(kind));
        }
        Ok(Self {
            kind,
            permittivity: Some(permittivity),
            omega_p,
        })
    }

    pub fn ideal_metal() -> Self {
        Self {
            kind: ReflectionKind::IdealMetal,
            permittivity: None,
            omega_p: f64::INFINITY,
        }
    }

    pub fn kind(&self) -> ReflectionKind {
        self.kind
    }

    pub fn omega_p(&self) -> f64 {
        self.omega_p
    }

    pub fn permittivity(&self) -> Option<&PermittivityFn> {
        self.permittivity.as_ref()
    }

    fn epsilon(&self, l: usize, xi: f64) -> Result<f64, LifshitzError> {
        let p = self.permittivity.as_ref().ok_or(LifshitzError::MissingPermittivity(self.kind))?;
        let eps = p.epsilon(xi).map_err(|source| LifshitzError::Optics { l, source })?;
        if !(eps >= 1.0) {
            return Err(LifshitzError::Optics {
                l,
                source: OpticsError::PermittivityBelowOne(eps),
            });
        }
        Ok(eps)
    }
}

impl Reflectivity for ReflectionModel {
    fn coefficients(&self, l: usize, xi: f64) -> Result<Coefficients, LifshitzError> {
        use ReflectionKind::*;
        let perfect = Coefficients::Fixed {
            par: Rsq::PERFECT,
            perp: Rsq::PERFECT,
        };
        if self.kind == IdealMetal {
            return Ok(perfect);
        }
        if l == 0 {
            return Ok(match self.kind {
                Impedance | ExactImpedance => Coefficients::ImpedanceZero { omega_p: self.omega_p },
                LifshitzDrude => Coefficients::Fixed {
                    par: Rsq::PERFECT,
                    perp: Rsq::NONE,
                },
                LifshitzSchwinger => perfect,
                LifshitzPlasma => Coefficients::PlasmaZero { omega_p: self.omega_p },
                IdealMetal => unreachable!(),
            });
        }
        let eps = self.epsilon(l, xi)?;
        Ok(match self.kind {
            Impedance => Coefficients::Leontovich {
                xi,
                z: leontovich_impedance(eps).map_err(|source| LifshitzError::Optics { l, source })?,
            },
            ExactImpedance => Coefficients::ExactImpedance { xi, eps },
            LifshitzDrude | LifshitzSchwinger | LifshitzPlasma => Coefficients::Dielectric { xi, eps },
            IdealMetal => unreachable!(),
        })
    }

    fn tag(&self) -> String {
        self.kind.name().to_string()
    }
}

/// `(r_par^2, r_perp^2)` for a model at Matsubara index `l`.
pub fn reflection_sq(model: &dyn Reflectivity, xi_l: f64, k_perp: f64, l: usize) -> Result<(f64, f64), LifshitzError> {
    if !(k_perp > 0.0 && k_perp.is_finite()) {
        return Err(LifshitzError::InvalidWaveNumber(k_perp));
    }
    let q = k_perp.hypot(xi_l / C);
    let (p, s) = model.coefficients(l, xi_l)?.rsq(k_perp, q);
    Ok((p.r2, s.r2))
}

pub fn matsubara_frequency(temperature: f64, l: usize) -> f64 {
    2.0 * PI * K_B * temperature * l as f64 / HBAR
}

/// Temperature, Matsubara truncation and quadrature tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalState {
    pub temperature: f64,
    /// `None` picks the truncation from the separation and tolerance.
    pub l_max: Option<usize>,
    pub quad_tol: f64,
}

impl ThermalState {
    pub fn new(temperature: f64, l_max: Option<usize>, quad_tol: f64) -> Result<Self, LifshitzError> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(LifshitzError::InvalidState(format!("temperature must be positive, got {temperature}")));
        }
        if l_max == Some(0) {
            return Err(LifshitzError::InvalidState("l_max must be at least 1".into()));
        }
        if !(quad_tol > 0.0 && quad_tol < 1.0) {
            return Err(LifshitzError::InvalidState(format!("quad_tol must lie in (0, 1), got {quad_tol}")));
        }
        Ok(Self {
            temperature,
            l_max,
            quad_tol,
        })
    }

    pub fn room() -> Self {
        Self {
            temperature: 300.0,
            l_max: None,
            quad_tol: 1e-9,
        }
    }

    pub fn with_temperature(self, temperature: f64) -> Result<Self, LifshitzError> {
        Self::new(temperature, self.l_max, self.quad_tol)
    }

    /// Matsubara cutoff in units of `y = 2 xi z / c`.
    fn y_cut(&self) -> f64 {
        (1.0 / self.quad_tol).ln().max(0.0) + 10.0
    }

    /// Truncation index used at separation `z`.
    pub fn effective_l_max(&self, z: f64) -> usize {
        self.l_max.unwrap_or_else(|| {
            let dy = 2.0 * matsubara_frequency(self.temperature, 1) * z / C;
            (self.y_cut().max(30.0) / dy).ceil().max(1.0) as usize
        })
    }
}

/// A Lifshitz result with its error accounting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifshitzResult {
    pub value: f64,
    /// Bound on the neglected Matsubara terms, same units as `value`.
    pub tail_bound: f64,
    /// Summed quadrature error estimates, same units as `value`.
    pub quad_error: f64,
    pub l_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Quantity {
    Pressure,
    FreeEnergy,
}

const PANELS: [f64; 9] = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];

// Bound on int_Y^inf of the per-term integrand for |r|^2 <= 1.
fn integral_tail(quantity: Quantity, y: f64) -> f64 {
    let d = -(-y).exp_m1();
    match quantity {
        Quantity::Pressure => 2.0 * (y * y + 2.0 * y + 2.0) * (-y).exp() / d,
        Quantity::FreeEnergy => 2.0 * (y + 1.0) * (-y).exp() / d,
    }
}

// Bound on the sum of all terms with index > l_max, in integral units.
fn matsubara_tail(quantity: Quantity, y_last: f64, dy: f64) -> f64 {
    let y = y_last + dy;
    let d = -(-y).exp_m1();
    let poly = match quantity {
        Quantity::Pressure => y * y + 4.0 * y + 6.0,
        Quantity::FreeEnergy => y + 2.0,
    };
    2.0 * poly * (-y).exp() / (d * dy)
}

fn matsubara_term(
    coef: &Coefficients,
    y_l: f64,
    z: f64,
    quantity: Quantity,
    tol: Tolerance,
    l: usize,
) -> Result<(f64, f64), LifshitzError> {
    let inv2z = 0.5 / z;
    let integrand = |t: f64| {
        let y = y_l + t;
        let k = (t * (t + 2.0 * y_l)).sqrt() * inv2z;
        let q = y * inv2z;
        let (p, s) = coef.rsq(k, q);
        let em1 = (-y).exp_m1();
        match quantity {
            Quantity::Pressure => {
                let e = (-y).exp();
                y * y * (p.r2 * e / p.denominator(em1) + s.r2 * e / s.denominator(em1))
            }
            Quantity::FreeEnergy => y * (p.log_one_minus(y, em1) + s.log_one_minus(y, em1)),
        }
    };
    let r = quad::integrate_panels(integrand, &PANELS, tol).map_err(|source| LifshitzError::Quadrature { l, source })?;
    let tail = integral_tail(quantity, y_l + PANELS[PANELS.len() - 1]);
    Ok((r.value, r.error + tail))
}

fn lifshitz_sum(model: &dyn Reflectivity, z: f64, state: &ThermalState, quantity: Quantity) -> Result<LifshitzResult, LifshitzError> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(LifshitzError::InvalidSeparation(z));
    }
    let state = ThermalState::new(state.temperature, state.l_max, state.quad_tol)?;
    let l_max = state.effective_l_max(z);
    let xi1 = matsubara_frequency(state.temperature, 1);
    let dy = 2.0 * xi1 * z / C;
    let tol = Tolerance::new(0.0, state.quad_tol);

    let terms: Vec<(f64, f64)> = (0..=l_max)
        .into_par_iter()
        .map(|l| {
            let xi = xi1 * l as f64;
            let coef = model.coefficients(l, xi)?;
            let (v, e) = matsubara_term(&coef, dy * l as f64, z, quantity, tol, l)?;
            let w = if l == 0 { 0.5 } else { 1.0 };
            Ok((w * v, w * e))
        })
        .collect::<Result<_, LifshitzError>>()?;

    let sum: CompensatedSum = terms.iter().map(|t| t.0).collect();
    let err: f64 = terms.iter().map(|t| t.1).sum();
    let total = sum.total();
    let tail = matsubara_tail(quantity, dy * l_max as f64, dy);

    let prefactor = match quantity {
        Quantity::Pressure => -K_B * state.temperature / (8.0 * PI * z.powi(3)),
        Quantity::FreeEnergy => K_B * state.temperature / (8.0 * PI * z * z),
    };
    if state.l_max.is_some() && tail > state.quad_tol * total.abs() {
        return Err(LifshitzError::TruncationTail {
            l_max,
            tail: tail * prefactor.abs(),
            value: total * prefactor,
        });
    }
    Ok(LifshitzResult {
        value: prefactor * total,
        tail_bound: prefactor.abs() * tail,
        quad_error: prefactor.abs() * err,
        l_max,
    })
}

/// Casimir pressure in Pa; negative means attraction.
pub fn casimir_pressure(model: &dyn Reflectivity, z: f64, state: &ThermalState) -> Result<f64, LifshitzError> {
    casimir_pressure_detailed(model, z, state).map(|r| r.value)
}

pub fn casimir_pressure_detailed(model: &dyn Reflectivity, z: f64, state: &ThermalState) -> Result<LifshitzResult, LifshitzError> {
    lifshitz_sum(model, z, state, Quantity::Pressure)
}

/// Casimir free energy per unit area in J/m^2.
pub fn casimir_free_energy(model: &dyn Reflectivity, z: f64, state: &ThermalState) -> Result<f64, LifshitzError> {
    casimir_free_energy_detailed(model, z, state).map(|r| r.value)
}

pub fn casimir_free_energy_detailed(model: &dyn Reflectivity, z: f64, state: &ThermalState) -> Result<LifshitzResult, LifshitzError> {
    lifshitz_sum(model, z, state, Quantity::FreeEnergy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyPoint {
    pub temperature: f64,
    /// J / (m^2 K)
    pub entropy: f64,
}

/// Finite-difference step used by [`entropy_probe`] at temperature `t`.
pub fn entropy_step(t: f64) -> f64 {
    (0.02 * t).max(0.05)
}

/// `S(T) = -dF/dT` by central differences with one Richardson step.
pub fn entropy_probe(
    model: &dyn Reflectivity,
    z: f64,
    temperatures: &[f64],
    quad_tol: f64,
) -> Result<Vec<EntropyPoint>, LifshitzError> {
    if temperatures.is_empty()
        || temperatures.iter().any(|&t| !(t > 0.0 && t.is_finite()))
        || temperatures.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(LifshitzError::TemperatureOrder);
    }
    temperatures
        .iter()
        .map(|&t| {
            let h = entropy_step(t);
            if t - h <= 0.0 {
                return Err(LifshitzError::StepUnderflow { temperature: t, step: h });
            }
            let f = |temp: f64| casimir_free_energy(model, z, &ThermalState::new(temp, None, quad_tol)?);
            let d1 = (f(t + h)? - f(t - h)?) / (2.0 * h);
            let d2 = (f(t + 0.5 * h)? - f(t - 0.5 * h)?) / h;
            Ok(EntropyPoint {
                temperature: t,
                entropy: -(4.0 * d2 - d1) / 3.0,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressurePoint {
    pub z: f64,
    pub pressure: f64,
    pub rel_theory_error: f64,
}

/// Pressure against separation for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureCurve {
    entries: Vec<PressurePoint>,
    pub model_tag: String,
}

impl PressureCurve {
    pub fn new(entries: Vec<PressurePoint>, model_tag: impl Into<String>) -> Result<Self, LifshitzError> {
        if entries.is_empty() {
            return Err(LifshitzError::Curve("no entries".into()));
        }
        if entries.windows(2).any(|w| w[1].z <= w[0].z) {
            return Err(LifshitzError::Curve("separations must be strictly increasing".into()));
        }
        if let Some(p) = entries.iter().find(|p| !(p.rel_theory_error >= 0.0) || !p.pressure.is_finite()) {
            return Err(LifshitzError::Curve(format!("invalid entry at z = {:e} m", p.z)));
        }
        Ok(Self {
            entries,
            model_tag: model_tag.into(),
        })
    }

    pub fn entries(&self) -> &[PressurePoint] {
        &self.entries
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.entries[0].z, self.entries[self.entries.len() - 1].z)
    }

    fn bracket(&self, z: f64) -> Option<(&PressurePoint, &PressurePoint)> {
        let (lo, hi) = self.z_range();
        if !(z >= lo && z <= hi) {
            return None;
        }
        if self.entries.len() == 1 {
            return Some((&self.entries[0], &self.entries[0]));
        }
        let i = self.entries.partition_point(|p| p.z <= z).clamp(1, self.entries.len() - 1);
        Some((&self.entries[i - 1], &self.entries[i]))
    }

    /// Pressure at `z`, interpolated log-log between same-sign neighbours.
    pub fn pressure_at(&self, z: f64) -> Option<f64> {
        let (a, b) = self.bracket(z)?;
        if a.z == b.z || z == a.z {
            return Some(a.pressure);
        }
        if z == b.z {
            return Some(b.pressure);
        }
        if a.pressure * b.pressure > 0.0 {
            let t = (z / a.z).ln() / (b.z / a.z).ln();
            let la = a.pressure.abs().ln();
            let lb = b.pressure.abs().ln();
            Some(a.pressure.signum() * (la + t * (lb - la)).exp())
        } else {
            let t = (z - a.z) / (b.z - a.z);
            Some(a.pressure + t * (b.pressure - a.pressure))
        }
    }

    pub fn rel_error_at(&self, z: f64) -> Option<f64> {
        let (a, b) = self.bracket(z)?;
        if a.z == b.z {
            return Some(a.rel_theory_error);
        }
        let t = (z - a.z) / (b.z - a.z);
        Some(a.rel_theory_error + t * (b.rel_theory_error - a.rel_theory_error))
    }
}

/// Evaluates `model` at every separation in `zs` (in parallel).
pub fn pressure_curve<F>(model: &dyn Reflectivity, zs: &[f64], state: &ThermalState, rel_error: F) -> Result<PressureCurve, LifshitzError>
where
    F: Fn(f64) -> f64 + Sync,
{
    let entries = zs
        .par_iter()
        .map(|&z| {
            Ok(PressurePoint {
                z,
                pressure: casimir_pressure(model, z, state)?,
                rel_theory_error: rel_error(z),
            })
        })
        .collect::<Result<Vec<_>, LifshitzError>>()?;
    PressureCurve::new(entries, model.tag())
}
