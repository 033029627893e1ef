//! Yukawa-type corrections to Newtonian gravity between layered plates and
//! the constraints a confidence band places on them.

use std::f64::consts::PI;

use log::warn;
use rayon::prelude::*;
use thiserror::Error;

use crate::constants::G;
use crate::metrology::{ConfidenceBand, Confidence};
use crate::quad::{self, Tolerance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HypforceError {
    #[error("interaction range must be positive, got {0:e} m")]
    InvalidRange(f64),
    #[error("distance must be positive, got {0:e} m")]
    InvalidDistance(f64),
    #[error("stack {label:?}: {reason}")]
    MalformedStack { label: String, reason: String },
    #[error("stack file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("Yukawa pressure vanishes at lambda = {0:e} m")]
    DegeneratePressure(f64),
    #[error("confidence band is empty")]
    EmptyBand,
    #[error("oracle quadrature failed: {0}")]
    Quadrature(String),
}

/// Range beyond which the plate-size approximation is not trusted (L / 5
/// with L = 3.5 um).
pub const LAMBDA_VALIDITY_LIMIT: f64 = 3.5e-6 / 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YukawaParams {
    pub alpha_g: f64,
    pub lambda: f64,
}

impl YukawaParams {
    pub fn new(alpha_g: f64, lambda: f64) -> Result<Self, HypforceError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(HypforceError::InvalidRange(lambda));
        }
        Ok(Self { alpha_g, lambda })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layer {
    /// kg / m^3
    pub density: f64,
    /// m; `None` for the semi-infinite substrate.
    pub thickness: Option<f64>,
}

/// Layers from the facing surface inward, ending in a semi-infinite
/// substrate.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    layers: Vec<Layer>,
    pub label: String,
}

pub mod density {
    pub const AU: f64 = 19.28e3;
    pub const TI: f64 = 4.51e3;
    pub const AL2O3: f64 = 4.1e3;
    pub const PT: f64 = 21.47e3;
    pub const SI: f64 = 2.33e3;
}

impl LayerStack {
    pub fn new(layers: Vec<Layer>, label: impl Into<String>) -> Result<Self, HypforceError> {
        let label = label.into();
        let bad = |reason: &str| HypforceError::MalformedStack {
            label: label.clone(),
            reason: reason.to_string(),
        };
        if layers.is_empty() {
            return Err(bad("no layers"));
        }
        if layers.iter().any(|l| !(l.density > 0.0 && l.density.is_finite())) {
            return Err(bad("densities must be positive"));
        }
        let n = layers.len();
        for (i, l) in layers.iter().enumerate() {
            match (i + 1 == n, l.thickness) {
                (true, None) => {}
                (true, Some(_)) => return Err(bad("last layer must be semi-infinite")),
                (false, None) => return Err(bad("only the last layer may be semi-infinite")),
                (false, Some(t)) if !(t > 0.0 && t.is_finite()) => return Err(bad("thicknesses must be positive")),
                _ => {}
            }
        }
        Ok(Self { layers, label })
    }

    pub fn homogeneous(density: f64, label: impl Into<String>) -> Result<Self, HypforceError> {
        Self::new(vec![Layer { density, thickness: None }], label)
    }

    /// Au 200 nm / Ti 10 nm / sapphire.
    pub fn measured_sphere() -> Self {
        Self::coated(&[(density::AU, 200e-9), (density::TI, 10e-9)], density::AL2O3, "sphere")
    }

    /// Au 150 nm / Pt 10 nm / Si.
    pub fn measured_plate() -> Self {
        Self::coated(&[(density::AU, 150e-9), (density::PT, 10e-9)], density::SI, "plate")
    }

    fn coated(coatings: &[(f64, f64)], substrate: f64, label: &str) -> Self {
        let mut layers: Vec<Layer> = coatings
            .iter()
            .map(|&(density, t)| Layer {
                density,
                thickness: Some(t),
            })
            .collect();
        layers.push(Layer {
            density: substrate,
            thickness: None,
        });
        Self::new(layers, label).expect("valid built-in stack")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Stack with layer `i` (finite) removed.
    pub fn without_layer(&self, i: usize) -> Result<Self, HypforceError> {
        let mut layers = self.layers.clone();
        if i + 1 >= layers.len() {
            return Err(HypforceError::MalformedStack {
                label: self.label.clone(),
                reason: "cannot remove the substrate".into(),
            });
        }
        layers.remove(i);
        Self::new(layers, self.label.clone())
    }

    /// `Phi = rho_1 - sum_k (rho_k - rho_{k+1}) exp(-D_k / lambda)` with
    /// `D_k` the depth of the k-th interface.
    pub fn phi(&self, lambda: f64) -> f64 {
        let mut phi = self.layers[0].density;
        let mut depth = 0.0;
        for w in self.layers.windows(2) {
            depth += w[0].thickness.expect("finite layer");
            phi -= (w[0].density - w[1].density) * (-depth / lambda).exp();
        }
        phi
    }

    /// Density at depth `xi` below the surface.
    pub fn density_at(&self, xi: f64) -> f64 {
        let mut depth = 0.0;
        for l in &self.layers {
            match l.thickness {
                Some(t) if xi >= depth + t => depth += t,
                _ => return l.density,
            }
        }
        unreachable!("terminal layer is semi-infinite")
    }

    fn interfaces(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut depth = 0.0;
        for l in &self.layers {
            if let Some(t) = l.thickness {
                depth += t;
                out.push(depth);
            }
        }
        out
    }
}

/// Parses `[label]` sections of `density_kg_m3 thickness_nm` rows, the last
/// row of each section using `inf` for the substrate.
pub fn parse_stacks(raw: &str) -> Result<Vec<LayerStack>, HypforceError> {
    let mut out = Vec::new();
    let mut current: Option<(String, Vec<Layer>)> = None;
    let flush = |cur: Option<(String, Vec<Layer>)>, out: &mut Vec<LayerStack>| -> Result<(), HypforceError> {
        if let Some((label, layers)) = cur {
            out.push(LayerStack::new(layers, label)?);
        }
        Ok(())
    };
    for (lineno, line) in raw.lines().enumerate() {
        let t = line.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        let bad = |reason: &str| HypforceError::Parse {
            line: lineno + 1,
            reason: reason.to_string(),
        };
        if let Some(name) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            flush(current.take(), &mut out)?;
            current = Some((name.trim().to_string(), Vec::new()));
            continue;
        }
        let (_, layers) = current.as_mut().ok_or_else(|| bad("layer row before any [section]"))?;
        let f: Vec<&str> = t.split_whitespace().collect();
        if f.len() != 2 {
            return Err(bad("expected 'density_kg_m3 thickness_nm'"));
        }
        let density: f64 = f[0].parse().map_err(|_| bad("density is not a number"))?;
        let thickness = if f[1].eq_ignore_ascii_case("inf") {
            None
        } else {
            Some(f[1].parse::<f64>().map_err(|_| bad("thickness is not a number"))? / 1e9)
        };
        layers.push(Layer { density, thickness });
    }
    flush(current, &mut out)?;
    Ok(out)
}

/// `V = -(G m1 m2 / r)(1 + alpha e^{-r/lambda})`.
pub fn yukawa_point_potential(m1: f64, m2: f64, r: f64, params: YukawaParams) -> Result<f64, HypforceError> {
    if !(r > 0.0) {
        return Err(HypforceError::InvalidDistance(r));
    }
    Ok(-(G * m1 * m2 / r) * (1.0 + params.alpha_g * (-r / params.lambda).exp()))
}

/// Closed-form Yukawa pressure between two layered half-spaces.
pub fn yukawa_plate_pressure(a: &LayerStack, b: &LayerStack, z: f64, params: YukawaParams) -> Result<f64, HypforceError> {
    if !(z > 0.0) {
        return Err(HypforceError::InvalidDistance(z));
    }
    let l = params.lambda;
    Ok(-2.0 * PI * G * params.alpha_g * l * l * (-z / l).exp() * a.phi(l) * b.phi(l))
}

/// Brute-force double integral over the depth coordinates of both stacks.
pub fn yukawa_pressure_oracle(a: &LayerStack, b: &LayerStack, z: f64, params: YukawaParams) -> Result<f64, HypforceError> {
    if !(z > 0.0) {
        return Err(HypforceError::InvalidDistance(z));
    }
    if params.alpha_g == 0.0 {
        return Ok(0.0);
    }
    let l = params.lambda;
    let depth_max = l * 1e16f64.ln();
    let breaks = |s: &LayerStack| {
        let mut v = vec![0.0];
        v.extend(s.interfaces().into_iter().filter(|&d| d < depth_max));
        v.push(depth_max);
        v
    };
    let (ba, bb) = (breaks(a), breaks(b));
    let tol = Tolerance::new(0.0, 1e-13);
    let mut inner_err = None;
    let outer = quad::integrate_panels(
        |xa: f64| {
            let inner = quad::integrate_panels(|xb: f64| b.density_at(xb) * (-(z + xa + xb) / l).exp(), &bb, tol);
            match inner {
                Ok(r) => a.density_at(xa) * r.value,
                Err(e) => {
                    inner_err.get_or_insert(e);
                    0.0
                }
            }
        },
        &ba,
        tol,
    )
    .map_err(|e| HypforceError::Quadrature(e.to_string()))?;
    if let Some(e) = inner_err {
        return Err(HypforceError::Quadrature(e.to_string()));
    }
    Ok(-2.0 * PI * G * params.alpha_g * l * outer.value / l)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintPoint {
    pub lambda: f64,
    pub alpha_max: f64,
    pub z_best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintCurve {
    pub entries: Vec<ConstraintPoint>,
}

const COARSE_POINTS: usize = 60;

fn best_separation(band: &ConfidenceBand, a: &LayerStack, b: &LayerStack, lambda: f64) -> Result<ConstraintPoint, HypforceError> {
    let prefactor = 2.0 * PI * G * lambda * lambda * a.phi(lambda) * b.phi(lambda);
    if !(prefactor > 0.0 && prefactor.is_finite()) {
        return Err(HypforceError::DegeneratePressure(lambda));
    }
    let ln_pre = prefactor.ln();
    // ln(half_width / |P(alpha = 1)|), free of underflow in e^{-z/lambda}.
    let objective = |z: f64| band.half_width_at(z).map(|h| h.ln() - ln_pre + z / lambda).unwrap_or(f64::INFINITY);

    let (z0, z1) = band.z_range();
    let grid: Vec<f64> = if z1 > z0 {
        (0..COARSE_POINTS)
            .map(|i| (z0.ln() + (z1 / z0).ln() * i as f64 / (COARSE_POINTS - 1) as f64).exp())
            .map(|z| z.clamp(z0, z1))
            .collect()
    } else {
        vec![z0]
    };
    let vals: Vec<f64> = grid.iter().map(|&z| objective(z)).collect();
    let i = vals
        .iter()
        .enumerate()
        .fold(0, |best, (j, v)| if *v < vals[best] { j } else { best });

    let (mut lo, mut hi) = (grid[i.saturating_sub(1)], grid[(i + 1).min(grid.len() - 1)]);
    let (mut z_best, mut f_best) = (grid[i], vals[i]);
    let bracket = (lo, hi);
    if hi > lo {
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = hi - r * (hi - lo);
        let mut d = lo + r * (hi - lo);
        let (mut fc, mut fd) = (objective(c), objective(d));
        while hi - lo > 1e-6 * z_best {
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - r * (hi - lo);
                fc = objective(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + r * (hi - lo);
                fd = objective(d);
            }
        }
        for (z, f) in [(c, fc), (d, fd)] {
            if f < f_best {
                z_best = z;
                f_best = f;
            }
        }
        // The objective is concave between band nodes, so a node in the
        // bracket can only tie or beat the interior estimate.
        for &(z, _) in band.entries().iter().filter(|e| e.0 >= bracket.0 && e.0 <= bracket.1) {
            let f = objective(z);
            if f <= f_best {
                z_best = z;
                f_best = f;
            }
        }
    }
    Ok(ConstraintPoint {
        lambda,
        alpha_max: f_best.exp(),
        z_best,
    })
}

/// Largest Yukawa strength compatible with the band, for each range.
pub fn constraint_curve(band: &ConfidenceBand, a: &LayerStack, b: &LayerStack, lambdas: &[f64]) -> Result<ConstraintCurve, HypforceError> {
    if band.entries().is_empty() {
        return Err(HypforceError::EmptyBand);
    }
    if let Some(&l) = lambdas.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
        return Err(HypforceError::InvalidRange(l));
    }
    for &l in lambdas.iter().filter(|&&l| l > LAMBDA_VALIDITY_LIMIT) {
        warn!("lambda = {l:e} m exceeds the plate-size validity limit {LAMBDA_VALIDITY_LIMIT:e} m");
    }
    let entries = lambdas
        .par_iter()
        .map(|&l| best_separation(band, a, b, l))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ConstraintCurve { entries })
}

/// Same minimization with a separation-independent half-width `sigma`.
pub fn legacy_rms_constraint(
    sigma: f64,
    a: &LayerStack,
    b: &LayerStack,
    z_grid: &[f64],
    lambdas: &[f64],
) -> Result<ConstraintCurve, HypforceError> {
    let band = ConfidenceBand::uniform(z_grid, sigma, Confidence::P95).map_err(|_| HypforceError::EmptyBand)?;
    constraint_curve(&band, a, b, lambdas)
}
