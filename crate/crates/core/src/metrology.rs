//! Statistical comparison of measurement ensembles with theory.
//!
//! Repeated measurement sets are binned in separation, the random error is
//! estimated per bin and smoothed, systematic and theoretical budgets are
//! combined at a stated confidence, and the resulting band decides whether
//! a model is consistent with the data.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::corrections::SphereGeometry;
use crate::lifshitz::PressureCurve;
use crate::quad::CompensatedSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetrologyError {
    #[error("unknown distribution {0:?} (expected normal, student or uniform)")]
    UnknownDistribution(String),
    #[error("unsupported confidence {0} (expected 0.95 or 0.99)")]
    UnsupportedConfidence(String),
    #[error("invalid error component {label:?}: {reason}")]
    InvalidComponent { label: String, reason: String },
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("outlier detection needs at least 3 sets, got {0}")]
    TooFewSets(usize),
    #[error("no bin has at least two points with a defined variance")]
    AllBinsDegenerate,
    #[error("curves do not overlap: [{a_min:e}, {a_max:e}] vs [{b_min:e}, {b_max:e}] m")]
    DisjointRanges { a_min: f64, a_max: f64, b_min: f64, b_max: f64 },
    #[error("no differences to test")]
    EmptyInput,
    #[error("separation {0:e} m lies outside the confidence band")]
    OutsideBand(f64),
    #[error("separation {0:e} m lies outside the model curve")]
    OutsideCurve(f64),
    #[error("invalid band: {0}")]
    InvalidBand(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Two-sided confidence level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Confidence {
    #[serde(rename = "0.95")]
    P95,
    #[serde(rename = "0.99")]
    P99,
}

impl Confidence {
    pub fn fraction(self) -> f64 {
        match self {
            Self::P95 => 0.95,
            Self::P99 => 0.99,
        }
    }

    /// Two-sided standard-normal quantile.
    pub fn normal_quantile(self) -> f64 {
        match self {
            Self::P95 => 1.959964,
            Self::P99 => 2.575829,
        }
    }

    /// Two-sided Student-t quantile with `dof` degrees of freedom.
    pub fn student_quantile(self, dof: f64) -> f64 {
        let t = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
        t.inverse_cdf(0.5 + 0.5 * self.fraction())
    }
}

impl FromStr for Confidence {
    type Err = MetrologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().trim_end_matches('%') {
            "0.95" | "95" => Ok(Self::P95),
            "0.99" | "99" => Ok(Self::P99),
            other => Err(MetrologyError::UnsupportedConfidence(other.to_string())),
        }
    }
}

impl TryFrom<f64> for Confidence {
    type Error = MetrologyError;

    fn try_from(c: f64) -> Result<Self, Self::Error> {
        if (c - 0.95).abs() < 1e-9 {
            Ok(Self::P95)
        } else if (c - 0.99).abs() < 1e-9 {
            Ok(Self::P99)
        } else {
            Err(MetrologyError::UnsupportedConfidence(c.to_string()))
        }
    }
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.fraction())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "lowercase")]
pub enum Distribution {
    /// Magnitude is the standard deviation.
    Normal,
    /// Magnitude is the scale of a Student-t variable.
    Student { dof: u32 },
    /// Magnitude is the half-range.
    Uniform,
}

impl Distribution {
    pub fn parse(tag: &str, dof: Option<u32>) -> Result<Self, MetrologyError> {
        match tag.trim().to_ascii_lowercase().as_str() {
            "normal" | "gauss" | "gaussian" => Ok(Self::Normal),
            "student" | "t" => Ok(Self::Student { dof: dof.unwrap_or(0) }),
            "uniform" => Ok(Self::Uniform),
            other => Err(MetrologyError::UnknownDistribution(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Magnitude {
    /// Pascal.
    Absolute(f64),
    /// Fraction of |P|.
    Relative(f64),
}

impl Magnitude {
    pub fn at(self, p_abs: f64) -> f64 {
        match self {
            Self::Absolute(a) => a,
            Self::Relative(r) => r * p_abs,
        }
    }

    fn value(self) -> f64 {
        match self {
            Self::Absolute(a) | Self::Relative(a) => a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorComponent {
    pub label: String,
    pub distribution: Distribution,
    pub magnitude: Magnitude,
}

impl ErrorComponent {
    pub fn new(label: impl Into<String>, distribution: Distribution, magnitude: Magnitude) -> Result<Self, MetrologyError> {
        let label = label.into();
        let bad = |reason: &str| MetrologyError::InvalidComponent {
            label: label.clone(),
            reason: reason.to_string(),
        };
        if !(magnitude.value() >= 0.0 && magnitude.value().is_finite()) {
            return Err(bad("magnitude must be finite and non-negative"));
        }
        if let Distribution::Student { dof } = distribution {
            if dof == 0 {
                return Err(bad("Student component needs dof >= 1"));
            }
        }
        Ok(Self {
            label,
            distribution,
            magnitude,
        })
    }

    /// Half-width of this component at `confidence` for a pressure of
    /// magnitude `p_abs`.
    pub fn half_width(&self, p_abs: f64, confidence: Confidence) -> f64 {
        let m = self.magnitude.at(p_abs);
        match self.distribution {
            Distribution::Normal => confidence.normal_quantile() * m,
            Distribution::Student { dof } => confidence.student_quantile(dof as f64) * m,
            Distribution::Uniform => confidence.fraction() * m,
        }
    }

    pub fn is_random(&self) -> bool {
        !matches!(self.distribution, Distribution::Uniform)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub components: Vec<ErrorComponent>,
}

impl ErrorBudget {
    pub fn new(components: Vec<ErrorComponent>) -> Self {
        Self { components }
    }

    pub fn with(mut self, c: ErrorComponent) -> Self {
        self.components.push(c);
        self
    }

    pub fn random(&self) -> impl Iterator<Item = &ErrorComponent> {
        self.components.iter().filter(|c| c.is_random())
    }

    pub fn systematic(&self) -> impl Iterator<Item = &ErrorComponent> {
        self.components.iter().filter(|c| !c.is_random())
    }

    /// Half-widths of the systematic (uniform) components.
    pub fn systematic_half_widths(&self, p_abs: f64, confidence: Confidence) -> Vec<f64> {
        self.systematic().map(|c| c.half_width(p_abs, confidence)).collect()
    }

    /// Standard deviation of the per-point random noise.
    pub fn random_sigma(&self, p_abs: f64) -> f64 {
        self.random()
            .map(|c| {
                let m = c.magnitude.at(p_abs);
                match c.distribution {
                    Distribution::Student { dof } if dof > 2 => m * (dof as f64 / (dof as f64 - 2.0)).sqrt(),
                    _ => m,
                }
            })
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt()
    }
}

/// Combining rule for half-widths already expressed at a common confidence:
/// `min(sum h, 1.1 * sqrt(sum h^2))`.
pub fn combine_half_widths(h: &[f64]) -> f64 {
    let sum: f64 = h.iter().sum();
    let rss = h.iter().map(|x| x * x).sum::<f64>().sqrt();
    sum.min(1.1 * rss)
}

pub fn combine_errors(budget: &ErrorBudget, p_abs: f64, confidence: Confidence) -> f64 {
    let h: Vec<f64> = budget.components.iter().map(|c| c.half_width(p_abs, confidence)).collect();
    combine_half_widths(&h)
}

/// Relative theoretical error at separation `z`: proximity-force error
/// `z/R` and optical-data error as uniform components, and the separation
/// uncertainty `4 dz / z` as a normal component whose 95% half-width it is.
pub fn theory_error_curve(z: f64, sphere: SphereGeometry, dz: f64, optical_rel: f64, confidence: Confidence) -> f64 {
    let sigma_dz = 4.0 * dz / z / Confidence::P95.normal_quantile();
    let h = [
        confidence.fraction() * z / sphere.radius,
        confidence.fraction() * optical_rel,
        confidence.normal_quantile() * sigma_dz,
    ];
    combine_half_widths(&h)
}

/// Piecewise-linear function of separation, constant beyond its nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    z: Vec<f64>,
    value: Vec<f64>,
    domain: (f64, f64),
}

impl ErrorCurve {
    pub fn new(z: Vec<f64>, value: Vec<f64>, domain: (f64, f64)) -> Result<Self, MetrologyError> {
        if z.is_empty() || z.len() != value.len() {
            return Err(MetrologyError::InvalidBand("curve needs matching, non-empty columns".into()));
        }
        if z.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MetrologyError::InvalidBand("curve separations must increase".into()));
        }
        Ok(Self { z, value, domain })
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.z.iter().copied().zip(self.value.iter().copied())
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn at(&self, z: f64) -> f64 {
        interp_clamped(&self.z, &self.value, z)
    }
}

fn interp_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let n = xs.len();
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&v| v <= x);
    let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    ys[i - 1] + t * (ys[i] - ys[i - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Synthetic,
    External,
}

/// Repeated measurement sets of (z [m], pressure [Pa]).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementEnsemble {
    pub sets: Vec<Vec<(f64, f64)>>,
    pub bin_width: f64,
    pub provenance: Provenance,
}

pub const DEFAULT_BIN_WIDTH: f64 = 1.2e-9;

impl MeasurementEnsemble {
    pub fn new(sets: Vec<Vec<(f64, f64)>>, bin_width: f64, provenance: Provenance) -> Result<Self, MetrologyError> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(MetrologyError::InvalidEnsemble(format!("bin width must be positive, got {bin_width:e}")));
        }
        if let Some(i) = sets.iter().position(|s| s.is_empty()) {
            return Err(MetrologyError::InvalidEnsemble(format!("set {i} is empty")));
        }
        if sets.iter().flatten().any(|&(z, p)| !(z > 0.0 && z.is_finite() && p.is_finite())) {
            return Err(MetrologyError::InvalidEnsemble("points need positive finite z and finite pressure".into()));
        }
        Ok(Self {
            sets,
            bin_width,
            provenance,
        })
    }

    pub fn point_count(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn z_range(&self) -> (f64, f64) {
        self.sets
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(z, _)| (a.min(z), b.max(z)))
    }

    /// Ensemble without the listed sets.
    pub fn without_sets(&self, drop: &[usize]) -> Self {
        Self {
            sets: self
                .sets
                .iter()
                .enumerate()
                .filter(|(i, _)| !drop.contains(i))
                .map(|(_, s)| s.clone())
                .collect(),
            bin_width: self.bin_width,
            provenance: self.provenance,
        }
    }

    /// CSV `set_index,z_m,pressure_Pa` with header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("set_index,z_m,pressure_Pa\n");
        for (i, s) in self.sets.iter().enumerate() {
            for &(z, p) in s {
                out.push_str(&format!("{i},{z:e},{p:e}\n"));
            }
        }
        out
    }

    pub fn from_csv(raw: &str, bin_width: f64, provenance: Provenance) -> Result<Self, MetrologyError> {
        let mut sets: Vec<Vec<(f64, f64)>> = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in raw.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if !header_seen {
                header_seen = true;
                if t.starts_with("set_index") {
                    continue;
                }
            }
            let bad = |reason: &str| MetrologyError::Parse {
                line: lineno + 1,
                reason: reason.to_string(),
            };
            let f: Vec<&str> = t.split(',').map(str::trim).collect();
            if f.len() != 3 {
                return Err(bad("expected set_index,z_m,pressure_Pa"));
            }
            let i: usize = f[0].parse().map_err(|_| bad("set index is not an integer"))?;
            let z: f64 = f[1].parse().map_err(|_| bad("z is not a number"))?;
            let p: f64 = f[2].parse().map_err(|_| bad("pressure is not a number"))?;
            if sets.len() <= i {
                sets.resize_with(i + 1, Vec::new);
            }
            sets[i].push((z, p));
        }
        Self::new(sets, bin_width, provenance)
    }
}

/// Statistics of one separation bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinStat {
    /// `floor(z / bin_width)`.
    pub index: i64,
    pub count: usize,
    pub z_mean: f64,
    pub p_mean: f64,
    /// Local slope dP/dz estimated from the neighbouring bin means.
    pub slope: f64,
    /// Sample variance of slope-corrected residuals; `None` for single-point
    /// bins.
    pub variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedEnsemble {
    pub bin_width: f64,
    pub bins: Vec<BinStat>,
    /// Sum of counts, equal to the number of input points.
    pub total_points: usize,
}

impl BinnedEnsemble {
    fn position(&self, z: f64) -> Option<usize> {
        let idx = bin_index(z, self.bin_width);
        self.bins.binary_search_by_key(&idx, |b| b.index).ok()
    }
}

fn bin_index(z: f64, width: f64) -> i64 {
    (z / width).floor() as i64
}

fn bin_groups(ensemble: &MeasurementEnsemble) -> Vec<(i64, Vec<(f64, f64)>)> {
    let mut groups: HashMap<i64, Vec<(f64, f64)>> = HashMap::new();
    for &(z, p) in ensemble.sets.iter().flatten() {
        groups.entry(bin_index(z, ensemble.bin_width)).or_default().push((z, p));
    }
    let mut groups: Vec<_> = groups.into_iter().collect();
    groups.sort_by_key(|g| g.0);
    for g in &mut groups {
        g.1.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    }
    groups
}

/// Assigns every point to a bin of width `ensemble.bin_width` and computes
/// per-bin statistics. Empty bins are omitted.
pub fn bin_ensemble(ensemble: &MeasurementEnsemble) -> BinnedEnsemble {
    let groups = bin_groups(ensemble);
    let means: Vec<(f64, f64)> = groups
        .iter()
        .map(|(_, pts)| {
            let n = pts.len() as f64;
            let z: CompensatedSum = pts.iter().map(|p| p.0).collect();
            let p: CompensatedSum = pts.iter().map(|p| p.1).collect();
            (z.total() / n, p.total() / n)
        })
        .collect();

    let bins = groups
        .iter()
        .enumerate()
        .map(|(j, (index, pts))| {
            let (z_mean, p_mean) = means[j];
            let lo = j.saturating_sub(1);
            let hi = (j + 1).min(means.len() - 1);
            let slope = if hi > lo && means[hi].0 != means[lo].0 {
                (means[hi].1 - means[lo].1) / (means[hi].0 - means[lo].0)
            } else {
                0.0
            };
            let n = pts.len();
            let variance = (n >= 2).then(|| {
                let ss: CompensatedSum = pts
                    .iter()
                    .map(|&(z, p)| {
                        let r = p - p_mean - slope * (z - z_mean);
                        r * r
                    })
                    .collect();
                ss.total() / (n - 1) as f64
            });
            BinStat {
                index: *index,
                count: n,
                z_mean,
                p_mean,
                slope,
                variance,
            }
        })
        .collect();
    BinnedEnsemble {
        bin_width: ensemble.bin_width,
        bins,
        total_points: ensemble.point_count(),
    }
}

/// Per-bin Student-t half-width of the bin mean, `t_{n-1} s / sqrt(n)`.
pub fn bin_half_width(bin: &BinStat, confidence: Confidence) -> Option<f64> {
    let var = bin.variance?;
    let n = bin.count as f64;
    Some(confidence.student_quantile(n - 1.0) * var.sqrt() / n.sqrt())
}

/// Random error of the mean pressure against separation: per-bin
/// Student-t half-widths smoothed by a moving median over 11 bins.
pub fn random_error_curve(binned: &BinnedEnsemble, confidence: Confidence) -> Result<ErrorCurve, MetrologyError> {
    let raw: Vec<(f64, f64)> = binned
        .bins
        .iter()
        .filter_map(|b| bin_half_width(b, confidence).map(|h| (b.z_mean, h)))
        .collect();
    if raw.is_empty() {
        return Err(MetrologyError::AllBinsDegenerate);
    }
    const HALF: usize = 5;
    let smoothed: Vec<f64> = (0..raw.len())
        .map(|i| {
            let lo = i.saturating_sub(HALF);
            let hi = (i + HALF + 1).min(raw.len());
            let mut w: Vec<f64> = raw[lo..hi].iter().map(|r| r.1).collect();
            w.sort_by(f64::total_cmp);
            let m = w.len();
            if m % 2 == 1 {
                w[m / 2]
            } else {
                0.5 * (w[m / 2 - 1] + w[m / 2])
            }
        })
        .collect();
    let first = binned.bins.first().expect("non-empty");
    let last = binned.bins.last().expect("non-empty");
    let domain = (
        first.index as f64 * binned.bin_width,
        (last.index + 1) as f64 * binned.bin_width,
    );
    ErrorCurve::new(raw.iter().map(|r| r.0).collect(), smoothed, domain)
}

/// Total experimental error: the random curve combined with the systematic
/// components of `budget`, evaluated at the bin mean pressures.
pub fn experimental_error_curve(
    binned: &BinnedEnsemble,
    random: &ErrorCurve,
    budget: &ErrorBudget,
    confidence: Confidence,
) -> Result<ErrorCurve, MetrologyError> {
    if binned.bins.is_empty() {
        return Err(MetrologyError::AllBinsDegenerate);
    }
    let z: Vec<f64> = binned.bins.iter().map(|b| b.z_mean).collect();
    let v = binned
        .bins
        .iter()
        .map(|b| {
            let mut h = budget.systematic_half_widths(b.p_mean.abs(), confidence);
            h.push(random.at(b.z_mean));
            combine_half_widths(&h)
        })
        .collect();
    ErrorCurve::new(z, v, random.domain())
}

/// Absolute half-width of the band for `P_theor - P_expt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceBand {
    entries: Vec<(f64, f64)>,
    pub confidence: Confidence,
}

impl ConfidenceBand {
    pub fn new(entries: Vec<(f64, f64)>, confidence: Confidence) -> Result<Self, MetrologyError> {
        if entries.is_empty() {
            return Err(MetrologyError::InvalidBand("no entries".into()));
        }
        if entries.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(MetrologyError::InvalidBand("separations must increase".into()));
        }
        if entries.iter().any(|e| !(e.1 > 0.0 && e.1.is_finite())) {
            return Err(MetrologyError::InvalidBand("half-widths must be positive".into()));
        }
        Ok(Self { entries, confidence })
    }

    /// Band with the same half-width at every listed separation.
    pub fn uniform(zs: &[f64], half_width: f64, confidence: Confidence) -> Result<Self, MetrologyError> {
        Self::new(zs.iter().map(|&z| (z, half_width)).collect(), confidence)
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.entries[0].0, self.entries[self.entries.len() - 1].0)
    }

    /// Linear interpolation; `None` outside the band.
    pub fn half_width_at(&self, z: f64) -> Option<f64> {
        let (lo, hi) = self.z_range();
        if !(z >= lo && z <= hi) {
            return None;
        }
        let xs: Vec<f64> = self.entries.iter().map(|e| e.0).collect();
        let ys: Vec<f64> = self.entries.iter().map(|e| e.1).collect();
        Some(interp_clamped(&xs, &ys, z))
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, MetrologyError> {
        Self::new(self.entries.iter().map(|&(z, h)| (z, h * factor)).collect(), self.confidence)
    }
}

/// Combines the theoretical relative error (applied to the model pressure)
/// with the experimental absolute error at each model node inside the
/// experimental domain.
pub fn confidence_band<F>(
    theory_rel: F,
    expt_abs: &ErrorCurve,
    model_curve: &PressureCurve,
    confidence: Confidence,
) -> Result<ConfidenceBand, MetrologyError>
where
    F: Fn(f64) -> f64,
{
    let (a_min, a_max) = model_curve.z_range();
    let (b_min, b_max) = expt_abs.domain();
    let lo = a_min.max(b_min);
    let hi = a_max.min(b_max);
    if !(lo < hi) {
        return Err(MetrologyError::DisjointRanges { a_min, a_max, b_min, b_max });
    }
    let mut zs = vec![lo];
    zs.extend(model_curve.entries().iter().map(|e| e.z).filter(|&z| z > lo && z < hi));
    zs.push(hi);
    let entries = zs
        .into_iter()
        .map(|z| {
            let p = model_curve.pressure_at(z).ok_or(MetrologyError::OutsideCurve(z))?;
            let h = combine_half_widths(&[theory_rel(z) * p.abs(), expt_abs.at(z)]);
            Ok((z, h))
        })
        .collect::<Result<Vec<_>, MetrologyError>>()?;
    ConfidenceBand::new(entries, confidence)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExclusionSettings {
    /// Width of the fixed separation windows, m.
    pub window: f64,
    /// Outside fraction above which a window is excluded.
    pub window_threshold: f64,
    /// Global outside fraction allowed, as a multiple of `1 - confidence`.
    pub acceptance_factor: f64,
}

impl Default for ExclusionSettings {
    fn default() -> Self {
        Self {
            window: 10e-9,
            window_threshold: 0.5,
            acceptance_factor: 1.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowFlag {
    pub z_min: f64,
    pub z_max: f64,
    pub count: usize,
    pub outside: usize,
    pub excluded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcludedWindow {
    pub z_min: f64,
    pub z_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExclusionVerdict {
    pub confidence: Confidence,
    pub total: usize,
    pub outside: usize,
    pub fraction_outside: f64,
    pub windows: Vec<WindowFlag>,
    /// Consecutive excluded windows merged into runs.
    pub excluded_windows: Vec<ExcludedWindow>,
    pub accepted: bool,
}

impl ExclusionVerdict {
    /// True when some excluded run overlaps `[a, b]` with at least one whole
    /// excluded window inside it.
    pub fn excluded_within(&self, a: f64, b: f64) -> bool {
        let eps = 1e-12;
        self.windows.iter().any(|w| w.excluded && w.z_min >= a - eps && w.z_max <= b + eps)
    }
}

pub fn exclusion_test(
    differences: &[(f64, f64)],
    band: &ConfidenceBand,
    settings: ExclusionSettings,
) -> Result<ExclusionVerdict, MetrologyError> {
    if differences.is_empty() {
        return Err(MetrologyError::EmptyInput);
    }
    let mut windows: std::collections::BTreeMap<i64, (usize, usize)> = Default::default();
    let mut outside = 0;
    for &(z, d) in differences {
        let h = band.half_width_at(z).ok_or(MetrologyError::OutsideBand(z))?;
        let out = d.abs() > h;
        outside += out as usize;
        let e = windows.entry(bin_index(z, settings.window)).or_default();
        e.0 += 1;
        e.1 += out as usize;
    }
    let windows: Vec<WindowFlag> = windows
        .into_iter()
        .map(|(i, (count, out))| WindowFlag {
            z_min: i as f64 * settings.window,
            z_max: (i + 1) as f64 * settings.window,
            count,
            outside: out,
            excluded: out as f64 > settings.window_threshold * count as f64,
        })
        .collect();
    let mut runs: Vec<ExcludedWindow> = Vec::new();
    for w in windows.iter().filter(|w| w.excluded) {
        match runs.last_mut() {
            Some(r) if (r.z_max - w.z_min).abs() <= 1e-3 * settings.window => r.z_max = w.z_max,
            _ => runs.push(ExcludedWindow {
                z_min: w.z_min,
                z_max: w.z_max,
            }),
        }
    }
    let total = differences.len();
    let fraction_outside = outside as f64 / total as f64;
    let accepted = runs.is_empty() && fraction_outside <= settings.acceptance_factor * (1.0 - band.confidence.fraction());
    Ok(ExclusionVerdict {
        confidence: band.confidence,
        total,
        outside,
        fraction_outside,
        windows,
        excluded_windows: runs,
        accepted,
    })
}

/// `P_theor(z) - P_expt` for every measured point.
pub fn differences(ensemble: &MeasurementEnsemble, model: &PressureCurve) -> Result<Vec<(f64, f64)>, MetrologyError> {
    ensemble
        .sets
        .iter()
        .flatten()
        .map(|&(z, p)| Ok((z, model.pressure_at(z).ok_or(MetrologyError::OutsideCurve(z))? - p)))
        .collect()
}

/// Two-sided Grubbs critical value for `n` values at significance `alpha`.
pub fn grubbs_critical(n: usize, alpha: f64) -> f64 {
    let nf = n as f64;
    let t = StudentsT::new(0.0, 1.0, nf - 2.0)
        .expect("n >= 3")
        .inverse_cdf(1.0 - alpha / (2.0 * nf));
    (nf - 1.0) / nf.sqrt() * (t * t / (nf - 2.0 + t * t)).sqrt()
}

/// Mean standardized residual of each set against the bin statistics.
pub fn set_scores(ensemble: &MeasurementEnsemble) -> Vec<f64> {
    let binned = bin_ensemble(ensemble);
    ensemble
        .sets
        .iter()
        .map(|set| {
            let mut sum = CompensatedSum::default();
            let mut n = 0usize;
            for &(z, p) in set {
                let Some(pos) = binned.position(z) else { continue };
                let b = &binned.bins[pos];
                match b.variance {
                    Some(v) if v > 0.0 => {
                        sum.add((p - b.p_mean - b.slope * (z - b.z_mean)) / v.sqrt());
                        n += 1;
                    }
                    _ => {}
                }
            }
            if n == 0 {
                0.0
            } else {
                sum.total() / n as f64
            }
        })
        .collect()
}

/// Iterative two-sided Grubbs test on per-set mean standardized residuals.
/// Flagged sets are removed and the bins recomputed before the next round.
pub fn detect_outlying_set(ensemble: &MeasurementEnsemble, significance: f64) -> Result<Vec<usize>, MetrologyError> {
    if ensemble.sets.len() < 3 {
        return Err(MetrologyError::TooFewSets(ensemble.sets.len()));
    }
    let mut remaining: Vec<usize> = (0..ensemble.sets.len()).collect();
    let mut flagged = Vec::new();
    while remaining.len() >= 3 {
        let sub = MeasurementEnsemble {
            sets: remaining.iter().map(|&i| ensemble.sets[i].clone()).collect(),
            bin_width: ensemble.bin_width,
            provenance: ensemble.provenance,
        };
        let scores = set_scores(&sub);
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let sd = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        if !(sd > 0.0) {
            break;
        }
        let (worst, g) = scores
            .iter()
            .enumerate()
            .map(|(i, s)| (i, (s - mean).abs() / sd))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        if g <= grubbs_critical(scores.len(), significance) {
            break;
        }
        flagged.push(remaining.remove(worst));
    }
    flagged.sort_unstable();
    Ok(flagged)
}

/// A set shifted by a multiple of the local random standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedOutlier {
    pub set: usize,
    pub sigma_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisSpec {
    pub n_sets: usize,
    pub points_per_set: usize,
    pub z_range: (f64, f64),
    pub bin_width: f64,
    pub outliers: Vec<PlantedOutlier>,
}

impl Default for SynthesisSpec {
    fn default() -> Self {
        Self {
            n_sets: 14,
            points_per_set: 290,
            z_range: (160e-9, 750e-9),
            bin_width: DEFAULT_BIN_WIDTH,
            outliers: Vec::new(),
        }
    }
}

/// Draws a synthetic ensemble around `model`.
///
/// Normal and Student components perturb each point independently; uniform
/// components are drawn once for the whole ensemble. Separations are
/// stratified over the range within each set. Each set uses its own stream
/// of the seeded generator, so sets can be drawn in parallel.
pub fn generate_synthetic_ensemble(
    model: &PressureCurve,
    noise: &ErrorBudget,
    spec: &SynthesisSpec,
    seed: u64,
) -> Result<MeasurementEnsemble, MetrologyError> {
    let (z0, z1) = spec.z_range;
    if spec.n_sets == 0 || spec.points_per_set == 0 || !(z0 > 0.0 && z1 > z0) {
        return Err(MetrologyError::InvalidEnsemble("need n_sets >= 1, points_per_set >= 1 and 0 < z_min < z_max".into()));
    }
    let (c0, c1) = model.z_range();
    if z0 < c0 || z1 > c1 {
        return Err(MetrologyError::OutsideCurve(if z0 < c0 { z0 } else { z1 }));
    }

    let mut global = ChaCha8Rng::seed_from_u64(seed);
    let offsets: Vec<(Magnitude, f64)> = noise
        .systematic()
        .map(|c| (c.magnitude, global.random_range(-1.0..=1.0)))
        .collect();
    let random: Vec<&ErrorComponent> = noise.random().collect();

    let sets = (0..spec.n_sets)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64 + 1);
            let shift = spec
                .outliers
                .iter()
                .filter(|o| o.set == s)
                .map(|o| o.sigma_offset)
                .sum::<f64>();
            let dz = (z1 - z0) / spec.points_per_set as f64;
            (0..spec.points_per_set)
                .map(|i| {
                    let z = z0 + (i as f64 + rng.random::<f64>()) * dz;
                    let p_true = model.pressure_at(z).ok_or(MetrologyError::OutsideCurve(z))?;
                    let a = p_true.abs();
                    let mut p = p_true;
                    for &(m, u) in &offsets {
                        p += match m {
                            Magnitude::Relative(r) => r * u * p_true,
                            Magnitude::Absolute(x) => x * u,
                        };
                    }
                    for c in &random {
                        let m = c.magnitude.at(a);
                        let draw: f64 = match c.distribution {
                            Distribution::Student { dof } => StudentT::new(dof as f64)
                                .map_err(|e| MetrologyError::InvalidComponent {
                                    label: c.label.clone(),
                                    reason: e.to_string(),
                                })?
                                .sample(&mut rng),
                            _ => StandardNormal.sample(&mut rng),
                        };
                        p += m * draw;
                    }
                    if shift != 0.0 {
                        p += shift * noise.random_sigma(a);
                    }
                    Ok((z, p))
                })
                .collect::<Result<Vec<_>, MetrologyError>>()
        })
        .collect::<Result<Vec<_>, MetrologyError>>()?;
    MeasurementEnsemble::new(sets, spec.bin_width, Provenance::Synthetic)
}

/// Inputs of the theory-versus-experiment comparison.
#[derive(Debug, Clone)]
pub struct ComparisonSetup {
    pub sphere: SphereGeometry,
    /// Separation uncertainty, m.
    pub dz: f64,
    /// Relative error from the optical data.
    pub optical_rel: f64,
    /// Systematic experimental budget (uniform components are used).
    pub systematics: ErrorBudget,
    pub confidence: Confidence,
    pub settings: ExclusionSettings,
}

/// Band and verdict for one tested model.
#[derive(Debug, Clone)]
pub struct ModelComparison {
    pub band: ConfidenceBand,
    pub differences: Vec<(f64, f64)>,
    pub verdict: ExclusionVerdict,
}

/// Error curves derived once from an ensemble.
#[derive(Debug, Clone)]
pub struct ExperimentalErrors {
    pub binned: BinnedEnsemble,
    pub random: ErrorCurve,
    pub total: ErrorCurve,
}

pub fn experimental_errors(ensemble: &MeasurementEnsemble, setup: &ComparisonSetup) -> Result<ExperimentalErrors, MetrologyError> {
    let binned = bin_ensemble(ensemble);
    let random = random_error_curve(&binned, setup.confidence)?;
    let total = experimental_error_curve(&binned, &random, &setup.systematics, setup.confidence)?;
    Ok(ExperimentalErrors { binned, random, total })
}

/// Builds the band for `model` and runs the exclusion test on `ensemble`.
pub fn compare_model(
    ensemble: &MeasurementEnsemble,
    errors: &ExperimentalErrors,
    model: &PressureCurve,
    setup: &ComparisonSetup,
) -> Result<ModelComparison, MetrologyError> {
    let theory = |z: f64| theory_error_curve(z, setup.sphere, setup.dz, setup.optical_rel, setup.confidence);
    let band = confidence_band(theory, &errors.total, model, setup.confidence)?;
    let differences = differences(ensemble, model)?;
    let verdict = exclusion_test(&differences, &band, setup.settings)?;
    Ok(ModelComparison {
        band,
        differences,
        verdict,
    })
}
