//! The `casimir` pipeline commands. Each command writes its artifacts under
//! the configured output directory and returns the paths it wrote.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, LoadedConfig, RunConfig};
use crate::constants::CONSTANTS_VERSION;
use crate::corrections::{roughness_corrected_pressure, CorrectionError, RoughnessProfile, SphereGeometry};
use crate::hypforce::{self, constraint_curve, HypforceError, LayerStack};
use crate::lifshitz::{self, matsubara_frequency, LifshitzError, PressureCurve, PressurePoint, ReflectionKind, ReflectionModel, ThermalState};
use crate::metrology::{
    self, compare_model, detect_outlying_set, experimental_errors, generate_synthetic_ensemble, theory_error_curve, ComparisonSetup,
    ConfidenceBand, ExcludedWindow, ExclusionSettings, MetrologyError, SynthesisSpec,
};
use crate::optics::{self, DrudeParameters, FrequencyUnit, OpticsError, PermittivityFn, Tabulated};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    OpticalTable { path: PathBuf, source: OpticsError },
    #[error("{path}: {source}")]
    Roughness { path: PathBuf, source: CorrectionError },
    #[error("{path}: {source}")]
    Stacks { path: PathBuf, source: HypforceError },
    #[error("{path}: line {line}: {reason}")]
    Csv { path: PathBuf, line: usize, reason: String },
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error("model {model}: {source}")]
    Model { model: ReflectionKind, source: LifshitzError },
    #[error("model {model}: roughness correction at z = {z:e} m: {source}")]
    RoughnessCorrection { model: ReflectionKind, z: f64, source: CorrectionError },
    #[error("model {model}: {source}")]
    Metrology { model: ReflectionKind, source: MetrologyError },
    #[error(transparent)]
    Hypforce(#[from] HypforceError),
    #[error("Matsubara grid is empty (l_max = 0)")]
    EmptyGrid,
    #[error("synthesis range [{z_min:e}, {z_max:e}] m is not covered by the separation grid")]
    GridCoverage { z_min: f64, z_max: f64 },
    #[error("no stack named {0:?}")]
    UnknownStack(String),
    #[error("no confidence band: set constraints.band or run `exclusion` first (looked for {0})")]
    BandMissing(PathBuf),
    #[error("cannot serialize verdict: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Kk,
    Pressure,
    Exclusion,
    Constraints,
}

/// Runs `command` and returns the written files.
pub fn run(command: Command, cfg: &LoadedConfig) -> Result<Vec<PathBuf>, CliError> {
    let out = &cfg.config.output.dir;
    std::fs::create_dir_all(out).map_err(|source| CliError::Io { path: out.clone(), source })?;
    match command {
        Command::Kk => cmd_kk(cfg),
        Command::Pressure => cmd_pressure(cfg),
        Command::Exclusion => cmd_exclusion(cfg),
        Command::Constraints => cmd_constraints(cfg),
    }
}

fn header(cfg: &LoadedConfig, command: &str) -> String {
    format!("# casimir {command} config_sha256={} constants={CONSTANTS_VERSION}\n", cfg.hash)
}

fn write_file(path: PathBuf, body: &str) -> Result<PathBuf, CliError> {
    std::fs::write(&path, body).map_err(|source| CliError::Io { path: path.clone(), source })?;
    info!("wrote {}", path.display());
    Ok(path)
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn drude(cfg: &RunConfig) -> Result<DrudeParameters, CliError> {
    Ok(DrudeParameters::new(cfg.optics.omega_p, cfg.optics.gamma)?)
}

/// Permittivity on the imaginary axis: the dispersion transform of the
/// configured table, or the Drude closed form without one.
pub fn permittivity(cfg: &RunConfig) -> Result<PermittivityFn, CliError> {
    let drude = drude(cfg)?;
    match &cfg.optics.table {
        Some(path) => {
            let unit = cfg.optics.unit.as_deref().map(str::parse::<FrequencyUnit>).transpose()?;
            let ds = optics::load_optical_table(&read_file(path)?, unit).map_err(|source| CliError::OpticalTable {
                path: path.clone(),
                source,
            })?;
            Ok(Arc::new(Tabulated::new(ds, drude)))
        }
        None => Ok(Arc::new(optics::Drude(drude))),
    }
}

pub fn reflection_model(kind: ReflectionKind, eps: &PermittivityFn, cfg: &RunConfig) -> Result<ReflectionModel, CliError> {
    if kind == ReflectionKind::IdealMetal {
        return Ok(ReflectionModel::ideal_metal());
    }
    ReflectionModel::new(kind, eps.clone(), cfg.optics.omega_p).map_err(|source| CliError::Model { model: kind, source })
}

pub fn thermal_state(cfg: &RunConfig) -> Result<ThermalState, LifshitzError> {
    ThermalState::new(cfg.model.temperature, cfg.model.l_max, cfg.model.quad_tol)
}

fn sphere(cfg: &RunConfig) -> SphereGeometry {
    SphereGeometry {
        radius: cfg.sphere.radius,
        radius_error: cfg.sphere.radius_error,
    }
}

fn roughness(cfg: &RunConfig) -> Result<Option<(RoughnessProfile, RoughnessProfile)>, CliError> {
    let load = |path: &PathBuf| {
        RoughnessProfile::parse(&read_file(path)?).map_err(|source| CliError::Roughness { path: path.clone(), source })
    };
    match (&cfg.roughness.sphere, &cfg.roughness.plate) {
        (Some(a), Some(b)) => Ok(Some((load(a)?, load(b)?))),
        _ => Ok(None),
    }
}

/// Pressure curves on the configured grid, one per kind, with the
/// theoretical relative error column and the roughness correction applied
/// when profiles are configured.
pub fn model_curves(cfg: &RunConfig, kinds: &[ReflectionKind]) -> Result<Vec<PressureCurve>, CliError> {
    let eps = permittivity(cfg)?;
    let state = thermal_state(cfg).map_err(|source| CliError::Model { model: kinds[0], source })?;
    let conf = cfg.confidence()?;
    let sphere = sphere(cfg);
    let rel = |z: f64| theory_error_curve(z, sphere, cfg.theory.dz, cfg.theory.optical_rel, conf);
    let zs = cfg.grid.separations();
    let rough = roughness(cfg)?;

    kinds
        .iter()
        .map(|&kind| {
            let model = reflection_model(kind, &eps, cfg)?;
            let err = |source| CliError::Model { model: kind, source };
            let Some((a, b)) = &rough else {
                return lifshitz::pressure_curve(&model, &zs, &state, rel).map_err(err);
            };
            // Smooth curve over the grid widened by the largest local offsets.
            let reach = a.max_abs_height() + b.max_abs_height() + cfg.grid.z_step;
            let step = cfg.grid.z_step;
            let n_lo = (reach / step).ceil() as usize;
            let mut wide: Vec<f64> = (1..=n_lo).rev().map(|i| zs[0] - i as f64 * step).filter(|&z| z > 0.0).collect();
            wide.extend(&zs);
            let last = *zs.last().expect("non-empty grid");
            wide.extend((1..=n_lo).map(|i| last + i as f64 * step));
            let smooth = lifshitz::pressure_curve(&model, &wide, &state, |_| 0.0).map_err(err)?;
            let entries = zs
                .iter()
                .map(|&z| {
                    let f = |x: f64| smooth.pressure_at(x).ok_or_else(|| format!("local separation {x:e} m is off the grid"));
                    let pressure = roughness_corrected_pressure(f, (a, b), z).map_err(|source| CliError::RoughnessCorrection { model: kind, z, source })?;
                    Ok(PressurePoint {
                        z,
                        pressure,
                        rel_theory_error: rel(z),
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            PressureCurve::new(entries, model.kind().name()).map_err(err)
        })
        .collect()
}

/// `epsilon(i xi_l)` for `l = 1..=l_max` at the configured temperature.
pub fn cmd_kk(cfg: &LoadedConfig) -> Result<Vec<PathBuf>, CliError> {
    let c = &cfg.config;
    if c.model.l_max == Some(0) {
        return Err(CliError::EmptyGrid);
    }
    let state = thermal_state(c).map_err(|source| CliError::Model {
        model: ReflectionKind::Impedance,
        source,
    })?;
    let l_max = state.effective_l_max(c.grid.z_min);
    if l_max == 0 {
        return Err(CliError::EmptyGrid);
    }
    let eps = permittivity(c)?;
    let mut body = header(cfg, "kk");
    body.push_str("xi_rad_s,epsilon\n");
    for l in 1..=l_max {
        let xi = matsubara_frequency(c.model.temperature, l);
        writeln!(body, "{xi:e},{:e}", eps.epsilon(xi)?).expect("string write");
    }
    Ok(vec![write_file(c.output.dir.join("epsilon_imag_axis.csv"), &body)?])
}

fn curve_csv(cfg: &LoadedConfig, curve: &PressureCurve) -> String {
    let mut body = header(cfg, "pressure");
    writeln!(body, "# model={}", curve.model_tag).expect("string write");
    body.push_str("z_m,pressure_Pa,rel_theory_error\n");
    for p in curve.entries() {
        writeln!(body, "{:e},{:e},{:e}", p.z, p.pressure, p.rel_theory_error).expect("string write");
    }
    body
}

pub fn cmd_pressure(cfg: &LoadedConfig) -> Result<Vec<PathBuf>, CliError> {
    let c = &cfg.config;
    let kinds = c.model_kinds()?;
    let curves = model_curves(c, &kinds)?;
    kinds
        .iter()
        .zip(&curves)
        .map(|(k, curve)| write_file(c.output.dir.join(format!("pressure_{}.csv", k.name())), &curve_csv(cfg, curve)))
        .collect()
}

#[derive(Debug, Serialize)]
struct VerdictRecord<'a> {
    model: &'a str,
    confidence: f64,
    fraction_outside: f64,
    excluded_windows: &'a [ExcludedWindow],
    accepted: bool,
    points: usize,
    outside: usize,
    generator: &'a str,
    seed: u64,
    dropped_sets: &'a [usize],
    config_sha256: &'a str,
    constants_version: &'a str,
}

pub fn cmd_exclusion(cfg: &LoadedConfig) -> Result<Vec<PathBuf>, CliError> {
    let c = &cfg.config;
    let generator = c.generator_kind()?;
    let tested = c.tested_kinds()?;
    let mut kinds = vec![generator];
    kinds.extend(tested.iter().filter(|k| **k != generator));
    let curves = model_curves(c, &kinds)?;
    let gen_curve = &curves[0];

    let (g0, g1) = gen_curve.z_range();
    let s = &c.synthesis;
    if s.z_min < g0 || s.z_max > g1 {
        return Err(CliError::GridCoverage {
            z_min: s.z_min,
            z_max: s.z_max,
        });
    }
    let noise = c.noise_budget()?;
    let spec = SynthesisSpec {
        n_sets: s.n_sets,
        points_per_set: s.points_per_set,
        z_range: (s.z_min, s.z_max),
        bin_width: s.bin_width,
        outliers: s.outliers.clone(),
    };
    let metro = |model| move |source| CliError::Metrology { model, source };
    let raw = generate_synthetic_ensemble(gen_curve, &noise, &spec, s.seed).map_err(metro(generator))?;
    let mut written = vec![write_file(
        c.output.dir.join("ensemble.csv"),
        &(header(cfg, "exclusion") + &raw.to_csv()),
    )?];

    let dropped = if s.outlier_significance > 0.0 && raw.sets.len() >= 3 {
        detect_outlying_set(&raw, s.outlier_significance).map_err(metro(generator))?
    } else {
        Vec::new()
    };
    if !dropped.is_empty() {
        warn!("dropping outlying sets {dropped:?}");
    }
    let ensemble = raw.without_sets(&dropped);

    let conf = c.confidence()?;
    let setup = ComparisonSetup {
        sphere: sphere(c),
        dz: c.theory.dz,
        optical_rel: c.theory.optical_rel,
        systematics: noise,
        confidence: conf,
        settings: ExclusionSettings {
            window: c.exclusion.window,
            window_threshold: c.exclusion.window_threshold,
            acceptance_factor: c.exclusion.acceptance_factor,
        },
    };
    let errors = experimental_errors(&ensemble, &setup).map_err(metro(generator))?;

    for kind in tested {
        let curve = &curves[kinds.iter().position(|k| *k == kind).expect("curve computed")];
        let cmp = compare_model(&ensemble, &errors, curve, &setup).map_err(metro(kind))?;
        let v = &cmp.verdict;
        info!(
            "{kind}: {:.2}% outside, {} excluded runs, {}",
            100.0 * v.fraction_outside,
            v.excluded_windows.len(),
            if v.accepted { "accepted" } else { "rejected" }
        );

        let mut diff = header(cfg, "exclusion");
        diff.push_str("z_m,difference_Pa,half_width_Pa,outside\n");
        for &(z, d) in &cmp.differences {
            let h = cmp.band.half_width_at(z).ok_or(CliError::Metrology {
                model: kind,
                source: MetrologyError::OutsideBand(z),
            })?;
            writeln!(diff, "{z:e},{d:e},{h:e},{}", (d.abs() > h) as u8).expect("string write");
        }
        written.push(write_file(c.output.dir.join(format!("differences_{}.csv", kind.name())), &diff)?);
        written.push(write_file(c.output.dir.join(format!("band_{}.csv", kind.name())), &band_csv(cfg, &cmp.band))?);

        let record = VerdictRecord {
            model: kind.name(),
            confidence: conf.fraction(),
            fraction_outside: v.fraction_outside,
            excluded_windows: &v.excluded_windows,
            accepted: v.accepted,
            points: v.total,
            outside: v.outside,
            generator: generator.name(),
            seed: s.seed,
            dropped_sets: &dropped,
            config_sha256: &cfg.hash,
            constants_version: CONSTANTS_VERSION,
        };
        let json = serde_json::to_string_pretty(&record)? + "\n";
        written.push(write_file(c.output.dir.join(format!("verdict_{}.json", kind.name())), &json)?);
    }
    Ok(written)
}

fn band_csv(cfg: &LoadedConfig, band: &ConfidenceBand) -> String {
    let mut body = header(cfg, "exclusion");
    writeln!(body, "# confidence={}", band.confidence).expect("string write");
    body.push_str("z_m,half_width_Pa\n");
    for (z, h) in band.entries() {
        writeln!(body, "{z:e},{h:e}").expect("string write");
    }
    body
}

/// Reads two numeric columns under a header naming them.
fn read_two_columns(path: &Path, expected: [&str; 2]) -> Result<Vec<(f64, f64)>, CliError> {
    let raw = read_file(path)?;
    let bad = |line: usize, reason: String| CliError::Csv {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (i, line) in raw.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = t.split(',').map(str::trim).collect();
        if !seen_header {
            if f.len() < 2 || f[0] != expected[0] || f[1] != expected[1] {
                return Err(bad(i + 1, format!("expected header {},{}", expected[0], expected[1])));
            }
            seen_header = true;
            continue;
        }
        if f.len() < 2 {
            return Err(bad(i + 1, "expected two columns".into()));
        }
        let x: f64 = f[0].parse().map_err(|_| bad(i + 1, format!("cannot parse {:?}", f[0])))?;
        let y: f64 = f[1].parse().map_err(|_| bad(i + 1, format!("cannot parse {:?}", f[1])))?;
        rows.push((x, y));
    }
    Ok(rows)
}

pub fn load_band(path: &Path, confidence: metrology::Confidence) -> Result<ConfidenceBand, CliError> {
    let rows = read_two_columns(path, ["z_m", "half_width_Pa"])?;
    ConfidenceBand::new(rows, confidence).map_err(|e| CliError::Csv {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    })
}

fn stacks(cfg: &RunConfig) -> Result<(LayerStack, LayerStack), CliError> {
    let c = &cfg.constraints;
    let all = match &c.stacks {
        Some(p) => hypforce::parse_stacks(&read_file(p)?).map_err(|source| CliError::Stacks { path: p.clone(), source })?,
        None => vec![LayerStack::measured_sphere(), LayerStack::measured_plate()],
    };
    let find = |name: &str| {
        all.iter()
            .find(|s| s.label == name)
            .cloned()
            .ok_or_else(|| CliError::UnknownStack(name.to_string()))
    };
    Ok((find(&c.sphere_stack)?, find(&c.plate_stack)?))
}

/// Reference value at `lambda`, interpolated log-log; `None` off its range.
fn reference_at(reference: &[(f64, f64)], lambda: f64) -> Option<f64> {
    let i = reference.partition_point(|r| r.0 < lambda);
    if i < reference.len() && reference[i].0 == lambda {
        return Some(reference[i].1);
    }
    if i == 0 || i == reference.len() {
        return None;
    }
    let (a, b) = (reference[i - 1], reference[i]);
    let t = (lambda / a.0).ln() / (b.0 / a.0).ln();
    Some((a.1.ln() + t * (b.1 / a.1).ln()).exp())
}

pub fn cmd_constraints(cfg: &LoadedConfig) -> Result<Vec<PathBuf>, CliError> {
    let c = &cfg.config;
    let conf = c.confidence()?;
    let band_path = match &c.constraints.band {
        Some(p) => p.clone(),
        None => {
            let model = match &c.constraints.band_model {
                Some(m) => m.parse::<ReflectionKind>().map_err(|source| CliError::Model {
                    model: ReflectionKind::Impedance,
                    source,
                })?,
                None => c.generator_kind()?,
            };
            c.output.dir.join(format!("band_{}.csv", model.name()))
        }
    };
    if !band_path.is_file() {
        return Err(CliError::BandMissing(band_path));
    }
    let band = load_band(&band_path, conf)?;
    let (a, b) = stacks(c)?;
    let curve = constraint_curve(&band, &a, &b, &c.lambdas())?;

    let mut body = header(cfg, "constraints");
    body.push_str("lambda_m,alpha_max,z_best_m\n");
    for e in &curve.entries {
        writeln!(body, "{:e},{:e},{:e}", e.lambda, e.alpha_max, e.z_best).expect("string write");
    }
    let mut written = vec![write_file(c.output.dir.join("constraints.csv"), &body)?];

    if let Some(path) = &c.constraints.reference {
        let mut reference = read_two_columns(path, ["lambda_m", "alpha_max"])?;
        reference.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut overlay = header(cfg, "constraints");
        overlay.push_str("lambda_m,alpha_max,alpha_reference,improvement\n");
        for e in &curve.entries {
            if let Some(r) = reference_at(&reference, e.lambda) {
                writeln!(overlay, "{:e},{:e},{:e},{:e}", e.lambda, e.alpha_max, r, r / e.alpha_max).expect("string write");
            }
        }
        written.push(write_file(c.output.dir.join("constraints_overlay.csv"), &overlay)?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_interpolation() {
        let r = [(1.0, 10.0), (10.0, 1.0)];
        assert_eq!(reference_at(&r, 1.0), Some(10.0));
        assert!((reference_at(&r, 10f64.sqrt()).unwrap() - 10f64.sqrt()).abs() < 1e-12);
        assert_eq!(reference_at(&r, 0.5), None);
        assert_eq!(reference_at(&r, 11.0), None);
    }
}
