//! Run configuration: a TOML document with one table per concern.
//!
//! Any `section.key` can be overridden from the environment as
//! `CASIMIR__SECTION__KEY=value`; values are parsed as TOML and fall back to
//! plain strings. Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lifshitz::ReflectionKind;
use crate::metrology::{Confidence, Distribution, ErrorBudget, ErrorComponent, Magnitude, PlantedOutlier};

pub const ENV_PREFIX: &str = "CASIMIR__";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("environment override {var}: {reason}")]
    Override { var: String, reason: String },
    #[error("{key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("{key}: file {path} does not exist")]
    MissingFile { key: String, path: PathBuf },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kinds: Vec<String>,
    /// K
    pub temperature: f64,
    pub l_max: Option<usize>,
    pub quad_tol: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kinds: vec!["impedance".into()],
            temperature: 300.0,
            l_max: None,
            quad_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsSection {
    /// Tabulated n, k; the Drude closed form is used when absent.
    pub table: Option<PathBuf>,
    pub unit: Option<String>,
    /// rad/s
    pub omega_p: f64,
    /// rad/s
    pub gamma: f64,
}

impl Default for OpticsSection {
    fn default() -> Self {
        Self {
            table: None,
            unit: None,
            omega_p: 1.37e16,
            gamma: 5.3e13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub z_min: f64,
    pub z_max: f64,
    pub z_step: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            z_min: 150e-9,
            z_max: 760e-9,
            z_step: 5e-9,
        }
    }
}

impl GridSection {
    /// `z_min + i * z_step` up to `z_max` inclusive.
    pub fn separations(&self) -> Vec<f64> {
        let n = ((self.z_max - self.z_min) / self.z_step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.z_min + i as f64 * self.z_step).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoughnessSection {
    pub sphere: Option<PathBuf>,
    pub plate: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SphereSection {
    pub radius: f64,
    pub radius_error: f64,
}

impl Default for SphereSection {
    fn default() -> Self {
        Self {
            radius: 148.7e-6,
            radius_error: 0.2e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheorySection {
    /// Separation uncertainty, m.
    pub dz: f64,
    pub optical_rel: f64,
}

impl Default for TheorySection {
    fn default() -> Self {
        Self {
            dz: 0.6e-9,
            optical_rel: 0.005,
        }
    }
}

/// One `[[noise]]` entry; exactly one of `relative` / `absolute` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseEntry {
    pub label: String,
    pub distribution: String,
    pub relative: Option<f64>,
    /// Pa
    pub absolute: Option<f64>,
    pub dof: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSection {
    pub generator: String,
    pub n_sets: usize,
    pub points_per_set: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub bin_width: f64,
    pub seed: u64,
    pub outliers: Vec<PlantedOutlier>,
    /// Grubbs significance for rejecting whole sets; 0 disables.
    pub outlier_significance: f64,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        Self {
            generator: "impedance".into(),
            n_sets: 14,
            points_per_set: 290,
            z_min: 160e-9,
            z_max: 750e-9,
            bin_width: 1.2e-9,
            seed: 1,
            outliers: Vec::new(),
            outlier_significance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExclusionSection {
    pub tested: Vec<String>,
    pub confidence: f64,
    pub window: f64,
    pub window_threshold: f64,
    pub acceptance_factor: f64,
}

impl Default for ExclusionSection {
    fn default() -> Self {
        Self {
            tested: vec!["impedance".into(), "lifshitz_drude".into(), "lifshitz_schwinger".into()],
            confidence: 0.95,
            window: 10e-9,
            window_threshold: 0.5,
            acceptance_factor: 1.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintsSection {
    /// Stack file; the built-in sphere and plate stacks when absent.
    pub stacks: Option<PathBuf>,
    pub sphere_stack: String,
    pub plate_stack: String,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_count: usize,
    /// Band CSV; defaults to the band written by `exclusion` for `band_model`.
    pub band: Option<PathBuf>,
    pub band_model: Option<String>,
    /// Reference constraint CSV (`lambda_m,alpha_max`) to overlay.
    pub reference: Option<PathBuf>,
}

impl Default for ConstraintsSection {
    fn default() -> Self {
        Self {
            stacks: None,
            sphere_stack: "sphere".into(),
            plate_stack: "plate".into(),
            lambda_min: 10e-9,
            lambda_max: 1e-6,
            lambda_count: 40,
            band: None,
            band_model: None,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub optics: OpticsSection,
    pub grid: GridSection,
    pub roughness: RoughnessSection,
    pub sphere: SphereSection,
    pub theory: TheorySection,
    pub noise: Vec<NoiseEntry>,
    pub synthesis: SynthesisSection,
    pub exclusion: ExclusionSection,
    pub constraints: ConstraintsSection,
    pub output: OutputSection,
}

/// Values supplied on the command line; applied after environment overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub confidence: Option<f64>,
    pub unit: Option<String>,
    pub out: Option<PathBuf>,
}

/// A validated configuration with paths made absolute.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    /// Hex SHA-256 of the effective document, excluding the output directory.
    pub hash: String,
}

fn parse_override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_key(doc: &mut toml::Table, section: &str, key: &str, value: toml::Value) -> Result<(), String> {
    let entry = doc
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(key.to_string(), value);
            Ok(())
        }
        _ => Err(format!("[{section}] is not a table")),
    }
}

/// Applies `CASIMIR__SECTION__KEY` variables from `env` to `doc`.
pub fn apply_env_overrides<I>(doc: &mut toml::Table, env: I) -> Result<(), ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut vars: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (var, raw) in vars {
        let path: Vec<String> = var[ENV_PREFIX.len()..].split("__").map(|s| s.to_ascii_lowercase()).collect();
        let bad = |reason: String| ConfigError::Override { var: var.clone(), reason };
        match path.as_slice() {
            [section, key] if !section.is_empty() && !key.is_empty() => {
                set_key(doc, section, key, parse_override_value(&raw)).map_err(bad)?
            }
            _ => return Err(bad("expected CASIMIR__SECTION__KEY".into())),
        }
    }
    Ok(())
}

impl RunConfig {
    /// Reads `path`, applies environment and command-line overrides, and
    /// validates the result.
    pub fn load<I>(path: &Path, env: I, cli: &CliOverrides) -> Result<LoadedConfig, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str_with(&raw, path, &base_dir, env, cli)
    }

    /// As [`RunConfig::load`] for an in-memory document.
    pub fn from_str_with<I>(raw: &str, origin: &Path, base_dir: &Path, env: I, cli: &CliOverrides) -> Result<LoadedConfig, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let syntax = |message: String| ConfigError::Syntax {
            path: origin.to_path_buf(),
            message,
        };
        let mut doc: toml::Table = toml::from_str(raw).map_err(|e| syntax(e.to_string()))?;
        apply_env_overrides(&mut doc, env)?;
        let cli_set = |doc: &mut toml::Table, s: &str, k: &str, v: toml::Value| {
            set_key(doc, s, k, v).map_err(|reason| invalid(&format!("{s}.{k}"), reason))
        };
        if let Some(seed) = cli.seed {
            let seed = i64::try_from(seed).map_err(|_| invalid("synthesis.seed", "must fit in a signed 64-bit integer"))?;
            cli_set(&mut doc, "synthesis", "seed", toml::Value::Integer(seed))?;
        }
        if let Some(c) = cli.confidence {
            cli_set(&mut doc, "exclusion", "confidence", toml::Value::Float(c))?;
        }
        if let Some(u) = &cli.unit {
            cli_set(&mut doc, "optics", "unit", toml::Value::String(u.clone()))?;
        }

        let mut hashed = doc.clone();
        if let Some(toml::Value::Table(out)) = hashed.get_mut("output") {
            out.remove("dir");
            if out.is_empty() {
                hashed.remove("output");
            }
        }
        let canonical = toml::to_string(&hashed).map_err(|e| syntax(e.to_string()))?;
        let hash = Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>();

        let mut config: RunConfig = toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| syntax(e.to_string()))?;
        if let Some(out) = &cli.out {
            config.output.dir = out.clone();
        }
        config.resolve_paths(base_dir);
        config.validate()?;
        Ok(LoadedConfig {
            config,
            base_dir: base_dir.to_path_buf(),
            hash,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix(&mut self.optics.table);
        fix(&mut self.roughness.sphere);
        fix(&mut self.roughness.plate);
        fix(&mut self.constraints.stacks);
        fix(&mut self.constraints.band);
        fix(&mut self.constraints.reference);
        if self.output.dir.is_relative() {
            self.output.dir = base.join(&self.output.dir);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, format!("must be positive, got {v}")))
            }
        };
        let exists = |key: &str, p: &Option<PathBuf>| match p {
            Some(p) if !p.is_file() => Err(ConfigError::MissingFile {
                key: key.to_string(),
                path: p.clone(),
            }),
            _ => Ok(()),
        };

        if self.model.kinds.is_empty() {
            return Err(invalid("model.kinds", "at least one model kind is required"));
        }
        self.model_kinds()?;
        positive("model.temperature", self.model.temperature)?;
        positive("model.quad_tol", self.model.quad_tol)?;

        exists("optics.table", &self.optics.table)?;
        if let Some(u) = &self.optics.unit {
            u.parse::<crate::optics::FrequencyUnit>().map_err(|e| invalid("optics.unit", e.to_string()))?;
        }
        positive("optics.omega_p", self.optics.omega_p)?;
        positive("optics.gamma", self.optics.gamma)?;

        positive("grid.z_min", self.grid.z_min)?;
        positive("grid.z_step", self.grid.z_step)?;
        if !(self.grid.z_max >= self.grid.z_min) {
            return Err(invalid("grid.z_max", "must not be below grid.z_min"));
        }

        exists("roughness.sphere", &self.roughness.sphere)?;
        exists("roughness.plate", &self.roughness.plate)?;
        if self.roughness.sphere.is_some() != self.roughness.plate.is_some() {
            return Err(invalid("roughness", "give both sphere and plate profiles or neither"));
        }

        positive("sphere.radius", self.sphere.radius)?;
        if !(self.sphere.radius_error >= 0.0) {
            return Err(invalid("sphere.radius_error", "must be non-negative"));
        }
        if !(self.theory.dz >= 0.0) || !(self.theory.optical_rel >= 0.0) {
            return Err(invalid("theory", "dz and optical_rel must be non-negative"));
        }

        self.noise_budget()?;

        let s = &self.synthesis;
        s.generator.parse::<ReflectionKind>().map_err(|e| invalid("synthesis.generator", e.to_string()))?;
        if s.n_sets == 0 || s.points_per_set == 0 {
            return Err(invalid("synthesis", "n_sets and points_per_set must be at least 1"));
        }
        positive("synthesis.z_min", s.z_min)?;
        positive("synthesis.bin_width", s.bin_width)?;
        if !(s.z_max > s.z_min) {
            return Err(invalid("synthesis.z_max", "must exceed synthesis.z_min"));
        }
        if !(0.0..1.0).contains(&s.outlier_significance) {
            return Err(invalid("synthesis.outlier_significance", "must lie in [0, 1)"));
        }

        self.tested_kinds()?;
        self.confidence()?;
        positive("exclusion.window", self.exclusion.window)?;
        positive("exclusion.acceptance_factor", self.exclusion.acceptance_factor)?;
        if !(0.0..1.0).contains(&self.exclusion.window_threshold) {
            return Err(invalid("exclusion.window_threshold", "must lie in [0, 1)"));
        }

        let c = &self.constraints;
        exists("constraints.stacks", &c.stacks)?;
        exists("constraints.reference", &c.reference)?;
        positive("constraints.lambda_min", c.lambda_min)?;
        if !(c.lambda_max >= c.lambda_min) {
            return Err(invalid("constraints.lambda_max", "must not be below lambda_min"));
        }
        if c.lambda_count == 0 {
            return Err(invalid("constraints.lambda_count", "must be at least 1"));
        }
        if let Some(m) = &c.band_model {
            m.parse::<ReflectionKind>().map_err(|e| invalid("constraints.band_model", e.to_string()))?;
        }
        Ok(())
    }

    pub fn model_kinds(&self) -> Result<Vec<ReflectionKind>, ConfigError> {
        parse_kinds("model.kinds", &self.model.kinds)
    }

    pub fn tested_kinds(&self) -> Result<Vec<ReflectionKind>, ConfigError> {
        parse_kinds("exclusion.tested", &self.exclusion.tested)
    }

    pub fn generator_kind(&self) -> Result<ReflectionKind, ConfigError> {
        self.synthesis
            .generator
            .parse()
            .map_err(|e: crate::lifshitz::LifshitzError| invalid("synthesis.generator", e.to_string()))
    }

    pub fn confidence(&self) -> Result<Confidence, ConfigError> {
        Confidence::try_from(self.exclusion.confidence).map_err(|e| invalid("exclusion.confidence", e.to_string()))
    }

    pub fn noise_budget(&self) -> Result<ErrorBudget, ConfigError> {
        let components = self
            .noise
            .iter()
            .map(|n| {
                let key = format!("noise[{}]", n.label);
                let distribution = Distribution::parse(&n.distribution, n.dof).map_err(|e| invalid(&key, e.to_string()))?;
                let magnitude = match (n.relative, n.absolute) {
                    (Some(r), None) => Magnitude::Relative(r),
                    (None, Some(a)) => Magnitude::Absolute(a),
                    _ => return Err(invalid(&key, "set exactly one of relative or absolute")),
                };
                ErrorComponent::new(n.label.clone(), distribution, magnitude).map_err(|e| invalid(&key, e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ErrorBudget::new(components))
    }

    /// `lambda_count` log-spaced ranges.
    pub fn lambdas(&self) -> Vec<f64> {
        let c = &self.constraints;
        if c.lambda_count == 1 {
            return vec![c.lambda_min];
        }
        let r = (c.lambda_max / c.lambda_min).ln();
        (0..c.lambda_count)
            .map(|i| c.lambda_min * (r * i as f64 / (c.lambda_count - 1) as f64).exp())
            .collect()
    }
}

fn parse_kinds(key: &str, names: &[String]) -> Result<Vec<ReflectionKind>, ConfigError> {
    let mut out: Vec<ReflectionKind> = Vec::new();
    for n in names {
        let k: ReflectionKind = n.parse().map_err(|e: crate::lifshitz::LifshitzError| invalid(key, e.to_string()))?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(raw: &str, env: &[(&str, &str)]) -> Result<LoadedConfig, ConfigError> {
        let env = env.iter().map(|(k, v)| (k.to_string(), v.to_string()));
        RunConfig::from_str_with(raw, Path::new("test.toml"), Path::new("/base"), env, &CliOverrides::default())
    }

    #[test]
    fn defaults_validate() {
        let c = load("", &[]).unwrap();
        assert_eq!(c.config.model.temperature, 300.0);
        assert_eq!(c.config.output.dir, PathBuf::from("/base/out"));
        assert_eq!(c.hash.len(), 64);
    }

    #[test]
    fn env_overrides() {
        let c = load(
            "[model]\ntemperature = 300.0\n",
            &[
                ("CASIMIR__MODEL__TEMPERATURE", "4.2"),
                ("CASIMIR__SYNTHESIS__GENERATOR", "lifshitz_plasma"),
                ("CASIMIR__EXCLUSION__TESTED", "[\"impedance\"]"),
                ("OTHER", "1"),
            ],
        )
        .unwrap();
        assert_eq!(c.config.model.temperature, 4.2);
        assert_eq!(c.config.synthesis.generator, "lifshitz_plasma");
        assert_eq!(c.config.exclusion.tested, vec!["impedance".to_string()]);
        assert!(matches!(load("", &[("CASIMIR__MODEL", "1")]), Err(ConfigError::Override { .. })));
    }

    #[test]
    fn hash_tracks_content_not_output_dir() {
        let a = load("[model]\ntemperature = 300.0\n", &[]).unwrap();
        let b = load("[model]\ntemperature = 300.0\n[output]\ndir = \"elsewhere\"\n", &[]).unwrap();
        let c = load("[model]\ntemperature = 301.0\n", &[]).unwrap();
        assert_eq!(a.hash, b.hash);
        assert_ne!(a.hash, c.hash);
    }

    #[test]
    fn cli_overrides_win() {
        let cli = CliOverrides {
            seed: Some(7),
            confidence: Some(0.99),
            unit: None,
            out: Some(PathBuf::from("/tmp/x")),
        };
        let c = RunConfig::from_str_with("[synthesis]\nseed = 1\n", Path::new("t"), Path::new("/b"), Vec::new(), &cli).unwrap();
        assert_eq!(c.config.synthesis.seed, 7);
        assert_eq!(c.config.confidence().unwrap(), Confidence::P99);
        assert_eq!(c.config.output.dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(load("[exclusion]\nconfidence = 0.9\n", &[]), Err(ConfigError::Invalid { .. })));
        assert!(matches!(load("[model]\ntemperature = -1.0\n", &[]), Err(ConfigError::Invalid { .. })));
        assert!(matches!(load("[model]\nkinds = [\"bogus\"]\n", &[]), Err(ConfigError::Invalid { .. })));
        assert!(matches!(load("[optics]\ntable = \"missing.txt\"\n", &[]), Err(ConfigError::MissingFile { .. })));
        assert!(matches!(load("[model]\ntypo = 1\n", &[]), Err(ConfigError::Syntax { .. })));
        let noise = "[[noise]]\nlabel = \"a\"\ndistribution = \"normal\"\nrelative = 0.1\nabsolute = 0.1\n";
        assert!(matches!(load(noise, &[]), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn grid_and_lambdas() {
        let g = GridSection {
            z_min: 1.0,
            z_max: 2.0,
            z_step: 0.25,
        };
        assert_eq!(g.separations(), vec![1.0, 1.25, 1.5, 1.75, 2.0]);
        let mut c = RunConfig::default();
        c.constraints.lambda_min = 1e-8;
        c.constraints.lambda_max = 1e-6;
        c.constraints.lambda_count = 3;
        let l = c.lambdas();
        assert!((l[1] - 1e-7).abs() < 1e-20 && (l[2] - 1e-6).abs() < 1e-18);
    }
}
