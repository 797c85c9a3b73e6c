//! Scenario configuration files (TOML), `--set` overrides and resolution
//! into the simulation types.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anc_core::anc::{
    Algorithm, BlockOutput, ControllerKind, ControllerParams, ControllerSpec, Features,
    SecondaryModel,
};
use anc_core::metrics::{DEFAULT_SMOOTHING, DEFAULT_WINDOW};
use anc_core::paths::FirFilter;
use anc_core::signals::{SourceKind, SourceSpec, DEFAULT_SAMPLE_RATE_HZ};
use anc_core::wavelet::{ThresholdDomain, ThresholdKind, WaveletFamily};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

/// Scenarios compiled into the binary, addressed as `builtin:<name>`.
pub const BUNDLED: &[(&str, &str)] =
    &[("tonal-500hz", include_str!("../scenarios/tonal-500hz.toml"))];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    pub iterations: usize,
    /// Master seed. The source, path noise and identification seeds are
    /// `seed`, `seed + 1` and `seed + 2`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub source: SourceConfig,
    pub plant: PlantConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub controller_defaults: ControllerConfig,
    #[serde(default)]
    pub controllers: Vec<ControllerConfig>,
}

fn default_rate() -> f64 {
    DEFAULT_SAMPLE_RATE_HZ
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub kind: SourceKind,
    #[serde(default)]
    pub frequency_hz: Vec<f64>,
    #[serde(default = "default_amplitude")]
    pub amplitude: Vec<f64>,
    #[serde(default)]
    pub noise_variance: f64,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

fn default_amplitude() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SHatMode {
    Perfect,
    Identified,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    /// `builtin:<name>` or a coefficient file path.
    pub primary: String,
    pub secondary: String,
    #[serde(default = "default_s_hat")]
    pub s_hat_mode: SHatMode,
    #[serde(default)]
    pub identification: IdentificationConfig,
    #[serde(default)]
    pub path_noise_variance: f64,
}

fn default_s_hat() -> SHatMode {
    SHatMode::Perfect
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentificationConfig {
    /// Defaults to the length of the true secondary path.
    #[serde(default)]
    pub order: Option<usize>,
    #[serde(default = "default_excitation")]
    pub excitation_length: usize,
    #[serde(default = "default_id_step")]
    pub step_size: f64,
}

fn default_excitation() -> usize {
    20_000
}

fn default_id_step() -> f64 {
    0.01
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        Self {
            order: None,
            excitation_length: default_excitation(),
            step_size: default_id_step(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_smoothing")]
    pub smoothing: usize,
    /// Trailing span used for the final noise reduction.
    #[serde(default = "default_window")]
    pub final_window: usize,
    /// Controller whose final R, minus `target_offset_db`, is the
    /// convergence target.
    #[serde(default = "default_reference")]
    pub reference: String,
    #[serde(default = "default_offset")]
    pub target_offset_db: f64,
    /// Fixed target in dB; replaces the reference-derived one.
    #[serde(default)]
    pub target_db: Option<f64>,
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

fn default_smoothing() -> usize {
    DEFAULT_SMOOTHING
}

fn default_reference() -> String {
    "fxlms".to_string()
}

fn default_offset() -> f64 {
    3.0
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            window: default_window(),
            smoothing: default_smoothing(),
            final_window: default_window(),
            reference: default_reference(),
            target_offset_db: default_offset(),
            target_db: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesConfig {
    pub use_wavelet_threshold: Option<bool>,
    pub variable_threshold: Option<bool>,
    pub variable_step: Option<bool>,
}

/// Controller settings. Every field is optional: unset fields fall back to
/// `[controller_defaults]`, then to the library defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub name: Option<String>,
    pub algorithm: Option<Algorithm>,
    pub features: Option<FeaturesConfig>,
    pub taps: Option<usize>,
    pub mu: Option<f64>,
    pub mu_max: Option<f64>,
    pub mu_error_clamp: Option<f64>,
    pub threshold_kind: Option<ThresholdKind>,
    pub lambda: Option<f64>,
    pub lambda_max: Option<f64>,
    pub lambda_error_clamp: Option<f64>,
    pub threshold_domain: Option<ThresholdDomain>,
    pub block_output: Option<BlockOutput>,
    pub wavelet_family: Option<WaveletFamily>,
    pub wavelet_levels: Option<usize>,
    pub block_length: Option<usize>,
    pub divergence_bound: Option<f64>,
}

impl ControllerConfig {
    fn apply(&self, p: &mut ControllerParams) {
        if let Some(v) = self.taps {
            p.taps = v;
        }
        if let Some(v) = self.mu {
            p.mu_base = v;
        }
        if let Some(v) = self.mu_max {
            p.mu_max = v;
        }
        if let Some(v) = self.mu_error_clamp {
            p.mu_error_clamp = v;
        }
        if let Some(v) = self.threshold_kind {
            p.threshold.kind = v;
        }
        if let Some(v) = self.lambda {
            p.threshold.base_lambda = v;
            // keep the cap proportional unless it is set explicitly
            p.threshold.lambda_max = 10.0 * v;
        }
        if let Some(v) = self.lambda_max {
            p.threshold.lambda_max = v;
        }
        if let Some(v) = self.lambda_error_clamp {
            p.threshold.error_clamp = v;
        }
        if let Some(v) = self.threshold_domain {
            p.threshold_domain = v;
        }
        if let Some(v) = self.block_output {
            p.block_output = v;
        }
        if let Some(v) = self.wavelet_family {
            p.wavelet.family = v;
        }
        if let Some(v) = self.wavelet_levels {
            p.wavelet.levels = v;
        }
        if let Some(v) = self.block_length {
            p.wavelet.block_length = v;
        }
        if let Some(v) = self.divergence_bound {
            p.divergence_bound = Some(v);
        }
    }
}

fn apply_features(base: Features, f: Option<FeaturesConfig>) -> Features {
    let Some(f) = f else { return base };
    Features {
        use_wavelet_threshold: f
            .use_wavelet_threshold
            .unwrap_or(base.use_wavelet_threshold),
        variable_threshold: f.variable_threshold.unwrap_or(base.variable_threshold),
        variable_step: f.variable_step.unwrap_or(base.variable_step),
    }
}

/// Where a configuration came from; relative paths resolve against `base_dir`.
#[derive(Debug, Clone)]
pub struct ConfigSource {
    pub label: String,
    pub text: String,
    pub base_dir: PathBuf,
}

impl ConfigSource {
    /// `builtin:<name>` selects a bundled scenario, anything else is a path.
    pub fn load(arg: &str) -> Result<Self> {
        if let Some(name) = arg.strip_prefix("builtin:") {
            return Self::bundled(name);
        }
        let path = Path::new(arg);
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Ok(Self {
            label: arg.to_string(),
            text,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let (_, text) = BUNDLED.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            let names: Vec<_> = BUNDLED.iter().map(|(n, _)| *n).collect();
            CliError::Config(vec![format!(
                "no bundled scenario '{name}' (available: {})",
                names.join(", ")
            )])
        })?;
        Ok(Self {
            label: format!("builtin:{name}"),
            text: text.to_string(),
            base_dir: PathBuf::new(),
        })
    }

    /// Parses the document, applies `key=value` overrides, then deserializes.
    pub fn parse(&self, overrides: &[String]) -> Result<ScenarioConfig> {
        let mut doc: toml::Table =
            self.text
                .parse()
                .map_err(|e: toml::de::Error| CliError::Parse {
                    path: self.label.clone(),
                    message: e.to_string(),
                })?;
        let mut problems = Vec::new();
        for o in overrides {
            if let Err(msg) = apply_override(&mut doc, o) {
                problems.push(msg);
            }
        }
        if !problems.is_empty() {
            return Err(CliError::Config(problems));
        }
        ScenarioConfig::deserialize(toml::Value::Table(doc)).map_err(|e| CliError::Parse {
            path: self.label.clone(),
            message: e.to_string(),
        })
    }
}

/// Sets a dotted path (`plant.path_noise_variance=0.01`,
/// `controllers.1.mu=0.02`). The value is read as a TOML literal, falling
/// back to a bare string.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> std::result::Result<(), String> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override '{assignment}' is not of the form key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override key '{key}' has an empty segment"));
    }
    set_table(doc, &parts, value).map_err(|m| format!("override '{key}': {m}"))
}

fn set_table(
    table: &mut toml::Table,
    parts: &[&str],
    value: toml::Value,
) -> std::result::Result<(), String> {
    let (head, rest) = parts.split_first().expect("non-empty path");
    if rest.is_empty() {
        table.insert(head.to_string(), value);
        return Ok(());
    }
    let entry = table
        .entry(head.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    set_value(entry, head, rest, value)
}

fn set_value(
    target: &mut toml::Value,
    name: &str,
    rest: &[&str],
    value: toml::Value,
) -> std::result::Result<(), String> {
    match target {
        toml::Value::Table(t) => set_table(t, rest, value),
        toml::Value::Array(items) => {
            let (idx, tail) = rest.split_first().expect("non-empty path");
            let i: usize = idx
                .parse()
                .map_err(|_| format!("'{name}' is a list and '{idx}' is not an index"))?;
            let len = items.len();
            let item = items
                .get_mut(i)
                .ok_or_else(|| format!("index {i} out of range ({len} entries)"))?;
            if tail.is_empty() {
                return Err("cannot replace a whole list entry".to_string());
            }
            set_value(item, idx, tail, value)
        }
        _ => Err(format!("'{name}' is not a table")),
    }
}

/// Filter reference resolved against the config directory.
fn resolve_filter(spec: &str, base_dir: &Path) -> std::result::Result<FirFilter, String> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return FirFilter::builtin(name).ok_or_else(|| format!("unknown builtin filter '{name}'"));
    }
    let path = base_dir.join(spec);
    FirFilter::from_coefficient_file(&path).map_err(|e| e.to_string())
}

/// Everything a run needs, with all defaults filled in.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub name: String,
    pub sample_rate_hz: f64,
    pub iterations: usize,
    pub seed: u64,
    pub source: SourceSpec,
    pub primary: FirFilter,
    pub secondary: FirFilter,
    pub secondary_model: SecondaryModel,
    pub path_noise_variance: f64,
    pub path_noise_seed: u64,
    pub metrics: MetricsConfig,
    pub controllers: Vec<ControllerSpec>,
    pub output_dir: PathBuf,
}

impl ResolvedScenario {
    pub fn scenario(&self) -> anc_core::anc::Scenario {
        anc_core::anc::Scenario {
            name: self.name.clone(),
            sample_rate_hz: self.sample_rate_hz,
            source: self.source.clone(),
            primary: self.primary.clone(),
            secondary: self.secondary.clone(),
            secondary_model: self.secondary_model,
            path_noise_variance: self.path_noise_variance,
            path_noise_seed: self.path_noise_seed,
            iterations: self.iterations,
        }
    }
}

fn is_safe_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl ScenarioConfig {
    /// Validates every field and resolves filters and defaults. All problems
    /// are reported in one error.
    pub fn resolve(&self, base_dir: &Path) -> Result<ResolvedScenario> {
        let mut problems = Vec::new();
        if !is_safe_name(&self.name) {
            problems.push(format!(
                "name '{}' must be non-empty and use only letters, digits, '-' and '_'",
                self.name
            ));
        }
        if self.iterations == 0 {
            problems.push("iterations must be positive".to_string());
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            problems.push(format!(
                "sample_rate_hz {} must be positive",
                self.sample_rate_hz
            ));
        }

        let source = SourceSpec {
            kind: self.source.kind,
            frequency_hz: self.source.frequency_hz.clone(),
            amplitude: self.source.amplitude.clone(),
            noise_variance: self.source.noise_variance,
            seed: self.seed,
            length_samples: self.iterations.max(1),
            path: self.source.path.as_ref().map(|p| base_dir.join(p)),
        };
        if self.sample_rate_hz > 0.0 {
            problems.extend(
                source
                    .problems(self.sample_rate_hz)
                    .into_iter()
                    .map(|p| format!("source: {p}")),
            );
        }

        let primary = resolve_filter(&self.plant.primary, base_dir)
            .map_err(|e| problems.push(format!("plant.primary: {e}")))
            .ok();
        let secondary = resolve_filter(&self.plant.secondary, base_dir)
            .map_err(|e| problems.push(format!("plant.secondary: {e}")))
            .ok();
        if !(self.plant.path_noise_variance.is_finite() && self.plant.path_noise_variance >= 0.0) {
            problems.push(format!(
                "plant.path_noise_variance {} must be non-negative",
                self.plant.path_noise_variance
            ));
        }
        let id = &self.plant.identification;
        let secondary_model = match self.plant.s_hat_mode {
            SHatMode::Perfect => SecondaryModel::Perfect,
            SHatMode::Identified => {
                let order = id
                    .order
                    .or(secondary.as_ref().map(FirFilter::len))
                    .unwrap_or(1);
                if order == 0 {
                    problems.push("plant.identification.order must be positive".to_string());
                }
                if id.excitation_length == 0 {
                    problems.push(
                        "plant.identification.excitation_length must be positive".to_string(),
                    );
                }
                if !(id.step_size.is_finite() && id.step_size > 0.0) {
                    problems.push(format!(
                        "plant.identification.step_size {} must be positive",
                        id.step_size
                    ));
                }
                SecondaryModel::Identified {
                    order,
                    excitation_length: id.excitation_length,
                    step_size: id.step_size,
                    seed: self.seed.wrapping_add(2),
                }
            }
        };

        let m = &self.metrics;
        if m.window == 0 || m.window > self.iterations {
            problems.push(format!(
                "metrics.window {} must be in 1..=iterations",
                m.window
            ));
        }
        if m.final_window == 0 || m.final_window > self.iterations {
            problems.push(format!(
                "metrics.final_window {} must be in 1..=iterations",
                m.final_window
            ));
        }
        if m.smoothing == 0 {
            problems.push("metrics.smoothing must be positive".to_string());
        }

        if self.controllers.is_empty() {
            problems.push("at least one controller must be listed".to_string());
        }
        if self.controller_defaults.name.is_some() || self.controller_defaults.algorithm.is_some() {
            problems.push("controller_defaults cannot set name or algorithm".to_string());
        }
        let mut names = BTreeSet::new();
        let mut controllers = Vec::new();
        for (i, c) in self.controllers.iter().enumerate() {
            let Some(algorithm) = c.algorithm else {
                problems.push(format!("controllers[{i}]: algorithm is required"));
                continue;
            };
            let name = c.name.clone().unwrap_or_else(|| algorithm.to_string());
            if !is_safe_name(&name) {
                problems.push(format!(
                    "controllers[{i}]: name '{name}' must use only letters, digits, '-' and '_'"
                ));
            }
            if !names.insert(name.clone()) {
                problems.push(format!("controllers[{i}]: duplicate name '{name}'"));
            }
            let base = ControllerKind::new(algorithm);
            let features = apply_features(
                apply_features(base.features, self.controller_defaults.features),
                c.features,
            );
            let mut params = ControllerParams::default();
            self.controller_defaults.apply(&mut params);
            c.apply(&mut params);
            problems.extend(
                params
                    .problems()
                    .into_iter()
                    .map(|p| format!("controllers[{i}] ({name}): {p}")),
            );
            if let Some(b) = params.divergence_bound {
                if !(b.is_finite() && b > 0.0) {
                    problems.push(format!(
                        "controllers[{i}] ({name}): divergence_bound {b} must be positive"
                    ));
                }
            }
            controllers.push(ControllerSpec {
                name,
                kind: base.with_features(features),
                params,
            });
        }

        if !problems.is_empty() {
            return Err(CliError::Config(problems));
        }
        let output_dir = match &self.output_dir {
            Some(p) => base_dir.join(p),
            None => PathBuf::from("runs").join(&self.name),
        };
        Ok(ResolvedScenario {
            name: self.name.clone(),
            sample_rate_hz: self.sample_rate_hz,
            iterations: self.iterations,
            seed: self.seed,
            source,
            primary: primary.expect("checked above"),
            secondary: secondary.expect("checked above"),
            secondary_model,
            path_noise_variance: self.plant.path_noise_variance,
            path_noise_seed: self.seed.wrapping_add(1),
            metrics: self.metrics.clone(),
            controllers,
            output_dir,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> toml::Table {
        text.parse().unwrap()
    }

    #[test]
    fn override_nested_key() {
        let mut t = table("[plant]\nprimary = \"a\"\n");
        apply_override(&mut t, "plant.path_noise_variance=0.25").unwrap();
        assert_eq!(t["plant"]["path_noise_variance"].as_float(), Some(0.25));
        apply_override(&mut t, "plant.primary=builtin:delay-3").unwrap();
        assert_eq!(t["plant"]["primary"].as_str(), Some("builtin:delay-3"));
    }

    #[test]
    fn override_list_entry() {
        let mut t = table(
            "[[controllers]]\nalgorithm = \"fxlms\"\n[[controllers]]\nalgorithm = \"lms-direct\"\n",
        );
        apply_override(&mut t, "controllers.1.mu=0.02").unwrap();
        assert_eq!(t["controllers"][1]["mu"].as_float(), Some(0.02));
        assert!(apply_override(&mut t, "controllers.5.mu=0.02").is_err());
        assert!(apply_override(&mut t, "controllers.x.mu=0.02").is_err());
    }

    #[test]
    fn override_creates_missing_tables() {
        let mut t = table("");
        apply_override(&mut t, "metrics.window=250").unwrap();
        assert_eq!(t["metrics"]["window"].as_integer(), Some(250));
        assert!(apply_override(&mut t, "no-equals-sign").is_err());
    }

    #[test]
    fn bundled_scenario_resolves() {
        let src = ConfigSource::bundled("tonal-500hz").unwrap();
        let cfg = src.parse(&[]).unwrap();
        let r = cfg.resolve(&src.base_dir).unwrap();
        assert_eq!(r.controllers.len(), 4);
        assert!(ConfigSource::bundled("nope").is_err());
    }

    #[test]
    fn all_problems_reported_together() {
        let src = ConfigSource::bundled("tonal-500hz").unwrap();
        let cfg = src
            .parse(&[
                "iterations=0".into(),
                "plant.primary=builtin:missing".into(),
                "controllers.0.mu=-1.0".into(),
            ])
            .unwrap();
        match cfg.resolve(Path::new("")) {
            Err(CliError::Config(p)) => {
                assert!(p.iter().any(|m| m.contains("iterations")), "{p:?}");
                assert!(p.iter().any(|m| m.contains("plant.primary")), "{p:?}");
                assert!(p.iter().any(|m| m.contains("controllers[0]")), "{p:?}");
            }
            other => panic!("{other:?}"),
        }
    }
}
