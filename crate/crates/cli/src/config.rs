//! Experiment configuration: a versioned JSON envelope around
//! command-specific parameters, optionally layered over a preset.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::Value;

use phaseprior::injectivity::{CodimConfig, CollisionConfig, OracleConfig, SweepConfig};
use phaseprior::mra::{RecoveryConfig, SampleComplexityConfig};
use phaseprior::priors::RANK_REL_TOL;
use phaseprior::MixingKind;

use crate::presets;
use crate::specs::{Domain, GroupSpec, MixingSpec, PriorSpec, SignalSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// A configuration problem, located as precisely as the input allows.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub message: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub field: Option<String>,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            line: None,
            column: None,
            field: None,
        }
    }

    pub fn at_field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: Some(field.into()),
            ..Self::new(message)
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("config error")?;
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, " at line {l}, column {c}")?;
        }
        if let Some(field) = &self.field {
            write!(f, " in field `{field}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Measure,
    Collide,
    ProbeDim,
    MraSim,
    Sweep,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Measure => "measure",
            Command::Collide => "collide",
            Command::ProbeDim => "probe-dim",
            Command::MraSim => "mra-sim",
            Command::Sweep => "sweep",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope<'a> {
    schema_version: u32,
    #[serde(default)]
    command: Option<Command>,
    #[serde(default)]
    preset: Option<String>,
    #[serde(borrow, default)]
    parameters: Option<&'a RawValue>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureParams {
    #[serde(rename = "N", default)]
    pub n: Option<usize>,
    pub x: Vec<f64>,
    #[serde(default)]
    pub domain: Domain,
    #[serde(default)]
    pub blocks: Option<Vec<usize>>,
    #[serde(default)]
    pub mixing: MixingSpec,
}

fn default_dimension_trials() -> usize {
    20
}

fn default_rank_tol() -> f64 {
    RANK_REL_TOL
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleParams {
    pub grid_points: usize,
    #[serde(default)]
    pub config: OracleConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollideParams {
    pub prior: PriorSpec,
    #[serde(default)]
    pub mixing: MixingSpec,
    /// One search per mixing seed; defaults to the seed of `mixing`.
    #[serde(default)]
    pub mixing_seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub blocks: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub search: CollisionConfig,
    /// Search for a partner of a random prior signal instead of over pairs.
    #[serde(default)]
    pub anchored: bool,
    /// Also run the identity-mixing controls (torus rotation, shifted sparse support).
    #[serde(default)]
    pub controls: bool,
    #[serde(default)]
    pub oracle: Option<OracleParams>,
    #[serde(default = "default_dimension_trials")]
    pub dimension_trials: usize,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
}

fn default_pairs() -> usize {
    20
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeDimParams {
    #[serde(rename = "N", default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub blocks: Option<Vec<usize>>,
    pub manifold: MixingKind,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Rescale `y` to the norm of `x` (necessary for rotations).
    #[serde(default = "default_true")]
    pub equal_norms: bool,
    #[serde(default)]
    pub codim: CodimConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverParams {
    pub prior: PriorSpec,
    #[serde(default)]
    pub mixing: MixingSpec,
    #[serde(default)]
    pub config: RecoveryConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MraSimParams {
    pub group: GroupSpec,
    pub signal: SignalSpec,
    pub n: usize,
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Also write `observations.bin`.
    #[serde(default)]
    pub save_observations: bool,
    #[serde(default)]
    pub recover: Option<RecoverParams>,
}

fn sc_default() -> SampleComplexityConfig {
    SampleComplexityConfig::default()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleComplexityParams {
    pub prior: PriorSpec,
    #[serde(default)]
    pub mixing: MixingSpec,
    pub group: GroupSpec,
    pub sigmas: Vec<f64>,
    #[serde(default = "default_target")]
    pub target_error: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_n_min")]
    pub n_min: usize,
    #[serde(default = "default_n_cap")]
    pub n_cap: usize,
    #[serde(default = "default_grid_ratio")]
    pub grid_ratio: f64,
    #[serde(default)]
    pub signal_seed: u64,
    #[serde(default)]
    pub signal_norm: Option<f64>,
    #[serde(default)]
    pub recovery: RecoveryConfig,
}

fn default_target() -> f64 {
    sc_default().target_error
}

fn default_seeds() -> Vec<u64> {
    sc_default().seeds
}

fn default_n_min() -> usize {
    sc_default().n_min
}

fn default_n_cap() -> usize {
    sc_default().n_cap
}

fn default_grid_ratio() -> f64 {
    sc_default().grid_ratio
}

impl SampleComplexityParams {
    pub fn config(&self) -> SampleComplexityConfig {
        SampleComplexityConfig {
            target_error: self.target_error,
            seeds: self.seeds.clone(),
            n_min: self.n_min,
            n_cap: self.n_cap,
            grid_ratio: self.grid_ratio,
            signal_seed: self.signal_seed,
            signal_norm: self.signal_norm,
            recovery: self.recovery.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    #[serde(default)]
    pub threshold: Option<SweepConfig>,
    #[serde(default)]
    pub sample_complexity: Option<SampleComplexityParams>,
}

#[derive(Clone, Debug)]
pub enum Params {
    Measure(MeasureParams),
    Collide(CollideParams),
    ProbeDim(ProbeDimParams),
    MraSim(MraSimParams),
    Sweep(SweepParams),
}

/// A parsed configuration.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub command: Command,
    pub preset: Option<String>,
    pub params: Params,
    /// Parameters after the preset overlay.
    pub resolved_parameters: Value,
    pub output_dir: Option<PathBuf>,
    /// Relative file paths in the parameters resolve against this directory.
    pub base_dir: PathBuf,
    /// The configuration text as given.
    pub source: String,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base)
}

fn json_error(e: &serde_json::Error, text: &str, offset: usize, field: Option<String>) -> ConfigError {
    let (line, column) = absolute_position(text, offset, e.line(), e.column());
    ConfigError {
        message: strip_position(&e.to_string()),
        line,
        column,
        field: field.filter(|f| !f.is_empty() && f != "."),
    }
}

/// serde_json appends " at line L column C"; the position is reported separately.
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// Map a (line, column) inside the substring starting at byte `offset` to a
/// position in the whole text.
fn absolute_position(text: &str, offset: usize, line: usize, column: usize) -> (Option<usize>, Option<usize>) {
    if line == 0 {
        return (None, None);
    }
    let sub = &text[offset..];
    let mut idx = 0;
    for _ in 1..line {
        match sub[idx..].find('\n') {
            Some(p) => idx += p + 1,
            None => break,
        }
    }
    let abs = (offset + idx + column.saturating_sub(1)).min(text.len());
    let before = &text[..abs];
    let abs_line = before.matches('\n').count() + 1;
    let line_start = before.rfind('\n').map_or(0, |p| p + 1);
    (Some(abs_line), Some(abs - line_start + 1))
}

fn parse_located<T: DeserializeOwned>(text: &str, raw: &str, offset: usize, prefix: &str) -> Result<T, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(raw);
    serde_path_to_error::deserialize::<_, T>(&mut de).map_err(|e| {
        let path = format!("{prefix}{}", e.path());
        json_error(e.inner(), text, offset, Some(path))
    })
}

fn parse_value<T: DeserializeOwned>(value: Value, prefix: &str) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize::<_, T>(value).map_err(|e| {
        let path = format!("{prefix}{}", e.path());
        ConfigError::at_field(path.trim_end_matches('.'), strip_position(&e.inner().to_string()))
    })
}

fn typed_params(command: Command, value: Value) -> Result<Params, ConfigError> {
    let p = "parameters.";
    Ok(match command {
        Command::Measure => Params::Measure(parse_value(value, p)?),
        Command::Collide => Params::Collide(parse_value(value, p)?),
        Command::ProbeDim => Params::ProbeDim(parse_value(value, p)?),
        Command::MraSim => Params::MraSim(parse_value(value, p)?),
        Command::Sweep => Params::Sweep(parse_value(value, p)?),
    })
}

/// Check the user's own parameters for located errors (unknown fields,
/// wrong types). Missing fields are ignored when a preset fills them in.
fn precheck(command: Command, text: &str, raw: &str, offset: usize, with_preset: bool) -> Result<(), ConfigError> {
    let p = "parameters.";
    let res = match command {
        Command::Measure => parse_located::<MeasureParams>(text, raw, offset, p).map(drop),
        Command::Collide => parse_located::<CollideParams>(text, raw, offset, p).map(drop),
        Command::ProbeDim => parse_located::<ProbeDimParams>(text, raw, offset, p).map(drop),
        Command::MraSim => parse_located::<MraSimParams>(text, raw, offset, p).map(drop),
        Command::Sweep => parse_located::<SweepParams>(text, raw, offset, p).map(drop),
    };
    match res {
        Err(e) if with_preset && e.message.starts_with("missing field") => Ok(()),
        other => other,
    }
}

/// Recursive object merge; `overlay` wins on scalars and arrays.
pub fn merge(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

pub fn parse_config(text: &str, base_dir: &Path) -> Result<ExperimentConfig, ConfigError> {
    let env: Envelope<'_> = serde_json::from_str(text).map_err(|e| json_error(&e, text, 0, None))?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(ConfigError::at_field(
            "schema_version",
            format!(
                "unsupported schema version {}, expected {SCHEMA_VERSION}",
                env.schema_version
            ),
        ));
    }
    let preset = match &env.preset {
        Some(name) => Some(presets::find(name).ok_or_else(|| {
            ConfigError::at_field("preset", format!("unknown preset '{name}' (see `phaseprior presets`)"))
        })?),
        None => None,
    };
    let command = match (env.command, &preset) {
        (Some(c), Some(p)) if c != p.command => {
            return Err(ConfigError::at_field(
                "command",
                format!("preset '{}' runs '{}', not '{c}'", p.name, p.command),
            ))
        }
        (Some(c), _) => c,
        (None, Some(p)) => p.command,
        (None, None) => {
            return Err(ConfigError::at_field(
                "command",
                "either `command` or `preset` is required",
            ))
        }
    };

    let mut resolved = preset.map_or_else(|| Value::Object(Default::default()), |p| (p.parameters)());
    if let Some(raw) = env.parameters {
        let offset = raw.get().as_ptr() as usize - text.as_ptr() as usize;
        precheck(command, text, raw.get(), offset, preset.is_some())?;
        let user: Value = serde_json::from_str(raw.get()).map_err(|e| json_error(&e, text, offset, None))?;
        if !user.is_object() {
            return Err(ConfigError::at_field("parameters", "must be a JSON object"));
        }
        merge(&mut resolved, &user);
    }
    let params = typed_params(command, resolved.clone())?;
    Ok(ExperimentConfig {
        command,
        preset: preset.map(|p| p.name.to_string()),
        params,
        resolved_parameters: resolved,
        output_dir: env.output_dir,
        base_dir: base_dir.to_path_buf(),
        source: text.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_inside_parameters() {
        let text = "{\n  \"schema_version\": 1,\n  \"command\": \"measure\",\n  \"parameters\": {\n    \"x\": [1, 2],\n    \"bogus\": 3\n  }\n}";
        let err = parse_config(text, Path::new(".")).unwrap_err();
        assert_eq!(err.line, Some(6), "{err}");
        assert!(err.message.contains("bogus"));
    }

    #[test]
    fn position_in_envelope() {
        let text = "{\"schema_version\": 1,\n \"comand\": \"measure\"}";
        let err = parse_config(text, Path::new(".")).unwrap_err();
        assert_eq!(err.line, Some(2));
    }

    #[test]
    fn wrong_type_reports_field_path() {
        let text = r#"{"schema_version": 1, "command": "probe-dim", "parameters": {"N": 7, "manifold": "special-orthogonal", "pairs": "many"}}"#;
        let err = parse_config(text, Path::new(".")).unwrap_err();
        assert_eq!(err.field.as_deref(), Some("parameters.pairs"));
        assert_eq!(err.line, Some(1));
    }

    #[test]
    fn preset_overlay() {
        let text = r#"{"schema_version": 1, "preset": "prop-codim-so", "parameters": {"pairs": 3}}"#;
        let cfg = parse_config(text, Path::new(".")).unwrap();
        assert_eq!(cfg.command, Command::ProbeDim);
        let Params::ProbeDim(p) = cfg.params else { panic!() };
        assert_eq!(p.pairs, 3);
        assert_eq!(p.n, Some(7));
    }

    #[test]
    fn command_preset_conflict_and_version() {
        let text = r#"{"schema_version": 1, "preset": "prop-codim-so", "command": "measure"}"#;
        assert!(parse_config(text, Path::new(".")).is_err());
        let text = r#"{"schema_version": 2, "command": "measure", "parameters": {"x": [1]}}"#;
        let err = parse_config(text, Path::new(".")).unwrap_err();
        assert_eq!(err.field.as_deref(), Some("schema_version"));
    }

    #[test]
    fn merge_is_recursive() {
        let mut a = serde_json::json!({"a": {"b": 1, "c": 2}, "d": [1]});
        merge(&mut a, &serde_json::json!({"a": {"c": 3}, "d": [2, 3]}));
        assert_eq!(a, serde_json::json!({"a": {"b": 1, "c": 3}, "d": [2, 3]}));
    }
}
