//! Run configuration: a single versioned JSON document.
//!
//! The schema lives in `docs/run-config.schema.json`; parsing rejects
//! unknown keys everywhere, so a config that deserializes here is one
//! the schema accepts. Every field except `config_version` and `model`
//! is optional and falls back to the model's defaults, which keeps the
//! minimal config to two lines while still letting a run pin every
//! coefficient, bound, and solver knob.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ctesn_core::models::{
    heating, heating_family, heating_initial_state, heating_param_space, robertson,
    robertson_family, robertson_initial_state, robertson_param_space, HeatingParams,
    RobertsonParams, HEATING_SPAN, ROBERTSON_SPAN,
};
use ctesn_core::ode::OdeSystem;
use ctesn_core::params::BoxSpace;
use ctesn_core::readout::TimeGrid;
use ctesn_core::surrogate::PstarRule;
use ctesn_core::TrainingConfig;
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug)]
pub enum ConfigError {
    Io(PathBuf, std::io::Error),
    Parse(String),
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(path, e) => write!(f, "cannot read config {}: {e}", path.display()),
            ConfigError::Parse(msg) => write!(f, "config does not match the schema: {msg}"),
            ConfigError::Invalid(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// The document as written by the user. Field names here are the
/// schema's property names; resolution into solver-ready types happens
/// in [`ResolvedRun`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub config_version: u32,
    /// "robertson" or "heating".
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robertson: Option<RobertsonSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heating: Option<HeatingSection>,
    /// Parameter box the surrogate trains over; defaults to the
    /// model's standard box.
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub box_bounds: Option<BoxSection>,
    /// Integration span [t0, t1]; defaults to the model's benchmark span.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tspan: Option<[f64; 2]>,
    #[serde(default)]
    pub training: TrainingSection,
    /// Where commands write their outputs; created if missing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Seed for every random draw in training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobertsonSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k3: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatingSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_rooms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_room_set: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_fluid_set: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_room: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_heater: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_exchange: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_heater: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_i: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_ambient: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Training knobs, all optional; the defaults are the library's.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reservoir_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svd_cutoff: Option<f64>,
    /// "log" or "linear" sample times for the readout fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_grid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abstol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reltol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
    /// "box_midpoint" or "first_sample".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pstar_rule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize_drive: Option<bool>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelChoice {
    Robertson(RobertsonParams),
    Heating(HeatingParams),
}

/// A config with every default filled in and every cross-field rule
/// checked, ready to hand to the library.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub model: ModelChoice,
    pub space: BoxSpace,
    pub tspan: (f64, f64),
    pub training: TrainingConfig,
    pub out_dir: PathBuf,
    /// The document this run was resolved from, echoed into reports.
    pub source: RunConfig,
}

impl ResolvedRun {
    pub fn model_name(&self) -> &'static str {
        match self.model {
            ModelChoice::Robertson(_) => "robertson",
            ModelChoice::Heating(_) => "heating",
        }
    }

    /// State dimension of the configured model.
    pub fn model_dim(&self) -> usize {
        match &self.model {
            ModelChoice::Robertson(_) => 3,
            ModelChoice::Heating(params) => params.dim(),
        }
    }

    /// Names of the box dimensions, used by `--params` for prediction
    /// points and by CSV column naming.
    pub fn param_names(&self) -> &'static [&'static str] {
        match self.model {
            ModelChoice::Robertson(_) => &["k1", "k2", "k3"],
            ModelChoice::Heating(_) => &["t_room_set", "t_fluid_set"],
        }
    }

    /// The model family over the parameter box.
    pub fn family(
        &self,
    ) -> Box<dyn Fn(&[f64]) -> (OdeSystem<'static>, Vec<f64>) + Send + Sync> {
        match &self.model {
            ModelChoice::Robertson(_) => Box::new(robertson_family()),
            ModelChoice::Heating(params) => Box::new(heating_family(params.clone())),
        }
    }

    /// The configured model at its own point parameters, for direct solves.
    pub fn system(&self) -> (OdeSystem<'static>, Vec<f64>) {
        match &self.model {
            ModelChoice::Robertson(params) => (robertson(params), robertson_initial_state()),
            ModelChoice::Heating(params) => (heating(params), heating_initial_state(params)),
        }
    }
}

/// Fills defaults and validates. `out_flag` and `seed_flag` are the
/// command-line overrides, which win over the document.
pub fn resolve(
    config: &RunConfig,
    out_flag: Option<&Path>,
    seed_flag: Option<u64>,
) -> Result<ResolvedRun, ConfigError> {
    if config.config_version != CONFIG_VERSION {
        return Err(invalid(format!(
            "config_version {} is not supported; this build reads version {CONFIG_VERSION}",
            config.config_version
        )));
    }

    let model = match config.model.as_str() {
        "robertson" => {
            if config.heating.is_some() {
                return Err(invalid("a heating section makes no sense for model robertson"));
            }
            let section = config.robertson.clone().unwrap_or_default();
            let defaults = RobertsonParams::default();
            let params = RobertsonParams {
                k1: section.k1.unwrap_or(defaults.k1),
                k2: section.k2.unwrap_or(defaults.k2),
                k3: section.k3.unwrap_or(defaults.k3),
            };
            params.validate().map_err(invalid)?;
            ModelChoice::Robertson(params)
        }
        "heating" => {
            if config.robertson.is_some() {
                return Err(invalid("a robertson section makes no sense for model heating"));
            }
            let section = config.heating.clone().unwrap_or_default();
            let defaults = HeatingParams::default();
            let params = HeatingParams {
                n_rooms: section.n_rooms.unwrap_or(defaults.n_rooms),
                t_room_set: section.t_room_set.unwrap_or(defaults.t_room_set),
                t_fluid_set: section.t_fluid_set.unwrap_or(defaults.t_fluid_set),
                c_room: section.c_room.unwrap_or(defaults.c_room),
                c_heater: section.c_heater.unwrap_or(defaults.c_heater),
                u_loss: section.u_loss.unwrap_or(defaults.u_loss),
                k_exchange: section.k_exchange.unwrap_or(defaults.k_exchange),
                k_heater: section.k_heater.unwrap_or(defaults.k_heater),
                k_p: section.k_p.unwrap_or(defaults.k_p),
                k_i: section.k_i.unwrap_or(defaults.k_i),
                t_ambient: section.t_ambient.unwrap_or(defaults.t_ambient),
            };
            params.validate().map_err(invalid)?;
            ModelChoice::Heating(params)
        }
        other => {
            return Err(invalid(format!(
                "unknown model {other:?}; expected \"robertson\" or \"heating\""
            )))
        }
    };

    let space = match &config.box_bounds {
        Some(section) => BoxSpace::new(section.lower.clone(), section.upper.clone())
            .map_err(|e| invalid(e.to_string()))?,
        None => match &model {
            ModelChoice::Robertson(params) => robertson_param_space(params),
            ModelChoice::Heating(_) => heating_param_space(),
        },
    };
    let expected_dim = match model {
        ModelChoice::Robertson(_) => 3,
        ModelChoice::Heating(_) => 2,
    };
    if space.dim() != expected_dim {
        return Err(invalid(format!(
            "{} takes a {expected_dim}-dimensional box, got {} bounds",
            config.model,
            space.dim()
        )));
    }

    let tspan = match config.tspan {
        Some([t0, t1]) => {
            if !t0.is_finite() || !t1.is_finite() || !(t1 > t0) {
                return Err(invalid("tspan must be finite with t1 > t0"));
            }
            (t0, t1)
        }
        None => match model {
            ModelChoice::Robertson(_) => ROBERTSON_SPAN,
            ModelChoice::Heating(_) => HEATING_SPAN,
        },
    };

    let training = resolve_training(&config.training, seed_flag.or(config.seed))?;
    let out_dir = out_flag
        .map(Path::to_path_buf)
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));

    Ok(ResolvedRun { model, space, tspan, training, out_dir, source: config.clone() })
}

fn resolve_training(
    section: &TrainingSection,
    seed: Option<u64>,
) -> Result<TrainingConfig, ConfigError> {
    let mut cfg = TrainingConfig::default();
    if let Some(n_train) = section.n_train {
        cfg.n_train = n_train;
    }
    if let Some(n_r) = section.reservoir_dim {
        cfg.reservoir.n_r = n_r;
    }
    if let Some(density) = section.density {
        cfg.reservoir.density = density;
    }
    if let Some(rho) = section.spectral_radius {
        cfg.reservoir.spectral_radius = rho;
    }
    if let Some(scale) = section.input_scale {
        cfg.reservoir.input_scale = scale;
    }
    if let Some(seed) = seed {
        cfg.reservoir.seed = seed;
    }
    if let Some(n_samples) = section.n_samples {
        cfg.fit.n_samples = n_samples;
    }
    if let Some(ridge) = section.ridge {
        cfg.fit.ridge = ridge;
    }
    if let Some(cutoff) = section.svd_cutoff {
        cfg.fit.svd_cutoff = cutoff;
    }
    if let Some(grid) = &section.time_grid {
        cfg.fit.time_grid = match grid.as_str() {
            "log" => TimeGrid::Log,
            "linear" => TimeGrid::Linear,
            other => {
                return Err(invalid(format!(
                    "unknown time_grid {other:?}; expected \"log\" or \"linear\""
                )))
            }
        };
    }
    if let Some(abstol) = section.abstol {
        cfg.solver.abstol = abstol;
    }
    if let Some(reltol) = section.reltol {
        cfg.solver.reltol = reltol;
    }
    if let Some(max_steps) = section.max_steps {
        cfg.solver.max_steps = max_steps;
    }
    if let Some(rule) = &section.pstar_rule {
        cfg.pstar_rule = match rule.as_str() {
            "box_midpoint" => PstarRule::BoxMidpoint,
            "first_sample" => PstarRule::FirstSample,
            other => {
                return Err(invalid(format!(
                    "unknown pstar_rule {other:?}; expected \"box_midpoint\" or \"first_sample\""
                )))
            }
        };
    }
    if let Some(normalize) = section.normalize_drive {
        cfg.normalize_drive = normalize;
    }
    Ok(cfg)
}

/// Parses a `--params "k=v,..."` override list.
pub fn parse_overrides(text: &str) -> Result<Vec<(String, f64)>, ConfigError> {
    let mut pairs = Vec::new();
    for piece in text.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        let (key, value) = piece
            .split_once('=')
            .ok_or_else(|| invalid(format!("override {piece:?} is not of the form key=value")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| invalid(format!("override {piece:?} has a non-numeric value")))?;
        pairs.push((key.trim().to_string(), value));
    }
    Ok(pairs)
}

/// Applies `--params` overrides to the model's own coefficients, for
/// direct solves.
pub fn apply_model_overrides(
    model: &mut ModelChoice,
    overrides: &[(String, f64)],
) -> Result<(), ConfigError> {
    for (key, value) in overrides {
        match model {
            ModelChoice::Robertson(params) => match key.as_str() {
                "k1" => params.k1 = *value,
                "k2" => params.k2 = *value,
                "k3" => params.k3 = *value,
                other => {
                    return Err(invalid(format!("robertson has no parameter named {other:?}")))
                }
            },
            ModelChoice::Heating(params) => match key.as_str() {
                "n_rooms" => {
                    if *value < 1.0 || value.fract() != 0.0 {
                        return Err(invalid("n_rooms must be a positive integer"));
                    }
                    params.n_rooms = *value as usize;
                }
                "t_room_set" => params.t_room_set = *value,
                "t_fluid_set" => params.t_fluid_set = *value,
                "c_room" => params.c_room = *value,
                "c_heater" => params.c_heater = *value,
                "u_loss" => params.u_loss = *value,
                "k_exchange" => params.k_exchange = *value,
                "k_heater" => params.k_heater = *value,
                "k_p" => params.k_p = *value,
                "k_i" => params.k_i = *value,
                "t_ambient" => params.t_ambient = *value,
                other => {
                    return Err(invalid(format!("heating has no parameter named {other:?}")))
                }
            },
        }
    }
    let check = match model {
        ModelChoice::Robertson(params) => params.validate(),
        ModelChoice::Heating(params) => params.validate(),
    };
    check.map_err(invalid)
}

/// Builds a point in the parameter box from `--params` overrides keyed
/// by dimension name; unspecified components sit at the box midpoint.
pub fn point_from_overrides(
    names: &[&str],
    space: &BoxSpace,
    overrides: &[(String, f64)],
) -> Result<Vec<f64>, ConfigError> {
    let mut point = space.midpoint();
    for (key, value) in overrides {
        let at = names
            .iter()
            .position(|n| n == key)
            .ok_or_else(|| invalid(format!("no box dimension named {key:?}; expected one of {names:?}")))?;
        point[at] = *value;
    }
    Ok(point)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(model: &str) -> RunConfig {
        RunConfig::from_str(&format!(
            "{{\"config_version\": 1, \"model\": \"{model}\"}}"
        ))
        .unwrap()
    }

    #[test]
    fn minimal_robertson_resolves_to_defaults() {
        let run = resolve(&minimal("robertson"), None, None).unwrap();
        assert_eq!(run.model, ModelChoice::Robertson(RobertsonParams::default()));
        assert_eq!(run.tspan, ROBERTSON_SPAN);
        assert_eq!(run.space.dim(), 3);
        assert_eq!(run.training.n_train, 100);
        assert_eq!(run.out_dir, PathBuf::from("."));
    }

    #[test]
    fn minimal_heating_resolves_to_defaults() {
        let run = resolve(&minimal("heating"), None, None).unwrap();
        assert_eq!(run.model_dim(), 21);
        assert_eq!(run.tspan, HEATING_SPAN);
        assert_eq!(run.space.lower(), &[17.0, 65.0]);
        assert_eq!(run.space.upper(), &[23.0, 75.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_str(
            "{\"config_version\": 1, \"model\": \"robertson\", \"verbose\": true}",
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));

        let err = RunConfig::from_str(
            "{\"config_version\": 1, \"model\": \"heating\", \"training\": {\"reps\": 3}}",
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
    }

    #[test]
    fn unknown_model_is_invalid() {
        let config = RunConfig::from_str("{\"config_version\": 1, \"model\": \"lorenz\"}").unwrap();
        assert!(resolve(&config, None, None).is_err());
    }

    #[test]
    fn wrong_version_is_invalid() {
        let config = RunConfig::from_str("{\"config_version\": 2, \"model\": \"heating\"}").unwrap();
        assert!(resolve(&config, None, None).is_err());
    }

    #[test]
    fn mismatched_section_is_invalid() {
        let config = RunConfig::from_str(
            "{\"config_version\": 1, \"model\": \"robertson\", \"heating\": {\"n_rooms\": 4}}",
        )
        .unwrap();
        assert!(resolve(&config, None, None).is_err());
    }

    #[test]
    fn flags_override_the_document() {
        let mut config = minimal("heating");
        config.seed = Some(5);
        config.out_dir = Some(PathBuf::from("from-config"));
        let run = resolve(&config, Some(Path::new("from-flag")), Some(9)).unwrap();
        assert_eq!(run.training.reservoir.seed, 9);
        assert_eq!(run.out_dir, PathBuf::from("from-flag"));

        let run = resolve(&config, None, None).unwrap();
        assert_eq!(run.training.reservoir.seed, 5);
        assert_eq!(run.out_dir, PathBuf::from("from-config"));
    }

    #[test]
    fn training_section_reaches_the_training_config() {
        let config = RunConfig::from_str(
            "{\"config_version\": 1, \"model\": \"heating\", \"training\": {\
             \"n_train\": 12, \"reservoir_dim\": 77, \"n_samples\": 64, \
             \"time_grid\": \"linear\", \"pstar_rule\": \"first_sample\", \
             \"abstol\": 1e-9}}",
        )
        .unwrap();
        let run = resolve(&config, None, None).unwrap();
        assert_eq!(run.training.n_train, 12);
        assert_eq!(run.training.reservoir.n_r, 77);
        assert_eq!(run.training.fit.n_samples, 64);
        assert!(matches!(run.training.fit.time_grid, TimeGrid::Linear));
        assert!(matches!(run.training.pstar_rule, PstarRule::FirstSample));
        assert_eq!(run.training.solver.abstol, 1e-9);
    }

    #[test]
    fn override_parsing_round_trips() {
        let pairs = parse_overrides("k1=0.05, k2=2e4,k3=1e7").unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0], ("k1".to_string(), 0.05));
        assert!(parse_overrides("k1").is_err());
        assert!(parse_overrides("k1=fast").is_err());
    }

    #[test]
    fn model_overrides_apply_by_name() {
        let mut model = ModelChoice::Heating(HeatingParams::default());
        apply_model_overrides(&mut model, &[("n_rooms".to_string(), 4.0)]).unwrap();
        match &model {
            ModelChoice::Heating(params) => assert_eq!(params.n_rooms, 4),
            _ => unreachable!(),
        }
        assert!(apply_model_overrides(&mut model, &[("k9".to_string(), 1.0)]).is_err());
        assert!(apply_model_overrides(&mut model, &[("n_rooms".to_string(), 2.5)]).is_err());
    }

    #[test]
    fn points_default_to_the_box_midpoint() {
        let run = resolve(&minimal("heating"), None, None).unwrap();
        let point = point_from_overrides(run.param_names(), &run.space, &[]).unwrap();
        assert_eq!(point, vec![20.0, 70.0]);
        let point = point_from_overrides(
            run.param_names(),
            &run.space,
            &[("t_fluid_set".to_string(), 66.0)],
        )
        .unwrap();
        assert_eq!(point, vec![20.0, 66.0]);
        assert!(point_from_overrides(run.param_names(), &run.space, &[("k1".to_string(), 1.0)])
            .is_err());
    }
}
