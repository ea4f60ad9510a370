//! Scenario configuration: flat dotted keys in SI units.
//!
//! ```toml
//! source.mu_t = 0.1
//! alice.distance_m = 7.5e5
//! both.sigma_track_rad = 5e-6   # sets alice.* and bob.*
//! mc.adjudication = "first_principles"
//! ```
//!
//! Nested TOML tables (`[alice]`) are equivalent to the dotted form. Keys
//! that are not set keep their `paper-defaults` value.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Value;

use crate::channel::{
    derive_channel_with, BeamWidthModel, ChannelOptions, DerivedChannel, LinkGeometry, PointingExponent, ReceiverParams,
    SourceParams,
};
use crate::error::ModelError;
use crate::oracle::{Adjudication, FovMode};
use crate::performance::QuadConfig;

/// Name of the built-in configuration.
pub const PAPER_DEFAULTS: &str = "paper-defaults";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parse error{}: {message}", line_suffix(*.line))]
    Parse { line: Option<usize>, message: String },

    #[error("unknown key `{key}`{}{}", line_suffix(*.line), suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey {
        key: String,
        suggestion: Option<String>,
        line: Option<usize>,
    },

    #[error("key `{key}` expects {expected}")]
    Type { key: String, expected: &'static str },

    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },

    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
}

fn line_suffix(line: Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

/// One receiver together with the link leading to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub receiver: ReceiverParams,
    pub geometry: LinkGeometry,
}

/// Monte Carlo settings used by `mc`, `validate` and MC sweep rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    /// Rao–Blackwell draws.
    pub draws: u64,
    /// Slots per slot-level simulation.
    pub slots: u64,
    pub seed: u64,
    pub adjudication: Adjudication,
    pub fov_mode: FovMode,
    /// Fixed per-photon survival probabilities for boosted slot runs.
    pub eta_a: Option<f64>,
    pub eta_b: Option<f64>,
    /// Add Monte Carlo rows next to the analytic ones.
    pub attach: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub source: SourceParams,
    pub options: ChannelOptions,
    pub alice: LinkConfig,
    pub bob: LinkConfig,
    pub quad: QuadConfig,
    pub mc: McSettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::paper_defaults()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Float,
    Int,
    Bool,
    Choice(&'static [&'static str]),
    OptionalFloat,
}

const SOURCE_KEYS: &[(&str, Kind)] = &[
    ("wavelength_m", Kind::Float),
    ("waist_m", Kind::Float),
    ("mu_t", Kind::Float),
    ("slot_s", Kind::Float),
    ("beam_width", Kind::Choice(&["exact", "far_field"])),
    ("pointing_exponent", Kind::Choice(&["published", "gaussian"])),
];

const LINK_KEYS: &[(&str, Kind)] = &[
    ("aperture_radius_m", Kind::Float),
    ("eta_det", Kind::Float),
    ("theta_fov_rad", Kind::Float),
    ("sigma_fov_rad", Kind::Float),
    ("phi_b_per_s_sr", Kind::Float),
    ("distance_m", Kind::Float),
    ("sigma_track_rad", Kind::Float),
];

const QUAD_KEYS: &[(&str, Kind)] = &[("nodes", Kind::Int), ("rel_tol", Kind::Float), ("max_nodes", Kind::Int)];

const MC_KEYS: &[(&str, Kind)] = &[
    ("draws", Kind::Int),
    ("slots", Kind::Int),
    ("seed", Kind::Int),
    ("adjudication", Kind::Choice(&["paper_table", "first_principles"])),
    ("fov_mode", Kind::Choice(&["per_photon", "per_slot"])),
    ("eta_a", Kind::OptionalFloat),
    ("eta_b", Kind::OptionalFloat),
    ("attach", Kind::Bool),
];

fn sections() -> [(&'static str, &'static [(&'static str, Kind)]); 5] {
    [("source", SOURCE_KEYS), ("alice", LINK_KEYS), ("bob", LINK_KEYS), ("quad", QUAD_KEYS), ("mc", MC_KEYS)]
}

/// Every accepted key, in emission order. `both.*` aliases are accepted
/// on input but not listed.
pub fn known_keys() -> Vec<String> {
    sections()
        .iter()
        .flat_map(|(s, keys)| keys.iter().map(move |(k, _)| format!("{s}.{k}")))
        .collect()
}

fn kind_of(key: &str) -> Option<Kind> {
    let (section, leaf) = key.split_once('.')?;
    let section = if section == "both" { "alice" } else { section };
    sections()
        .iter()
        .find(|(s, _)| *s == section)?
        .1
        .iter()
        .find(|(k, _)| *k == leaf)
        .map(|(_, kind)| *kind)
}

/// True for keys taking a real number, the only ones a sweep axis can vary.
pub fn is_numeric_key(key: &str) -> bool {
    matches!(kind_of(key), Some(Kind::Float | Kind::Int | Kind::OptionalFloat))
}

fn unknown(key: &str, line: Option<usize>) -> ConfigError {
    let mut candidates = known_keys();
    candidates.extend(LINK_KEYS.iter().map(|(k, _)| format!("both.{k}")));
    let suggestion = candidates
        .into_iter()
        .map(|c| (strsim::jaro_winkler(key, &c), c))
        .filter(|(score, _)| *score > 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c);
    ConfigError::UnknownKey { key: key.into(), suggestion, line }
}

fn float(key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(ConfigError::Type { key: key.into(), expected: "a number" }),
    }
}

fn uint(key: &str, v: &Value) -> Result<u64, ConfigError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(ConfigError::Type { key: key.into(), expected: "a non-negative integer" }),
    }
}

fn choice<'a>(key: &str, v: &'a Value, options: &[&str]) -> Result<&'a str, ConfigError> {
    match v {
        Value::String(s) if options.contains(&s.as_str()) => Ok(s),
        _ => Err(ConfigError::Invalid { key: key.into(), reason: format!("expected one of {}", options.join(", ")) }),
    }
}

impl ScenarioConfig {
    /// Default parameters for both channels, with both links at 500 km.
    pub fn paper_defaults() -> Self {
        let link = LinkConfig {
            receiver: ReceiverParams {
                aperture_radius: 0.15,
                eta_det: 0.6,
                fov_angle: 1e-3,
                fov_jitter_sigma: 1e-4,
                background_flux: 1e7,
            },
            geometry: LinkGeometry { distance: 500e3, track_jitter_sigma: 3e-6 },
        };
        Self {
            source: SourceParams { wavelength: 1.55e-6, waist: 0.08, mu_t: 0.05, slot: 1e-10 },
            options: ChannelOptions::default(),
            alice: link,
            bob: link,
            quad: QuadConfig::default(),
            mc: McSettings {
                draws: 1_000_000,
                slots: 2_000_000,
                seed: 1,
                adjudication: Adjudication::FirstPrinciples,
                fov_mode: FovMode::PerPhoton,
                eta_a: None,
                eta_b: None,
                attach: false,
            },
        }
    }

    fn link_mut(&mut self, side: &str) -> &mut LinkConfig {
        if side == "alice" {
            &mut self.alice
        } else {
            &mut self.bob
        }
    }

    /// Sets one dotted key. Does not validate cross-field constraints.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<(), ConfigError> {
        let kind = kind_of(key).ok_or_else(|| unknown(key, None))?;
        let (section, leaf) = key.split_once('.').expect("known keys are dotted");
        if section == "both" {
            self.set(&format!("alice.{leaf}"), v)?;
            return self.set(&format!("bob.{leaf}"), v);
        }
        match (section, leaf) {
            ("source", "wavelength_m") => self.source.wavelength = float(key, v)?,
            ("source", "waist_m") => self.source.waist = float(key, v)?,
            ("source", "mu_t") => self.source.mu_t = float(key, v)?,
            ("source", "slot_s") => self.source.slot = float(key, v)?,
            ("source", "beam_width") => {
                self.options.beam_width = match choice(key, v, &["exact", "far_field"])? {
                    "exact" => BeamWidthModel::Exact,
                    _ => BeamWidthModel::FarField,
                }
            }
            ("source", "pointing_exponent") => {
                self.options.pointing_exponent = match choice(key, v, &["published", "gaussian"])? {
                    "published" => PointingExponent::Published,
                    _ => PointingExponent::Gaussian,
                }
            }
            ("alice" | "bob", _) => {
                let x = float(key, v)?;
                let link = self.link_mut(section);
                match leaf {
                    "aperture_radius_m" => link.receiver.aperture_radius = x,
                    "eta_det" => link.receiver.eta_det = x,
                    "theta_fov_rad" => link.receiver.fov_angle = x,
                    "sigma_fov_rad" => link.receiver.fov_jitter_sigma = x,
                    "phi_b_per_s_sr" => link.receiver.background_flux = x,
                    "distance_m" => link.geometry.distance = x,
                    _ => link.geometry.track_jitter_sigma = x,
                }
            }
            ("quad", "nodes") => self.quad.nodes = uint(key, v)? as usize,
            ("quad", "rel_tol") => self.quad.rel_tol = float(key, v)?,
            ("quad", "max_nodes") => self.quad.max_nodes = uint(key, v)? as usize,
            ("mc", "draws") => self.mc.draws = uint(key, v)?,
            ("mc", "slots") => self.mc.slots = uint(key, v)?,
            ("mc", "seed") => self.mc.seed = uint(key, v)?,
            ("mc", "adjudication") => {
                let s = choice(key, v, &["paper_table", "first_principles"])?;
                self.mc.adjudication = s.parse().expect("checked choice");
            }
            ("mc", "fov_mode") => {
                let s = choice(key, v, &["per_photon", "per_slot"])?;
                self.mc.fov_mode = s.parse().expect("checked choice");
            }
            ("mc", "eta_a") => self.mc.eta_a = Some(float(key, v)?),
            ("mc", "eta_b") => self.mc.eta_b = Some(float(key, v)?),
            ("mc", "attach") => match v {
                Value::Boolean(b) => self.mc.attach = *b,
                _ => return Err(ConfigError::Type { key: key.into(), expected: "true or false" }),
            },
            _ => unreachable!("kind_of accepted {key} ({kind:?})"),
        }
        Ok(())
    }

    /// Sets a numeric key; used by sweeps.
    pub fn set_number(&mut self, key: &str, x: f64) -> Result<(), ConfigError> {
        match kind_of(key) {
            Some(Kind::Int) => {
                if x < 0.0 || x.fract() != 0.0 || x > i64::MAX as f64 {
                    return Err(ConfigError::Type { key: key.into(), expected: "a non-negative integer" });
                }
                self.set(key, &Value::Integer(x as i64))
            }
            Some(Kind::Float | Kind::OptionalFloat) => self.set(key, &Value::Float(x)),
            Some(_) => Err(ConfigError::Type { key: key.into(), expected: "a string or boolean, not a number" }),
            None => Err(unknown(key, None)),
        }
    }

    /// Applies a `key=value` override; the value is read as a TOML value,
    /// or as a bare string if it is not one. Call [`validate`](Self::validate)
    /// once all overrides are in.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, raw) = assignment.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: None,
            message: format!("override `{assignment}` is not of the form key=value"),
        })?;
        let (key, raw) = (key.trim(), raw.trim());
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        self.set(key, &value)
    }

    /// Checks every parameter, naming the offending key on failure.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: String, e: ModelError| ConfigError::Invalid { key, reason: e.to_string() };
        self.source.validate().map_err(|e| {
            let key = match &e {
                ModelError::InvalidParameter { name: "wavelength", .. } => "source.wavelength_m",
                ModelError::InvalidParameter { name: "waist", .. } => "source.waist_m",
                ModelError::InvalidParameter { name: "slot", .. } => "source.slot_s",
                _ => "source.mu_t",
            };
            invalid(key.into(), e)
        })?;
        for (side, link) in [("alice", &self.alice), ("bob", &self.bob)] {
            let key_for = |name: &str| {
                let leaf = match name {
                    "aperture_radius" => "aperture_radius_m",
                    "eta_det" => "eta_det",
                    "fov_angle" => "theta_fov_rad",
                    "fov_jitter_sigma" => "sigma_fov_rad",
                    "background_flux" => "phi_b_per_s_sr",
                    "distance" => "distance_m",
                    _ => "sigma_track_rad",
                };
                format!("{side}.{leaf}")
            };
            let check = link.receiver.validate().and(link.geometry.validate());
            if let Err(e @ ModelError::InvalidParameter { name, .. }) = check {
                return Err(invalid(key_for(name), e));
            }
            if let Err(e @ ModelError::InvalidParameter { name, .. }) =
                derive_channel_with(&self.source, &link.receiver, &link.geometry, self.options).map(|_| ())
            {
                return Err(invalid(key_for(name), e));
            }
        }
        if self.quad.nodes < 16 {
            return Err(ConfigError::Invalid { key: "quad.nodes".into(), reason: "must be >= 16".into() });
        }
        if !(self.quad.rel_tol > 0.0 && self.quad.rel_tol.is_finite()) {
            return Err(ConfigError::Invalid { key: "quad.rel_tol".into(), reason: "must be finite and > 0".into() });
        }
        if self.quad.max_nodes < 2 * self.quad.nodes {
            return Err(ConfigError::Invalid { key: "quad.max_nodes".into(), reason: "must be >= 2 * quad.nodes".into() });
        }
        if self.mc.draws < 1000 {
            return Err(ConfigError::Invalid { key: "mc.draws".into(), reason: "must be >= 1000".into() });
        }
        if self.mc.slots == 0 {
            return Err(ConfigError::Invalid { key: "mc.slots".into(), reason: "must be >= 1".into() });
        }
        for (key, eta) in [("mc.eta_a", self.mc.eta_a), ("mc.eta_b", self.mc.eta_b)] {
            if let Some(x) = eta {
                if !(0.0..=1.0).contains(&x) {
                    return Err(ConfigError::Invalid { key: key.into(), reason: "must be in [0, 1]".into() });
                }
            }
        }
        Ok(())
    }

    /// Both derived channels.
    pub fn channels(&self) -> crate::error::Result<(DerivedChannel, DerivedChannel)> {
        let derive = |l: &LinkConfig| derive_channel_with(&self.source, &l.receiver, &l.geometry, self.options);
        Ok((derive(&self.alice)?, derive(&self.bob)?))
    }

    /// Text in the input format; loading it gives back an equal config.
    pub fn to_toml(&self) -> String {
        self.to_string()
    }
}

fn value_text(cfg: &ScenarioConfig, key: &str) -> Option<String> {
    let (section, leaf) = key.split_once('.')?;
    let f = |x: f64| Some(format!("{x:e}"));
    let link = |l: &LinkConfig| match leaf {
        "aperture_radius_m" => f(l.receiver.aperture_radius),
        "eta_det" => f(l.receiver.eta_det),
        "theta_fov_rad" => f(l.receiver.fov_angle),
        "sigma_fov_rad" => f(l.receiver.fov_jitter_sigma),
        "phi_b_per_s_sr" => f(l.receiver.background_flux),
        "distance_m" => f(l.geometry.distance),
        _ => f(l.geometry.track_jitter_sigma),
    };
    let quoted = |s: &str| Some(format!("\"{s}\""));
    match (section, leaf) {
        ("source", "wavelength_m") => f(cfg.source.wavelength),
        ("source", "waist_m") => f(cfg.source.waist),
        ("source", "mu_t") => f(cfg.source.mu_t),
        ("source", "slot_s") => f(cfg.source.slot),
        ("source", "beam_width") => quoted(match cfg.options.beam_width {
            BeamWidthModel::Exact => "exact",
            BeamWidthModel::FarField => "far_field",
        }),
        ("source", "pointing_exponent") => quoted(match cfg.options.pointing_exponent {
            PointingExponent::Published => "published",
            PointingExponent::Gaussian => "gaussian",
        }),
        ("alice", _) => link(&cfg.alice),
        ("bob", _) => link(&cfg.bob),
        ("quad", "nodes") => Some(cfg.quad.nodes.to_string()),
        ("quad", "rel_tol") => f(cfg.quad.rel_tol),
        ("quad", "max_nodes") => Some(cfg.quad.max_nodes.to_string()),
        ("mc", "draws") => Some(cfg.mc.draws.to_string()),
        ("mc", "slots") => Some(cfg.mc.slots.to_string()),
        ("mc", "seed") => Some(cfg.mc.seed.to_string()),
        ("mc", "adjudication") => quoted(cfg.mc.adjudication.as_str()),
        ("mc", "fov_mode") => quoted(cfg.mc.fov_mode.as_str()),
        ("mc", "eta_a") => cfg.mc.eta_a.and_then(f),
        ("mc", "eta_b") => cfg.mc.eta_b.and_then(f),
        ("mc", "attach") => Some(cfg.mc.attach.to_string()),
        _ => None,
    }
}

impl fmt::Display for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for key in known_keys() {
            if let Some(v) = value_text(self, &key) {
                writeln!(f, "{key} = {v}")?;
            }
        }
        Ok(())
    }
}

fn line_of(text: &str, key: &str) -> Option<usize> {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    text.lines().position(|l| {
        let l = l.trim_start();
        let head = l.split('=').next().unwrap_or("").trim();
        head == key || head == leaf
    })
    .map(|i| i + 1)
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

/// Parses configuration text on top of the defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
        line: e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1),
        message: e.message().to_string(),
    })?;
    let mut entries = Vec::new();
    flatten("", &table, &mut entries);
    let mut cfg = ScenarioConfig::paper_defaults();
    for (key, value) in &entries {
        if kind_of(key).is_none() {
            return Err(unknown(key, line_of(text, key)));
        }
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a file, or the built-in defaults when given `paper-defaults`.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    if path.as_os_str() == PAPER_DEFAULTS {
        return Ok(ScenarioConfig::paper_defaults());
    }
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}
