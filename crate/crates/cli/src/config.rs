//! Run configuration: TOML text, validated before any computation.

use std::path::PathBuf;

use semicov_core::annulus::AnnulusSpec;
use semicov_core::circle::CircleFamily;
use semicov_core::obstruction::LoopSpec;
use semicov_core::semiconj1d::Orientation;
use semicov_core::stability::EpsilonSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_CELLS: usize = 4096;
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Semiconj1d,
    Rotation,
    Classify,
    Compare,
    Semiconj2d,
    Repellers,
    StarScan,
    CounterexampleTable,
    Perturb,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Semiconj1d => "semiconj1d",
            Command::Rotation => "rotation",
            Command::Classify => "classify",
            Command::Compare => "compare",
            Command::Semiconj2d => "semiconj2d",
            Command::Repellers => "repellers",
            Command::StarScan => "star-scan",
            Command::CounterexampleTable => "counterexample-table",
            Command::Perturb => "perturb",
        }
    }
}

/// Where the connector for `repellers` comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConnectorConfig {
    /// Horizontal line at this lifted height.
    Level { height: f64 },
    /// Invariant connector grown from the arc joining `start` to its image.
    Arc {
        start: [f64; 2],
        #[serde(default = "default_back")]
        n_back: usize,
        #[serde(default = "default_fwd")]
        n_fwd: usize,
    },
}

fn default_back() -> usize {
    4
}

fn default_fwd() -> usize {
    40
}

fn default_cells() -> usize {
    DEFAULT_CELLS
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Grid cells for circle maps.
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default)]
    pub orientation: Option<Orientation>,
    #[serde(default)]
    pub circle: Option<CircleFamily>,
    /// Second circle map for `compare`.
    #[serde(default)]
    pub other: Option<CircleFamily>,
    #[serde(default)]
    pub annulus: Option<AnnulusSpec>,
    #[serde(default)]
    pub connector: Option<ConnectorConfig>,
    #[serde(default, rename = "loop")]
    pub loop_spec: Option<LoopSpec>,
    #[serde(default)]
    pub epsilon: Option<EpsilonSpec>,
    #[serde(default)]
    pub band: Option<[f64; 2]>,
    /// `[nx, ny]` for annulus fields.
    #[serde(default)]
    pub grid: Option<[usize; 2]>,
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default)]
    pub nmax: Option<u32>,
    /// Points for `rotation`.
    #[serde(default)]
    pub points: Option<Vec<f64>>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub width: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    /// Not part of the hash: the same run written elsewhere is the same run.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            tol: DEFAULT_TOL,
            cells: DEFAULT_CELLS,
            orientation: None,
            circle: None,
            other: None,
            annulus: None,
            connector: None,
            loop_spec: None,
            epsilon: None,
            band: None,
            grid: None,
            depth: None,
            nmax: None,
            points: None,
            samples: None,
            width: None,
            max_iter: None,
            out: None,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Validation(m));
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.cells == 0 {
            return bad("cells must be positive".into());
        }
        for (name, v) in [("depth", self.depth), ("samples", self.samples), ("max_iter", self.max_iter)] {
            if v == Some(0) {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.nmax == Some(0) {
            return bad("nmax must be positive".into());
        }
        if let Some(w) = self.width {
            if !(w > 0.0) {
                return bad(format!("width must be positive, got {w}"));
            }
        }
        if let Some([nx, ny]) = self.grid {
            if nx == 0 || ny == 0 {
                return bad("grid sizes must be positive".into());
            }
        }
        if let Some([a, b]) = self.band {
            if !(0.0 < a && a < b && b < 1.0) {
                return bad(format!("band [{a}, {b}] is not inside (0, 1)"));
            }
        }
        let needs = |what: &str, present: bool| {
            if present {
                Ok(())
            } else {
                bad(format!("command {} needs `{what}`", self.command.name()))
            }
        };
        match self.command {
            Command::Semiconj1d | Command::Rotation | Command::Classify => needs("circle", self.circle.is_some()),
            Command::Compare => {
                needs("circle", self.circle.is_some())?;
                needs("other", self.other.is_some())
            }
            Command::Semiconj2d | Command::StarScan => needs("annulus", self.annulus.is_some()),
            Command::Repellers => {
                needs("annulus", self.annulus.is_some())?;
                needs("connector", self.connector.is_some())
            }
            Command::CounterexampleTable => match self.nmax {
                Some(n) if n >= 2 => Ok(()),
                Some(n) => bad(format!("nmax must be at least 2, got {n}")),
                None => Ok(()),
            },
            Command::Perturb => Ok(()),
        }
    }
}

fn check_families(value: &toml::Value) -> Result<(), ConfigError> {
    for key in ["circle", "other"] {
        let Some(family) = value.get(key).and_then(|t| t.get("family")) else {
            continue;
        };
        let name = family.as_str().unwrap_or("");
        if !CircleFamily::NAMES.contains(&name) {
            return Err(ConfigError::Validation(format!(
                "unknown family `{name}` in [{key}]; known families: {}",
                CircleFamily::NAMES.join(", ")
            )));
        }
    }
    Ok(())
}

/// Parses and validates a full run config.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let value: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    check_families(&value)?;
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a standalone circle-map table, as passed with `--map`.
pub fn parse_circle(text: &str) -> Result<CircleFamily, ConfigError> {
    let value: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut wrapper = toml::Table::new();
    wrapper.insert("circle".into(), value);
    check_families(&toml::Value::Table(wrapper))?;
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}

pub fn parse_annulus(text: &str) -> Result<AnnulusSpec, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}

pub fn parse_connector(text: &str) -> Result<ConnectorConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}
