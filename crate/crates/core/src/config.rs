//! Pipeline configuration, loadable from a flat TOML key/value file.
//!
//! ```toml
//! color_spaces = ["intensity", "lab"]
//! k_values = [250, 400]
//! sigma_fh = 0.8        # or "best"
//! sigma_c = "best"      # or a number
//! sigma_t = 0.2
//! workers = 4
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::SolverConfig;
use crate::features::{ColorSpace, SigmaGrid};
use crate::superpixels::FhParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// A scalar parameter that is either fixed or searched per image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Param {
    Fixed(f64),
    Best,
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Fixed(v) => write!(f, "{v}"),
            Param::Best => f.write_str("best"),
        }
    }
}

impl std::str::FromStr for Param {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("best") {
            Ok(Param::Best)
        } else {
            s.parse::<f64>()
                .map(Param::Fixed)
                .map_err(|_| format!("expected a number or `best`, got `{s}`"))
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawParam {
    Number(f64),
    Word(String),
}

impl Serialize for Param {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            Param::Fixed(v) => RawParam::Number(v),
            Param::Best => RawParam::Word("best".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Param {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match RawParam::deserialize(d)? {
            RawParam::Number(v) => Ok(Param::Fixed(v)),
            RawParam::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoteMode {
    /// One vote over every (colour space, k) map.
    Flat,
    /// Vote over k within each colour space, then across colour spaces.
    TwoStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub color_spaces: Vec<ColorSpace>,
    pub k_values: Vec<f64>,
    pub sigma_fh: Param,
    /// Candidates tried when `sigma_fh = "best"`, in tie-break order.
    pub sigma_fh_candidates: Vec<f64>,
    pub sigma_c: Param,
    pub sigma_t: Param,
    /// Candidate widths for any kernel width set to `"best"`.
    pub sigma_grid: Vec<f64>,
    pub min_size: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub alpha_margin: f64,
    pub n_cl: usize,
    pub ignore_label: u8,
    /// Worker threads for the (space, k) jobs; 0 uses every core.
    pub workers: usize,
    pub vote: VoteMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            color_spaces: ColorSpace::ALL.to_vec(),
            k_values: vec![225.0, 250.0, 300.0, 400.0],
            sigma_fh: Param::Fixed(0.8),
            sigma_fh_candidates: vec![0.8, 0.7],
            sigma_c: Param::Best,
            sigma_t: Param::Best,
            sigma_grid: vec![0.1, 0.2, 0.4, 0.8],
            min_size: 20,
            tolerance: 1e-7,
            max_iterations: 10_000,
            alpha_margin: 1.01,
            n_cl: 21,
            ignore_label: 255,
            workers: 0,
            vote: VoteMode::Flat,
        }
    }
}

impl PipelineConfig {
    /// Reduced grid for low-latency interactive use.
    pub fn interactive() -> Self {
        Self {
            color_spaces: vec![ColorSpace::Intensity, ColorSpace::Lab],
            k_values: vec![250.0, 400.0],
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.color_spaces.is_empty() {
            return bad("color_spaces must not be empty");
        }
        if self.k_values.is_empty() || self.k_values.iter().any(|k| !(*k > 0.0)) {
            return bad("k_values must be a non-empty list of positive numbers");
        }
        match self.sigma_fh {
            Param::Fixed(s) if !(s >= 0.0) => return bad("sigma_fh must be non-negative"),
            Param::Best
                if self.sigma_fh_candidates.is_empty()
                    || self.sigma_fh_candidates.iter().any(|s| !(*s >= 0.0)) =>
            {
                return bad("sigma_fh_candidates must be non-negative and non-empty")
            }
            _ => {}
        }
        for p in [self.sigma_c, self.sigma_t] {
            match p {
                Param::Fixed(s) if !(s > 0.0) => return bad("kernel widths must be positive"),
                Param::Best
                    if self.sigma_grid.is_empty() || self.sigma_grid.iter().any(|s| !(*s > 0.0)) =>
                {
                    return bad("sigma_grid must be a non-empty list of positive numbers")
                }
                _ => {}
            }
        }
        if self.min_size == 0 {
            return bad("min_size must be at least 1");
        }
        if self.n_cl == 0 || self.n_cl > 255 {
            return bad("n_cl must be in 1..=255");
        }
        self.solver()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            alpha_margin: self.alpha_margin,
            ..SolverConfig::default()
        }
    }

    /// The sigma_fh values prepared for every image.
    pub fn sigma_fh_values(&self) -> Vec<f64> {
        match self.sigma_fh {
            Param::Fixed(s) => vec![s],
            Param::Best => self.sigma_fh_candidates.clone(),
        }
    }

    pub fn fh_params(&self, k: f64, sigma_fh: f64) -> FhParams {
        FhParams {
            k,
            sigma_fh,
            min_size: self.min_size,
        }
    }

    /// Candidate kernel widths: a single value for fixed axes.
    pub fn sigma_candidates(&self) -> SigmaGrid {
        let axis = |p: Param| match p {
            Param::Fixed(v) => vec![v],
            Param::Best => self.sigma_grid.clone(),
        };
        SigmaGrid {
            sigma_c: axis(self.sigma_c),
            sigma_t: axis(self.sigma_t),
        }
    }

    /// Both kernel widths, when neither is searched.
    pub fn fixed_sigmas(&self) -> Option<(f64, f64)> {
        match (self.sigma_c, self.sigma_t) {
            (Param::Fixed(c), Param::Fixed(t)) => Some((c, t)),
            _ => None,
        }
    }
}
