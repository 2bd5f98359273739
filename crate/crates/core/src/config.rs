//! Run configuration: `key = value` files, the seed environment override,
//! and command-line overrides, merged in that order over the defaults.

use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::error::ConfigError;
use crate::geometry::{lattice_side, TypicalityBand};
use crate::protocol::SchemeParams;
use crate::queueing::ChainKind;
use crate::sim::{SlotsRule, TrialParams};

/// Environment variable that overrides the master seed.
pub const SEED_ENV: &str = "RELAYNET_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!("expected csv or json, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub n: usize,
    pub delta: f64,
    pub p_delta: f64,
    pub alpha: f64,
    pub seed: u64,
    pub trials: usize,
    pub slots: Option<u64>,
    pub warmup: Option<u64>,
    pub band_low: f64,
    pub band_high: f64,
    pub out_path: Option<PathBuf>,
    /// Output format; each subcommand has its own default when unset.
    pub format: Option<OutputFormat>,
    pub log_events: bool,
    /// Sizes for `sweep`.
    pub n_list: Vec<usize>,
    /// Torus side for `oracle` and `moments`.
    pub m: usize,
    pub kind: ChainKind,
    /// Monte Carlo sample count for `moments`.
    pub samples: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 64,
            delta: 0.5,
            p_delta: 0.3,
            alpha: 0.5,
            seed: 1,
            trials: 5,
            slots: None,
            warmup: None,
            band_low: 0.5,
            band_high: 2.0,
            out_path: None,
            format: None,
            log_events: false,
            n_list: vec![64, 144, 256],
            m: 8,
            kind: ChainKind::NaturalProduct,
            samples: 100_000,
        }
    }
}

/// Keys accepted in files and as overrides.
pub const KEYS: &[&str] = &[
    "n",
    "delta",
    "p_delta",
    "alpha",
    "seed",
    "trials",
    "slots",
    "warmup",
    "band_low",
    "band_high",
    "out_path",
    "format",
    "log_events",
    "n_list",
    "m",
    "kind",
    "samples",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Malformed {
        key: key.into(),
        value: value.into(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::Malformed {
            key: key.into(),
            value: value.into(),
        }),
    }
}

/// Parses `key = value` lines. Blank lines and text after `#` are ignored.
/// Returns the pairs in file order; keys are checked, values are not.
pub fn parse_config_str(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.into(),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(ConfigError::UnknownKey(k.into()));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Applies one textual override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "n" => self.n = parse(key, value)?,
            "delta" => self.delta = parse(key, value)?,
            "p_delta" => self.p_delta = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "trials" => self.trials = parse(key, value)?,
            "slots" => self.slots = Some(parse(key, value)?),
            "warmup" => self.warmup = Some(parse(key, value)?),
            "band_low" => self.band_low = parse(key, value)?,
            "band_high" => self.band_high = parse(key, value)?,
            "out_path" => self.out_path = Some(PathBuf::from(value)),
            "format" => self.format = Some(parse(key, value)?),
            "log_events" => self.log_events = parse_bool(key, value)?,
            "n_list" => {
                self.n_list = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_, _>>()?
            }
            "m" => self.m = parse(key, value)?,
            "kind" => self.kind = parse(key, value)?,
            "samples" => self.samples = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Defaults, then `file` entries, then `env_seed`, then `flags`; the
    /// result is validated.
    pub fn resolve(
        file: &[(String, String)],
        env_seed: Option<&str>,
        flags: &[(String, String)],
    ) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        for (k, v) in file {
            cfg.set(k, v)?;
        }
        if let Some(s) = env_seed {
            cfg.set("seed", s)?;
        }
        for (k, v) in flags {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for &n in std::iter::once(&self.n).chain(&self.n_list) {
            lattice_side(n)?;
        }
        self.scheme().validate()?;
        self.band().validate()?;
        let invalid = |key: &str, reason: String| {
            Err(ConfigError::Invalid {
                key: key.into(),
                reason,
            })
        };
        if self.trials == 0 {
            return invalid("trials", "must be at least 1".into());
        }
        if self.n_list.is_empty() {
            return invalid("n_list", "must name at least one n".into());
        }
        if self.m < 2 {
            return invalid("m", format!("torus side must be at least 2, got {}", self.m));
        }
        if self.samples == 0 {
            return invalid("samples", "must be at least 1".into());
        }
        match (self.slots, self.warmup) {
            (Some(0), _) => return invalid("slots", "must be positive".into()),
            (Some(s), Some(w)) if w >= s => {
                return invalid("warmup", format!("must be below slots ({s}), got {w}"));
            }
            (None, Some(_)) => return invalid("warmup", "needs slots to be set".into()),
            _ => {}
        }
        Ok(())
    }

    pub fn format_or(&self, default: OutputFormat) -> OutputFormat {
        self.format.unwrap_or(default)
    }

    pub fn scheme(&self) -> SchemeParams {
        SchemeParams {
            p_delta: self.p_delta,
            alpha: self.alpha,
            w: 1.0,
            delta: self.delta,
        }
    }

    pub fn band(&self) -> TypicalityBand {
        TypicalityBand {
            low: self.band_low,
            high: self.band_high,
        }
    }

    pub fn trial_params(&self) -> TrialParams {
        TrialParams {
            scheme: self.scheme(),
            band: self.band(),
        }
    }

    /// Explicit `slots` (and `warmup`, default 20%) or the default rule.
    pub fn slots_rule(&self) -> SlotsRule {
        match self.slots {
            Some(slots) => SlotsRule::Fixed {
                slots,
                warmup: self.warmup.unwrap_or(slots / 5),
            },
            None => SlotsRule::default(),
        }
    }
}
