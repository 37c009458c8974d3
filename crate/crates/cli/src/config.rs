//! Flat `key = value` run configuration.
//!
//! Resolution order, later wins: built-in defaults, the preset's system and
//! detector values, the config file, `--set` pairs, dedicated flags.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use dpsqkd::params::PRESET_NAMES;
use dpsqkd::{ChannelSpec, DetectorParams, EtaComposition, SystemParams};

use crate::error::CliError;

pub const DEFAULT_PRESET: &str = "paper-dcr004";

/// Every accepted key with its default. An empty default means unset.
const KEYS: &[(&str, &str)] = &[
    ("preset", DEFAULT_PRESET),
    ("system.mu", ""),
    ("system.clock_rate_hz", ""),
    ("system.time_window_s", ""),
    ("system.dead_time_s", ""),
    ("system.baseline_error", ""),
    ("system.ec_inefficiency", ""),
    ("system.system_loss_db", ""),
    ("system.eta_composition", ""),
    ("detector1.eta", ""),
    ("detector1.dcr", ""),
    ("detector1.window_factor", ""),
    ("detector2.eta", ""),
    ("detector2.dcr", ""),
    ("detector2.window_factor", ""),
    ("channel.loss_db", "66"),
    ("channel.length_km", ""),
    ("channel.attenuation_db_per_km", ""),
    ("sim.kernel", "event"),
    ("sim.seed", "1"),
    ("sim.seeds", ""),
    ("sim.duration_s", "1000"),
    ("sim.n_slots", ""),
    ("sweep.start_db", "40"),
    ("sweep.stop_db", "80"),
    ("sweep.step_db", "1"),
    ("postprocess.sample_fraction", "1"),
    ("postprocess.hash_seed", "0"),
    ("threshold.qber", "0.041"),
    ("reproduce.target_clicks", "2000"),
    ("reproduce.min_fiber_duration_s", "10000"),
    ("reproduce.model_factor", "2"),
    ("reproduce.sim_sigma", "3"),
    ("output.format", "csv"),
    ("output.key_format", "hex"),
    ("output.key_path", ""),
    ("output.sifted_path", ""),
    ("distill.input", ""),
];

fn is_known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1)))?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// `key=value` from the command line.
pub fn parse_set(arg: &str) -> Result<(String, String), CliError> {
    let (key, value) = arg
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{arg}`")))?;
    Ok((key.trim().to_string(), value.trim().to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
    explicit: BTreeSet<&'static str>,
}

fn preset_values(params: &SystemParams) -> Vec<(&'static str, String)> {
    vec![
        ("system.mu", params.mu.to_string()),
        ("system.clock_rate_hz", params.clock_rate_hz.to_string()),
        ("system.time_window_s", params.time_window_s.to_string()),
        ("system.dead_time_s", params.dead_time_s.to_string()),
        ("system.baseline_error", params.baseline_error.to_string()),
        ("system.ec_inefficiency", params.ec_inefficiency.to_string()),
        ("system.system_loss_db", params.system_loss_db.to_string()),
        ("system.eta_composition", params.eta_composition.name().to_string()),
        ("detector1.eta", params.detector1.eta_fitted.to_string()),
        ("detector1.dcr", params.detector1.dcr.to_string()),
        (
            "detector1.window_factor",
            params.detector1.window_efficiency_factor.to_string(),
        ),
        ("detector2.eta", params.detector2.eta_fitted.to_string()),
        ("detector2.dcr", params.detector2.dcr.to_string()),
        (
            "detector2.window_factor",
            params.detector2.window_efficiency_factor.to_string(),
        ),
    ]
}

impl RunConfig {
    /// Resolves overrides (in precedence order) on top of the preset and
    /// defaults. `default_seeds` fills `sim.seeds` when nothing sets it.
    pub fn resolve(overrides: &[(String, String)], default_seeds: u64) -> Result<Self, CliError> {
        let mut explicit_values: BTreeMap<&'static str, String> = BTreeMap::new();
        for (key, value) in overrides {
            let known = KEYS
                .iter()
                .find(|(k, _)| *k == key.as_str())
                .map(|(k, _)| *k)
                .ok_or_else(|| CliError::Config(format!("unknown configuration key `{key}`")))?;
            explicit_values.insert(known, value.clone());
        }

        let mut values: BTreeMap<&'static str, String> = KEYS.iter().map(|(k, v)| (*k, v.to_string())).collect();
        values.insert("sim.seeds", default_seeds.to_string());
        let preset = explicit_values
            .get("preset")
            .cloned()
            .unwrap_or_else(|| DEFAULT_PRESET.to_string());
        let params = SystemParams::preset(&preset).map_err(|_| {
            CliError::Config(format!(
                "unknown preset `{preset}` (known: {})",
                PRESET_NAMES.join(", ")
            ))
        })?;
        values.extend(preset_values(&params));

        let explicit = explicit_values.keys().copied().collect();
        values.extend(explicit_values);
        Ok(Self { values, explicit })
    }

    pub fn get(&self, key: &str) -> &str {
        debug_assert!(is_known(key), "{key}");
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn is_set(&self, key: &str) -> bool {
        !self.get(key).is_empty()
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.get(key);
        raw.parse::<T>()
            .map_err(|e| CliError::Config(format!("`{key}`: cannot parse `{raw}`: {e}")))
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if self.is_set(key) {
            self.parse(key).map(Some)
        } else {
            Ok(None)
        }
    }

    /// Resolved `(key, value)` pairs in key order, for output headers.
    pub fn entries(&self) -> impl Iterator<Item = (&'static str, &str)> {
        self.values.iter().map(|(k, v)| (*k, v.as_str()))
    }

    pub fn system_params(&self) -> Result<SystemParams, CliError> {
        let detector = |n: u8| -> Result<DetectorParams, CliError> {
            let (eta, dcr, wf) = match n {
                1 => ("detector1.eta", "detector1.dcr", "detector1.window_factor"),
                _ => ("detector2.eta", "detector2.dcr", "detector2.window_factor"),
            };
            Ok(DetectorParams::new(self.parse(eta)?, self.parse(dcr)?, self.parse(wf)?))
        };
        let params = SystemParams {
            mu: self.parse("system.mu")?,
            clock_rate_hz: self.parse("system.clock_rate_hz")?,
            time_window_s: self.parse("system.time_window_s")?,
            dead_time_s: self.parse("system.dead_time_s")?,
            baseline_error: self.parse("system.baseline_error")?,
            ec_inefficiency: self.parse("system.ec_inefficiency")?,
            system_loss_db: self.parse("system.system_loss_db")?,
            detector1: detector(1)?,
            detector2: detector(2)?,
            eta_composition: self.parse::<EtaComposition>("system.eta_composition")?,
        };
        params
            .validate()
            .map_err(|e| CliError::Config(format!("system parameters: {e}")))?;
        Ok(params)
    }

    pub fn channel(&self) -> Result<ChannelSpec, CliError> {
        let length: Option<f64> = self.parse_opt("channel.length_km")?;
        let attenuation: Option<f64> = self.parse_opt("channel.attenuation_db_per_km")?;
        let channel = match (length, attenuation) {
            (Some(km), Some(att)) if self.is_explicit("channel.loss_db") => {
                ChannelSpec::with_provenance(self.parse("channel.loss_db")?, km, att)
            }
            (Some(km), Some(att)) => ChannelSpec::from_fiber(km, att),
            (None, None) => ChannelSpec::from_loss(self.parse("channel.loss_db")?),
            _ => {
                return Err(CliError::Config(
                    "`channel.length_km` and `channel.attenuation_db_per_km` must be given together".into(),
                ))
            }
        };
        channel
            .validate()
            .map_err(|e| CliError::Config(format!("channel: {e}")))?;
        Ok(channel)
    }

    pub fn positive(&self, key: &str) -> Result<f64, CliError> {
        let v: f64 = self.parse(key)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Config(format!("`{key}` must be > 0, got {v}")));
        }
        Ok(v)
    }
}
