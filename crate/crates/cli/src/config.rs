//! `key = value` settings files. Precedence: flags, then file, then defaults.

use std::path::Path;

use ccs_ica::{IcaConfig, ObjectiveKind};

use crate::error::CliError;
use crate::manifest::RunManifest;

/// Default cap on the number of samples `separate` accepts.
pub const DEFAULT_MAX_SAMPLES: usize = 4000;
/// Above this many samples `separate` warns about the quadratic cost.
pub const WARN_SAMPLES: usize = 2000;

/// Settings that can come from flags or a file. `None` means "not given".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub max_iter: Option<usize>,
    pub epsilon: Option<f64>,
    pub bandwidth: Option<f64>,
    pub objective: Option<ObjectiveKind>,
    pub backtrack: Option<bool>,
    pub truncate_kernel: Option<bool>,
    pub seed: Option<u64>,
    pub max_samples: Option<usize>,
    pub threads: Option<usize>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("config line {line}: bad value '{value}' for {key}")))
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CliError::Usage(format!(
            "config line {line}: bad value '{value}' for {key}"
        ))),
    }
}

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut s = Settings::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {line}: expected key = value")))?;
            let (key, value) = (key.trim().replace('-', "_"), value.trim());
            match key.as_str() {
                "alpha" => s.alpha = Some(parse_value(&key, value, line)?),
                "gamma" => s.gamma = Some(parse_value(&key, value, line)?),
                "max_iter" => s.max_iter = Some(parse_value(&key, value, line)?),
                "epsilon" => s.epsilon = Some(parse_value(&key, value, line)?),
                "bandwidth" => s.bandwidth = Some(parse_value(&key, value, line)?),
                "objective" => {
                    s.objective = Some(
                        value
                            .parse()
                            .map_err(|e: ccs_ica::Error| CliError::Usage(e.to_string()))?,
                    )
                }
                "backtrack" => s.backtrack = Some(parse_bool(&key, value, line)?),
                "truncate_kernel" => s.truncate_kernel = Some(parse_bool(&key, value, line)?),
                "seed" => s.seed = Some(parse_value(&key, value, line)?),
                "max_samples" => s.max_samples = Some(parse_value(&key, value, line)?),
                "threads" => s.threads = Some(parse_value(&key, value, line)?),
                other => return Err(CliError::Usage(format!("config line {line}: unknown key '{other}'"))),
            }
        }
        Ok(s)
    }

    /// Every ICA field set, taken from a previous run's manifest.
    pub fn from_config(cfg: &IcaConfig) -> Self {
        Settings {
            alpha: Some(cfg.alpha),
            gamma: Some(cfg.gamma),
            max_iter: Some(cfg.max_iter),
            epsilon: Some(cfg.epsilon),
            bandwidth: cfg.bandwidth,
            objective: Some(cfg.objective),
            backtrack: Some(cfg.backtrack),
            truncate_kernel: Some(cfg.truncate_kernel),
            seed: Some(cfg.seed),
            max_samples: None,
            threads: None,
        }
    }

    /// Reads a settings file, or the config echoed in a JSON run manifest.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if text.trim_start().starts_with('{') {
            let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| CliError::Format {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            return Ok(Self::from_config(&manifest.config));
        }
        Self::parse(&text)
    }

    /// `self` wins wherever it has a value.
    pub fn or(self, fallback: Settings) -> Settings {
        Settings {
            alpha: self.alpha.or(fallback.alpha),
            gamma: self.gamma.or(fallback.gamma),
            max_iter: self.max_iter.or(fallback.max_iter),
            epsilon: self.epsilon.or(fallback.epsilon),
            bandwidth: self.bandwidth.or(fallback.bandwidth),
            objective: self.objective.or(fallback.objective),
            backtrack: self.backtrack.or(fallback.backtrack),
            truncate_kernel: self.truncate_kernel.or(fallback.truncate_kernel),
            seed: self.seed.or(fallback.seed),
            max_samples: self.max_samples.or(fallback.max_samples),
            threads: self.threads.or(fallback.threads),
        }
    }

    pub fn ica_config(&self) -> IcaConfig {
        let d = IcaConfig::default();
        IcaConfig {
            alpha: self.alpha.unwrap_or(d.alpha),
            objective: self.objective.unwrap_or(d.objective),
            gamma: self.gamma.unwrap_or(d.gamma),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            bandwidth: self.bandwidth.or(d.bandwidth),
            seed: self.seed.unwrap_or(d.seed),
            backtrack: self.backtrack.unwrap_or(d.backtrack),
            truncate_kernel: self.truncate_kernel.unwrap_or(d.truncate_kernel),
        }
    }

    pub fn max_samples(&self) -> usize {
        self.max_samples.unwrap_or(DEFAULT_MAX_SAMPLES)
    }

    pub fn threads(&self) -> usize {
        self.threads.unwrap_or(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_precedence() {
        let file =
            Settings::parse("# run settings\nalpha = 0.5\ngamma=0.1 # smaller\nobjective = cs\nbacktrack = no\n")
                .unwrap();
        assert_eq!(file.alpha, Some(0.5));
        assert_eq!(file.objective, Some(ObjectiveKind::Cs));
        assert_eq!(file.backtrack, Some(false));
        let flags = Settings {
            alpha: Some(-1.0),
            ..Settings::default()
        };
        let cfg = flags.or(file).ica_config();
        assert_eq!(cfg.alpha, -1.0);
        assert_eq!(cfg.gamma, 0.1);
        assert_eq!(cfg.max_iter, IcaConfig::default().max_iter);
        assert!(!cfg.backtrack);
    }

    #[test]
    fn bad_lines() {
        assert!(Settings::parse("alpha 0.5").is_err());
        assert!(Settings::parse("alpha = x").is_err());
        assert!(Settings::parse("colour = red").is_err());
        assert!(Settings::parse("max-iter = 10").unwrap().max_iter == Some(10));
    }

    #[test]
    fn manifest_config_round_trip() {
        let cfg = IcaConfig {
            alpha: 0.3,
            bandwidth: Some(0.25),
            ..IcaConfig::default()
        };
        assert_eq!(Settings::from_config(&cfg).ica_config(), cfg);
    }
}
