//! System configuration and its flat text file format.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::kv::{self, KvError};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid value for {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("line {line}: cannot parse {key} from {value:?}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error(transparent)]
    Syntax(#[from] KvError),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

impl ConfigError {
    /// Name of the offending field for validation failures.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { field, .. } => Some(field),
            ConfigError::BadValue { key, .. } => Some(key),
            ConfigError::UnknownKey(key) => Some(key),
            _ => None,
        }
    }
}

/// Tunable parameters of one run. Field names in the file format are the
/// ones returned by [`SystemConfig::KEYS`].
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    /// Retrieval count.
    pub k: usize,
    /// Image-similarity threshold of the matching test.
    pub t_m: f64,
    /// Instruction-similarity threshold of the matching test.
    pub t_i: f64,
    /// Minimum number of records that must survive the matching test.
    pub t_k: usize,
    /// Confidence threshold of the cognitive test.
    pub t_conf: f64,
    /// Priority-queue capacity.
    pub n_mp: usize,
    pub sat_archive_cap: usize,
    /// Queries per secondary chunk.
    pub secondary_chunk_size: usize,
    /// Satellite to ground, bits per second.
    pub uplink_rate: f64,
    /// Ground to satellite, bits per second.
    pub downlink_rate: f64,
    /// Seconds between captures.
    pub capture_interval: f64,
    pub rng_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        default_config()
    }
}

pub fn default_config() -> SystemConfig {
    SystemConfig {
        k: 5,
        t_m: 0.8,
        t_i: 0.94,
        t_k: 3,
        t_conf: 0.75,
        n_mp: 8,
        sat_archive_cap: 20,
        secondary_chunk_size: 4,
        uplink_rate: 30e6,
        downlink_rate: 15e6,
        capture_interval: 2.0,
        rng_seed: 7,
    }
}

fn unit_interval(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ConfigError::Invalid {
            field,
            reason: format!("{value} is outside [0, 1]"),
        })
    }
}

fn positive(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::Invalid {
            field,
            reason: format!("{value} must be a positive finite number"),
        })
    }
}

impl SystemConfig {
    pub const KEYS: [&'static str; 12] = [
        "K",
        "T_M",
        "T_I",
        "T_K",
        "T_Conf",
        "N_mp",
        "sat_archive_cap",
        "secondary_chunk_size",
        "uplink_rate",
        "downlink_rate",
        "capture_interval",
        "rng_seed",
    ];

    /// Accepts iff every invariant holds; the error names the first
    /// violated field in declaration order.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k < 1 {
            return Err(ConfigError::Invalid {
                field: "K",
                reason: "K must be at least 1".into(),
            });
        }
        unit_interval("T_M", self.t_m)?;
        unit_interval("T_I", self.t_i)?;
        if self.t_k < 1 || self.t_k > self.k {
            return Err(ConfigError::Invalid {
                field: "T_K",
                reason: format!("T_K = {} must satisfy 1 <= T_K <= K = {}", self.t_k, self.k),
            });
        }
        self.validate_common()
    }

    /// Validation used by experiment runs. It admits the degenerate
    /// settings the ablations need (`T_K = 0`, `T_K > K`, `K = 0`) and
    /// checks everything else exactly as [`SystemConfig::validate`].
    pub fn validate_relaxed(&self) -> Result<(), ConfigError> {
        unit_interval("T_M", self.t_m)?;
        unit_interval("T_I", self.t_i)?;
        self.validate_common()
    }

    fn validate_common(&self) -> Result<(), ConfigError> {
        unit_interval("T_Conf", self.t_conf)?;
        if self.n_mp < 1 {
            return Err(ConfigError::Invalid {
                field: "N_mp",
                reason: "N_mp must be at least 1".into(),
            });
        }
        if self.sat_archive_cap < self.k {
            return Err(ConfigError::Invalid {
                field: "sat_archive_cap",
                reason: format!(
                    "cap {} is smaller than K = {}",
                    self.sat_archive_cap, self.k
                ),
            });
        }
        if self.secondary_chunk_size < 1 {
            return Err(ConfigError::Invalid {
                field: "secondary_chunk_size",
                reason: "chunks must hold at least one query".into(),
            });
        }
        positive("uplink_rate", self.uplink_rate)?;
        positive("downlink_rate", self.downlink_rate)?;
        positive("capture_interval", self.capture_interval)?;
        Ok(())
    }

    /// Parses the flat config format. Keys absent from the document keep
    /// their default values; unknown keys are rejected.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = default_config();
        for entry in kv::parse(text)? {
            cfg.set(&entry.key, &entry.value)
                .map_err(|err| match err {
                    ConfigError::BadValue { key, value, .. } => ConfigError::BadValue {
                        line: entry.line,
                        key,
                        value,
                    },
                    other => other,
                })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|err| ConfigError::Io {
            path: path.display().to_string(),
            reason: err.to_string(),
        })?;
        Self::from_text(&text)
    }

    /// Sets one field by its file-format name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.trim().parse().map_err(|_| ConfigError::BadValue {
                line: 0,
                key: key.to_string(),
                value: value.to_string(),
            })
        }
        match key {
            "K" => self.k = num(key, value)?,
            "T_M" => self.t_m = num(key, value)?,
            "T_I" => self.t_i = num(key, value)?,
            "T_K" => self.t_k = num(key, value)?,
            "T_Conf" => self.t_conf = num(key, value)?,
            "N_mp" => self.n_mp = num(key, value)?,
            "sat_archive_cap" => self.sat_archive_cap = num(key, value)?,
            "secondary_chunk_size" => self.secondary_chunk_size = num(key, value)?,
            "uplink_rate" => self.uplink_rate = num(key, value)?,
            "downlink_rate" => self.downlink_rate = num(key, value)?,
            "capture_interval" => self.capture_interval = num(key, value)?,
            "rng_seed" => self.rng_seed = num(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "K = {}", self.k);
        let _ = writeln!(out, "T_M = {}", self.t_m);
        let _ = writeln!(out, "T_I = {}", self.t_i);
        let _ = writeln!(out, "T_K = {}", self.t_k);
        let _ = writeln!(out, "T_Conf = {}", self.t_conf);
        let _ = writeln!(out, "N_mp = {}", self.n_mp);
        let _ = writeln!(out, "sat_archive_cap = {}", self.sat_archive_cap);
        let _ = writeln!(out, "secondary_chunk_size = {}", self.secondary_chunk_size);
        let _ = writeln!(out, "uplink_rate = {}", self.uplink_rate);
        let _ = writeln!(out, "downlink_rate = {}", self.downlink_rate);
        let _ = writeln!(out, "capture_interval = {}", self.capture_interval);
        let _ = writeln!(out, "rng_seed = {}", self.rng_seed);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_match_published_hyperparameters() {
        let cfg = default_config();
        assert_eq!(cfg.k, 5);
        assert_eq!(cfg.t_m, 0.8);
        assert_eq!(cfg.t_i, 0.94);
        assert_eq!(cfg.t_k, 3);
        assert_eq!(cfg.t_conf, 0.75);
        assert_eq!(cfg.sat_archive_cap, 20);
        assert_eq!(cfg.n_mp, 8);
        assert_eq!(cfg.secondary_chunk_size, 4);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn validation_names_first_bad_field() {
        let cfg = SystemConfig { t_k: 6, ..default_config() };
        assert_eq!(cfg.validate().unwrap_err().field(), Some("T_K"));

        let cfg = SystemConfig { t_conf: 1.5, ..default_config() };
        assert_eq!(cfg.validate().unwrap_err().field(), Some("T_Conf"));

        let cfg = SystemConfig { sat_archive_cap: 2, ..default_config() };
        assert_eq!(cfg.validate().unwrap_err().field(), Some("sat_archive_cap"));

        let cfg = SystemConfig { t_m: -0.1, t_conf: 2.0, ..default_config() };
        assert_eq!(cfg.validate().unwrap_err().field(), Some("T_M"));
    }

    #[test]
    fn relaxed_validation_admits_degenerate_modes() {
        let zero_tk = SystemConfig { t_k: 0, ..default_config() };
        assert!(zero_tk.validate().is_err());
        assert!(zero_tk.validate_relaxed().is_ok());

        let all_ground = SystemConfig { t_k: 6, ..default_config() };
        assert!(all_ground.validate_relaxed().is_ok());

        let bad_conf = SystemConfig { t_conf: 1.5, ..default_config() };
        assert!(bad_conf.validate_relaxed().is_err());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = SystemConfig::from_text("K = 5\nfoo = 1\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("foo".into()));
    }

    #[test]
    fn bad_values_report_line() {
        let err = SystemConfig::from_text("# c\nT_M = high\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { line: 2, .. }));
    }

    proptest! {
        #[test]
        fn text_format_round_trips(
            k in 1usize..50,
            t_m in 0.0f64..=1.0,
            t_i in 0.0f64..=1.0,
            t_conf in 0.0f64..=1.0,
            n_mp in 1usize..64,
            uplink in 1.0f64..1e10,
            interval in 0.001f64..100.0,
            seed in any::<u64>(),
        ) {
            let cfg = SystemConfig {
                k, t_m, t_i, t_k: 1, t_conf, n_mp,
                sat_archive_cap: k + 3,
                secondary_chunk_size: 2,
                uplink_rate: uplink,
                downlink_rate: uplink / 3.0,
                capture_interval: interval,
                rng_seed: seed,
            };
            let parsed = SystemConfig::from_text(&cfg.to_text()).unwrap();
            prop_assert_eq!(parsed, cfg);
        }
    }
}
