//! Daemon configuration file (TOML).
//!
//! Every section and key is optional; missing keys take their defaults.
//! Unknown keys are rejected, and every validation error names the
//! offending key with its section prefix, e.g. `scheduler.pq.queues`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vidbus_bus::{BusConfig, ListenConfig};
use vidbus_core::auth::AuthConfig;
use vidbus_core::scheduler::{SchedError, SchedulerConfig};

pub const DEFAULT_MASTER_KEY_ENV: &str = "VIDBUS_MASTER_KEY";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreConfig {
    pub registry_path: PathBuf,
    pub users_path: PathBuf,
    /// Identifier recorded with every sealed parameter document.
    pub key_id: String,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            registry_path: PathBuf::from("data/registry.jsonl"),
            users_path: PathBuf::from("data/users.jsonl"),
            key_id: "k1".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub master_key_env: String,
    pub listen: ListenConfig,
    pub bus: BusConfig,
    pub scheduler: SchedulerConfig,
    pub auth: AuthConfig,
    pub store: StoreConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            master_key_env: DEFAULT_MASTER_KEY_ENV.into(),
            listen: ListenConfig::default(),
            bus: BusConfig::default(),
            scheduler: SchedulerConfig::default(),
            auth: AuthConfig::default(),
            store: StoreConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// Dotted path of the offending key, when known.
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "config key `{k}`: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn keyed(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError { key: Some(key.into()), message: message.into() }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text).map_err(|e| ConfigError { key: None, message: e.to_string() })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { key: None, message: format!("cannot read {}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.master_key_env.trim().is_empty() {
            return Err(keyed("master_key_env", "must name an environment variable"));
        }
        self.listen.validate().map_err(|(k, m)| keyed(format!("listen.{k}"), m))?;
        self.bus.validate().map_err(|(k, m)| keyed(format!("bus.{k}"), m))?;
        self.scheduler.validate().map_err(|e| match e {
            SchedError::InvalidConfig { key, reason } => keyed(format!("scheduler.{key}"), reason),
            other => keyed("scheduler", other.to_string()),
        })?;
        self.auth.priorities.validate().map_err(|(k, m)| keyed(format!("auth.priorities.{k}"), m))?;
        if self.auth.session_lifetime_secs == 0 {
            return Err(keyed("auth.session_lifetime_secs", "must be positive"));
        }
        if self.auth.kdf_iterations < 1000 {
            return Err(keyed("auth.kdf_iterations", "must be at least 1000"));
        }
        if self.store.key_id.trim().is_empty() {
            return Err(keyed("store.key_id", "must not be empty"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
    }

    #[test]
    fn full_example_parses() {
        let text = r#"
master_key_env = "MY_KEY"
[listen]
http_addr = "0.0.0.0:9000"
tcp_addr = "0.0.0.0:9001"
poll_interval_ms = 500
[bus]
workers = 2
[scheduler]
priority_threshold = 2
wrr_weights = [3, 1]
[scheduler.wrr]
queues = 2
capacity_bytes = 4096
[auth]
kdf_iterations = 2000
[auth.priorities]
admin = 0
commander = 2
operator = 3
viewer = 9
[store]
registry_path = "/tmp/r.jsonl"
"#;
        let c = Config::parse(text).unwrap();
        assert_eq!(c.master_key_env, "MY_KEY");
        assert_eq!(c.listen.http_addr.port(), 9000);
        assert_eq!(c.scheduler.wrr.queues, 2);
        assert_eq!(c.scheduler.pq, SchedulerConfig::default().pq);
        assert_eq!(c.store.users_path, StoreConfig::default().users_path);
    }

    #[test]
    fn errors_name_the_key() {
        let cases = [
            ("[scheduler.pq]\nqueues = 0", "scheduler.pq.queues"),
            ("[scheduler]\nweight_load = 0.7", "scheduler."),
            ("[scheduler]\npriority_threshold = 12", "scheduler.priority_threshold"),
            ("[bus]\nworkers = 0", "bus.workers"),
            ("[bus]\ndefault_priority = 10", "bus.default_priority"),
            ("[listen]\npoll_interval_ms = 0", "listen.poll_interval_ms"),
            ("[auth.priorities]\nviewer = 11\nadmin = 0\ncommander = 1\noperator = 2", "auth.priorities.viewer"),
            ("[auth]\nkdf_iterations = 5", "auth.kdf_iterations"),
            ("master_key_env = \"\"", "master_key_env"),
        ];
        for (text, key) in cases {
            let e = Config::parse(text).unwrap_err();
            assert!(e.key.as_deref().is_some_and(|k| k.starts_with(key)), "{text:?} gave {e}");
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let e = Config::parse("[bus]\nworkerz = 3").unwrap_err();
        assert!(e.message.contains("workerz"), "{e}");
        let e = Config::parse("[listen]\nhttp_addr = \"not an address\"").unwrap_err();
        assert!(e.message.contains("http_addr"), "{e}");
    }
}
