//! Service configuration: a TOML file plus `DROPBALL_*` environment overrides.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! store_root = "data"
//! skew_cap_s = 2.0
//! clock = "wall"            # or "client"
//! layout_seed_base = 0
//! default_plan = "plans/default.json"   # optional
//!
//! [tokens]
//! "secret-token" = "dr-ada"
//! ```
//!
//! Environment overrides: `DROPBALL_LISTEN`, `DROPBALL_STORE_ROOT`,
//! `DROPBALL_SKEW_CAP_S`, `DROPBALL_CLOCK`, `DROPBALL_LAYOUT_SEED_BASE`,
//! `DROPBALL_DEFAULT_PLAN` and `DROPBALL_TOKENS` (`token=doctor,token=doctor`,
//! replacing the file's table).

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{key}: {message}")]
    Invalid { key: &'static str, message: String },
}

/// Whose clock event times are checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Event times must stay within the skew cap of the server's elapsed time,
    /// and the server closes overdue trial windows itself.
    #[default]
    Wall,
    /// Event times are taken as given; only ordering is enforced. For replay
    /// and scripted clients.
    Client,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub store_root: PathBuf,
    pub skew_cap_s: f64,
    pub clock: ClockMode,
    pub layout_seed_base: u64,
    pub default_plan: Option<PathBuf>,
    /// Bearer token to doctor id.
    pub tokens: BTreeMap<String, String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            store_root: PathBuf::from("data"),
            skew_cap_s: 2.0,
            clock: ClockMode::Wall,
            layout_seed_base: 0,
            default_plan: None,
            tokens: BTreeMap::new(),
        }
    }
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, message: message.into() }
}

impl ServiceConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse { path: path.to_owned(), source })
    }

    /// Reads `path`, applies environment overrides and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        let mut config = Self::from_toml(&text, path)?;
        if let Some(dir) = path.parent() {
            config.resolve_relative(dir);
        }
        config.apply_env(|k| std::env::var(k).ok())?;
        config.validate()?;
        Ok(config)
    }

    /// Makes file paths relative to the config file's directory.
    fn resolve_relative(&mut self, dir: &Path) {
        if self.store_root.is_relative() {
            self.store_root = dir.join(&self.store_root);
        }
        if let Some(p) = &self.default_plan {
            if p.is_relative() {
                self.default_plan = Some(dir.join(p));
            }
        }
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = var("DROPBALL_LISTEN") {
            self.listen = v.parse().map_err(|_| invalid("DROPBALL_LISTEN", format!("bad address {v:?}")))?;
        }
        if let Some(v) = var("DROPBALL_STORE_ROOT") {
            self.store_root = PathBuf::from(v);
        }
        if let Some(v) = var("DROPBALL_SKEW_CAP_S") {
            self.skew_cap_s = v.parse().map_err(|_| invalid("DROPBALL_SKEW_CAP_S", format!("bad number {v:?}")))?;
        }
        if let Some(v) = var("DROPBALL_CLOCK") {
            self.clock = match v.as_str() {
                "wall" => ClockMode::Wall,
                "client" => ClockMode::Client,
                _ => return Err(invalid("DROPBALL_CLOCK", format!("expected wall or client, got {v:?}"))),
            };
        }
        if let Some(v) = var("DROPBALL_LAYOUT_SEED_BASE") {
            self.layout_seed_base =
                v.parse().map_err(|_| invalid("DROPBALL_LAYOUT_SEED_BASE", format!("bad seed {v:?}")))?;
        }
        if let Some(v) = var("DROPBALL_DEFAULT_PLAN") {
            self.default_plan = Some(PathBuf::from(v));
        }
        if let Some(v) = var("DROPBALL_TOKENS") {
            self.tokens = v
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|pair| {
                    pair.split_once('=')
                        .map(|(t, d)| (t.trim().to_string(), d.trim().to_string()))
                        .ok_or_else(|| invalid("DROPBALL_TOKENS", format!("expected token=doctor, got {pair:?}")))
                })
                .collect::<Result<_, _>>()?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.skew_cap_s.is_finite() || self.skew_cap_s < 0.0 {
            return Err(invalid("skew_cap_s", "must be a non-negative number of seconds"));
        }
        if let Some((token, _)) = self.tokens.iter().find(|(t, d)| t.is_empty() || d.is_empty()) {
            return Err(invalid("tokens", format!("empty token or doctor id in entry {token:?}")));
        }
        Ok(())
    }
}
