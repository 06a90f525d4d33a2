//! Service configuration: TOML file plus environment overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use adaptest_core::selector::SelectionPolicy;
use adaptest_core::session::StoppingRule;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CONTENT_PLACEHOLDER: &str = "{content}";
pub const DEFAULT_PROMPT: &str = "You are an examinee and please answer the following question: {content}";
pub const DEFAULT_PORT: u16 = 8080;

/// Overrides the listening port.
pub const ENV_PORT: &str = "ADAPTEST_PORT";
/// Adds a pool file, registered under its file stem.
pub const ENV_POOL: &str = "ADAPTEST_POOL";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("prompt_template must contain the {CONTENT_PLACEHOLDER} placeholder")]
    MissingPlaceholder,
    #[error("invalid {var}: {value:?}")]
    Env { var: &'static str, value: String },
    #[error("invalid session defaults: {0}")]
    Session(#[from] adaptest_core::SessionError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionDefaults {
    pub rule: StoppingRule,
    pub policy: SelectionPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub port: u16,
    /// Pool name → pool file.
    pub pools: BTreeMap<String, PathBuf>,
    pub prompt_template: String,
    pub examinee_endpoint: Option<String>,
    /// Directory for per-session event logs; sessions found there are
    /// restored at startup.
    pub event_log_dir: Option<PathBuf>,
    pub session_defaults: SessionDefaults,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: DEFAULT_PORT,
            pools: BTreeMap::new(),
            prompt_template: DEFAULT_PROMPT.to_owned(),
            examinee_endpoint: None,
            event_log_dir: None,
            session_defaults: SessionDefaults::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.prompt_template.contains(CONTENT_PLACEHOLDER) {
            return Err(ConfigError::MissingPlaceholder);
        }
        self.session_defaults.rule.validate()?;
        Ok(())
    }

    /// Applies `ADAPTEST_PORT` and `ADAPTEST_POOL` from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = lookup(ENV_PORT) {
            self.port = v.trim().parse().map_err(|_| ConfigError::Env { var: ENV_PORT, value: v })?;
        }
        if let Some(v) = lookup(ENV_POOL) {
            let path = PathBuf::from(&v);
            let name = pool_name(&path).ok_or(ConfigError::Env { var: ENV_POOL, value: v })?;
            self.pools.insert(name, path);
        }
        Ok(())
    }

    pub fn render_prompt(&self, content: &str) -> String {
        self.prompt_template.replace(CONTENT_PLACEHOLDER, content)
    }
}

/// Registry name for a pool file: its stem.
pub fn pool_name(path: &Path) -> Option<String> {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_prompt_substitution() {
        let c = ServiceConfig::default();
        assert_eq!(
            c.render_prompt("2+2=?"),
            "You are an examinee and please answer the following question: 2+2=?"
        );
    }

    #[test]
    fn template_without_placeholder_is_rejected() {
        let err = ServiceConfig::from_toml(r#"prompt_template = "Answer this:""#).unwrap_err();
        assert!(matches!(err, ConfigError::MissingPlaceholder));
    }

    #[test]
    fn toml_fields() {
        let c = ServiceConfig::from_toml(
            r#"
            port = 9000
            examinee_endpoint = "http://127.0.0.1:1/answer"
            [pools]
            math = "pools/math.json"
            [session_defaults.rule]
            max_length = 30
            [session_defaults.policy]
            kind = "random"
            seed = 4
            "#,
        )
        .unwrap();
        assert_eq!(c.port, 9000);
        assert_eq!(c.pools["math"], PathBuf::from("pools/math.json"));
        assert_eq!(c.session_defaults.rule.max_length, 30);
        assert_eq!(c.session_defaults.rule.min_length, 5);
        assert_eq!(c.session_defaults.policy, SelectionPolicy::Random { seed: 4 });
        assert!(ServiceConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn env_overrides() {
        let mut c = ServiceConfig::default();
        c.apply_env(|k| match k {
            ENV_PORT => Some("7001".into()),
            ENV_POOL => Some("/data/mooc.json".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.port, 7001);
        assert_eq!(c.pools["mooc"], PathBuf::from("/data/mooc.json"));
        let mut bad = ServiceConfig::default();
        assert!(bad.apply_env(|k| (k == ENV_PORT).then(|| "eighty".into())).is_err());
    }
}
