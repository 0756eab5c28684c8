use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Service settings, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// A dataset `.jsonl` file or a split directory with `manifest.json`.
    pub dataset: PathBuf,
    /// Directory of per-task event logs.
    pub store: PathBuf,
    #[serde(default = "default_host")]
    pub host: String,
    #[serde(default = "default_port")]
    pub port: u16,
    /// Origins allowed by CORS, e.g. the workbench dev server.
    #[serde(default)]
    pub cors_origins: Vec<String>,
    #[serde(default = "default_lease")]
    pub lease_minutes: i64,
    /// Template registry JSON; the built-in registry when absent.
    #[serde(default)]
    pub templates: Option<PathBuf>,
}

fn default_host() -> String {
    "127.0.0.1".into()
}

fn default_port() -> u16 {
    8080
}

fn default_lease() -> i64 {
    30
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut c = Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        c.dataset = base.join(&c.dataset);
        c.store = base.join(&c.store);
        c.templates = c.templates.map(|t| base.join(t));
        Ok(c)
    }
}
