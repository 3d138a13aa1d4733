//! Optional TOML defaults. Every key mirrors a command-line flag; flags win.

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub layout: Option<PathBuf>,
    #[serde(default)]
    pub generate: GenerateConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub correct: CorrectConfig,
    #[serde(default)]
    pub dispatch: DispatchConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub roster: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub dpi: Option<f64>,
    pub keys_out: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub rotation: Option<f64>,
    pub scale: Option<f64>,
    pub noise: Option<f64>,
    pub occlusion: Option<f64>,
    pub seed: Option<u64>,
    pub mark_random: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectConfig {
    pub scans: Option<PathBuf>,
    pub keys: Option<PathBuf>,
    pub roster: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub annotate: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispatchConfig {
    pub results: Option<PathBuf>,
    pub policy: Option<String>,
    pub outbox: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub smtp: Option<SmtpSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmtpSection {
    pub host: Option<String>,
    pub port: Option<u16>,
    pub from: Option<String>,
    pub username: Option<String>,
    pub password: Option<String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
