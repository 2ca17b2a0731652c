use std::path::{Path, PathBuf};

use packorder_core::{PlannerLimits, ProviderConfig, ValidationPolicy};
use serde::Deserialize;

use crate::error::CliError;

/// Defaults read from `--config`; command-line flags win over these.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub alpha: Option<f64>,
    pub templates: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub aliases: Option<PathBuf>,
    pub provider: ProviderConfig,
    pub policy: ValidationPolicy,
    pub planner: PlannerLimits,
}

fn rebase(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path.as_mut() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        rebase(base, &mut config.templates);
        rebase(base, &mut config.lexicon);
        rebase(base, &mut config.aliases);
        rebase(base, &mut config.provider.fixtures);
        Ok(config)
    }
}
