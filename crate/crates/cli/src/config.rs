use std::path::Path;

use serde::{Deserialize, Serialize};
use tweettopic::{Error, ExtractorConfig, Result, TrainConfig};

/// Settings shared by `train`, `evaluate` and `ablate`.
///
/// ```toml
/// [extractor]
/// ngram_min = 1
/// ngram_max = 3
/// dim = 4096
///
/// [train]
/// peak_lr = 0.05
/// epochs = 20
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub extractor: ExtractorConfig,
    pub train: TrainConfig,
}

impl PipelineConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(s).map_err(|e| Error::Config(format!("pipeline config: {e}")))?;
        cfg.extractor.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&s)
    }
}
