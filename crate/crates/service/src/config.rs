use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tweettopic::ingest::DEFAULT_LANG;
use tweettopic::{Error, ExtractorConfig, ExtractorKind, Result, TrainConfig};

/// Service configuration, read from a TOML file.
///
/// ```toml
/// bind = "127.0.0.1:8080"
/// store_path = "data/store.jsonl"
/// admin_token = "change-me"
/// model_path = "data/model.bin"
/// keyword_file = "keywords.txt"
/// source_path = "incoming.jsonl"
///
/// [extractor]
/// dim = 65536
///
/// [train]
/// epochs = 10
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub bind: String,
    pub store_path: PathBuf,
    pub admin_token: String,
    /// Where the serving snapshot is loaded from at startup and written to
    /// after every successful retrain.
    pub model_path: Option<PathBuf>,
    pub keyword_file: Option<PathBuf>,
    /// JSONL file polled by `POST /ingest`.
    pub source_path: Option<PathBuf>,
    pub lang: String,
    /// Feature extractor used when retraining.
    pub extractor: ExtractorConfig,
    pub train: TrainConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            bind: "127.0.0.1:8080".into(),
            store_path: PathBuf::from("store.jsonl"),
            admin_token: String::new(),
            model_path: None,
            keyword_file: None,
            source_path: None,
            lang: DEFAULT_LANG.into(),
            extractor: ExtractorConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl AppConfig {
    /// Relative paths are resolved against `base` (the config file's directory).
    pub fn from_toml(s: &str, base: &Path) -> Result<Self> {
        let mut cfg: AppConfig =
            toml::from_str(s).map_err(|e| Error::Config(format!("service config: {e}")))?;
        for p in [
            Some(&mut cfg.store_path),
            cfg.model_path.as_mut(),
            cfg.keyword_file.as_mut(),
            cfg.source_path.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&s, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.admin_token.trim().is_empty() {
            return Err(Error::Config("admin_token must be set".into()));
        }
        if self.extractor.kind != ExtractorKind::HashedNgrams {
            return Err(Error::Config(
                "the service extracts features from text; extractor.kind must be hashed_ngrams".into(),
            ));
        }
        self.extractor.validate()?;
        self.train.validate()
    }
}
