use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use moodshift::classifier::{ClassifierError, ClassifierModel, LOW_CONFIDENCE};
use moodshift::face::{CascadeModel, FaceError};
use moodshift::gan::{GanCheckpoint, GanError};
use moodshift::mapping::{MappingError, MappingTable};
use moodshift::pipeline::Models;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Prefix of every environment override, e.g. `MOODSHIFT_PORT`.
pub const ENV_PREFIX: &str = "MOODSHIFT_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("IoError: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("InvalidConfig: {0}")]
    Syntax(String),
    #[error("InvalidConfig: {key}={value:?}: {reason}")]
    Env { key: String, value: String, reason: String },
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Face(#[from] FaceError),
}

impl ConfigError {
    pub fn kind(&self) -> &'static str {
        match self {
            ConfigError::Io { .. } => "IoError",
            ConfigError::Syntax(_) | ConfigError::Env { .. } => "InvalidConfig",
            ConfigError::Mapping(e) => e.kind(),
            ConfigError::Classifier(e) => e.kind(),
            ConfigError::Gan(e) => e.kind(),
            ConfigError::Face(e) => e.kind(),
        }
    }
}

/// Settings shared by `serve` and the command line tools.
///
/// Relative paths are resolved against the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: IpAddr,
    pub port: u16,
    pub store_root: PathBuf,
    pub classifier_model: Option<PathBuf>,
    pub gan_checkpoint: Option<PathBuf>,
    /// OpenCV-style cascade XML; the bundled frontal face cascade when absent.
    pub cascade: Option<PathBuf>,
    pub low_confidence: f64,
    pub max_upload_bytes: usize,
    pub emotion_map: MappingTable,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 8080,
            store_root: PathBuf::from("blogstore"),
            classifier_model: None,
            gan_checkpoint: None,
            cascade: None,
            low_confidence: LOW_CONFIDENCE,
            max_upload_bytes: 10 << 20,
            emotion_map: MappingTable::default(),
        }
    }
}

impl ServerConfig {
    /// Parses a TOML document. Missing keys take their defaults; an
    /// `[emotion_map]` section must be complete.
    pub fn from_toml(doc: &str) -> Result<ServerConfig, ConfigError> {
        let table: toml::Table = doc.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
        // Validate the mapping first so its error is reported as such.
        if let Some(section) = table.get("emotion_map") {
            MappingTable::from_value(section)?;
        }
        let cfg: ServerConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ServerConfig, ConfigError> {
        let path = path.as_ref();
        let doc = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        ServerConfig::from_toml(&doc)
    }

    /// Applies `MOODSHIFT_*` overrides from `vars`. Unrelated keys are ignored.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (key, value) in vars {
            let Some(name) = key.strip_prefix(ENV_PREFIX) else { continue };
            let bad = |reason: String| ConfigError::Env { key: key.clone(), value: value.clone(), reason };
            let path = || (!value.is_empty()).then(|| PathBuf::from(&value));
            match name {
                "BIND" => self.bind = value.parse().map_err(|e| bad(format!("{e}")))?,
                "PORT" => self.port = value.parse().map_err(|e| bad(format!("{e}")))?,
                "STORE_ROOT" => self.store_root = PathBuf::from(&value),
                "CLASSIFIER_MODEL" => self.classifier_model = path(),
                "GAN_CHECKPOINT" => self.gan_checkpoint = path(),
                "CASCADE" => self.cascade = path(),
                "LOW_CONFIDENCE" => self.low_confidence = value.parse().map_err(|e| bad(format!("{e}")))?,
                "MAX_UPLOAD_BYTES" => self.max_upload_bytes = value.parse().map_err(|e| bad(format!("{e}")))?,
                _ => {}
            }
        }
        self.validate()
    }

    /// The file at `path` (or defaults) with the process environment applied.
    pub fn resolve(path: Option<&Path>) -> Result<ServerConfig, ConfigError> {
        let mut cfg = match path {
            Some(p) => ServerConfig::load(p)?,
            None => ServerConfig::default(),
        };
        cfg.apply_env(std::env::vars())?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.low_confidence) {
            return Err(ConfigError::Syntax(format!("low_confidence {} is outside [0, 1]", self.low_confidence)));
        }
        if self.max_upload_bytes == 0 {
            return Err(ConfigError::Syntax("max_upload_bytes must be positive".into()));
        }
        Ok(())
    }

    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }

    /// Loads every configured model. A configured path that fails to load is
    /// an error; an unconfigured model is simply absent.
    pub fn load_models(&self) -> Result<Models, ConfigError> {
        let classifier = self.classifier_model.as_ref().map(ClassifierModel::load).transpose()?;
        let gan = self.gan_checkpoint.as_ref().map(GanCheckpoint::load).transpose()?;
        let mut models = Models::new(classifier, gan);
        if let Some(p) = &self.cascade {
            models.cascade = CascadeModel::load(p)?;
        }
        models.mapping = self.emotion_map;
        models.low_confidence = self.low_confidence;
        Ok(models)
    }

    pub fn load_models_shared(&self) -> Result<Arc<Models>, ConfigError> {
        self.load_models().map(Arc::new)
    }
}
