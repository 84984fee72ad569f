use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::ExtractConfig;
use crate::model::DEFAULT_LOW_CONFIDENCE_THRESHOLD;
use crate::ocr::{OcrBackendConfig, OCR_ENDPOINT_ENV};
use crate::postprocess::{DateOrder, RefIndexConfig};
use crate::preprocess::{PreprocessConfig, RASTERIZER_ENV};
use crate::vlm::{VlmBackendConfig, VLM_ENDPOINT_ENV, VLM_MODEL_ENV};

pub const STORE_DIR_ENV: &str = "CLAIMPIPE_STORE_DIR";
pub const BIND_ENV: &str = "CLAIMPIPE_BIND";
pub const FIXTURE_ROOTS_ENV: &str = "CLAIMPIPE_FIXTURE_ROOTS";
pub const CLASSIFIER_MODEL_ENV: &str = "CLAIMPIPE_CLASSIFIER_MODEL";
pub const VLM_API_KEY_ENV: &str = "CLAIMPIPE_VLM_API_KEY";
pub const LOW_CONFIDENCE_ENV: &str = "CLAIMPIPE_LOW_CONFIDENCE_THRESHOLD";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for {key}: {message}")]
    Invalid { key: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Fixture,
    Http,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceSection {
    pub bind: String,
    /// Documents processed concurrently by the service.
    pub workers: usize,
    pub store_dir: PathBuf,
    pub low_confidence_threshold: f64,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            workers: 4,
            store_dir: PathBuf::from("claims"),
            low_confidence_threshold: DEFAULT_LOW_CONFIDENCE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessSection {
    #[serde(flatten)]
    pub limits: PreprocessConfig,
    /// `embedded` or `pdftoppm`.
    pub rasterizer: String,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self {
            limits: PreprocessConfig::default(),
            rasterizer: "embedded".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcrSection {
    pub backend: BackendKind,
    #[serde(flatten)]
    pub http: OcrBackendConfig,
}

impl Default for OcrSection {
    fn default() -> Self {
        Self {
            backend: BackendKind::Fixture,
            http: OcrBackendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlmSection {
    pub backend: BackendKind,
    #[serde(flatten)]
    pub http: VlmBackendConfig,
}

impl Default for VlmSection {
    fn default() -> Self {
        Self {
            backend: BackendKind::Fixture,
            http: VlmBackendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSection {
    /// Directories holding `ocr/` and `vlm/` fixture files, or corpus roots.
    pub roots: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifySection {
    /// Title rule table; the built-in table when unset.
    pub rules: Option<PathBuf>,
    /// Trained text classifier; title rules only when unset.
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostprocessSection {
    pub date_order: DateOrder,
    #[serde(flatten)]
    pub index: RefIndexConfig,
    /// Reference list name to file; `hospitals` falls back to the built-in list.
    pub references: std::collections::BTreeMap<String, PathBuf>,
}

impl Default for PostprocessSection {
    fn default() -> Self {
        Self {
            date_order: DateOrder::DayFirst,
            index: RefIndexConfig::default(),
            references: Default::default(),
        }
    }
}

/// Everything needed to assemble a [`super::Pipeline`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Document-type registry; the built-in one when unset.
    pub registry: Option<PathBuf>,
    pub service: ServiceSection,
    pub preprocess: PreprocessSection,
    pub ocr: OcrSection,
    pub vlm: VlmSection,
    pub fixtures: FixtureSection,
    pub classify: ClassifySection,
    pub extract: ExtractConfig,
    pub postprocess: PostprocessSection,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.registry.as_mut() {
            fix(p);
        }
        fix(&mut self.service.store_dir);
        self.fixtures.roots.iter_mut().for_each(fix);
        if let Some(p) = self.classify.rules.as_mut() {
            fix(p);
        }
        if let Some(p) = self.classify.model.as_mut() {
            fix(p);
        }
        self.postprocess.references.values_mut().for_each(fix);
    }

    /// Applies `CLAIMPIPE_*` variables from the process environment.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        self.apply_overrides(|k| std::env::var(k).ok().filter(|v| !v.is_empty()))
    }

    pub fn apply_overrides(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = lookup(OCR_ENDPOINT_ENV) {
            self.ocr.http.endpoint = v;
            self.ocr.backend = BackendKind::Http;
        }
        if let Some(v) = lookup(VLM_ENDPOINT_ENV) {
            self.vlm.http.endpoint = v;
            self.vlm.backend = BackendKind::Http;
        }
        if let Some(v) = lookup(VLM_MODEL_ENV) {
            self.vlm.http.model = v;
        }
        if let Some(v) = lookup(VLM_API_KEY_ENV) {
            self.vlm.http.api_key = Some(v);
        }
        if let Some(v) = lookup(RASTERIZER_ENV) {
            self.preprocess.rasterizer = v;
        }
        if let Some(v) = lookup(STORE_DIR_ENV) {
            self.service.store_dir = v.into();
        }
        if let Some(v) = lookup(BIND_ENV) {
            self.service.bind = v;
        }
        if let Some(v) = lookup(FIXTURE_ROOTS_ENV) {
            self.fixtures.roots = std::env::split_paths(&v).collect();
        }
        if let Some(v) = lookup(CLASSIFIER_MODEL_ENV) {
            self.classify.model = Some(v.into());
        }
        if let Some(v) = lookup(LOW_CONFIDENCE_ENV) {
            self.service.low_confidence_threshold = v.parse().map_err(|e: std::num::ParseFloatError| ConfigError::Invalid {
                key: LOW_CONFIDENCE_ENV.into(),
                message: e.to_string(),
            })?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, message: &str| {
            Err(ConfigError::Invalid {
                key: key.into(),
                message: message.into(),
            })
        };
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.service.low_confidence_threshold) {
            return bad("service.low_confidence_threshold", "must lie in [0, 1]");
        }
        if self.service.workers == 0 {
            return bad("service.workers", "must be at least 1");
        }
        if self.preprocess.limits.max_dim == 0 {
            return bad("preprocess.max_dim", "must be positive");
        }
        if !unit(self.extract.grounding.threshold) || self.extract.grounding.max_span == 0 {
            return bad("extract.grounding", "threshold must lie in [0, 1] and max_span be positive");
        }
        if !unit(self.postprocess.index.similarity_threshold) || self.postprocess.index.prefilter_top_k == 0 {
            return bad("postprocess", "similarity_threshold must lie in [0, 1] and prefilter_top_k be positive");
        }
        if self.ocr.backend == BackendKind::None {
            return bad("ocr.backend", "an OCR backend is required");
        }
        for (key, kind, endpoint) in [
            ("ocr.endpoint", self.ocr.backend, &self.ocr.http.endpoint),
            ("vlm.endpoint", self.vlm.backend, &self.vlm.http.endpoint),
        ] {
            if kind == BackendKind::Http && endpoint.trim().is_empty() {
                return bad(key, "required for the http backend");
            }
        }
        Ok(())
    }

    /// Copy safe to expose over the API (no credentials).
    pub fn redacted(&self) -> Self {
        let mut c = self.clone();
        if c.vlm.http.api_key.is_some() {
            c.vlm.http.api_key = Some("***".into());
        }
        c
    }
}
