//! End-to-end orchestration: split and resize, OCR, classify, extract and
//! normalize every page of a claim, check bundle completeness, persist.
//!
//! Each stage runs over all pages concurrently before the next begins, so
//! stage timings are wall-clock and attributable.

mod config;
mod metrics;
mod result;
mod store;

use std::sync::Arc;
use std::time::Instant;

use chrono::{Datelike, Utc};
use rayon::prelude::*;
use thiserror::Error;

use crate::backend::BackendError;
use crate::classify::{ClassificationOutcome, HybridClassifier, RuleError, RuleSet, TextClassifier};
use crate::extract::{extract_fields, ExtractConfig};
use crate::fixture::FixtureIndex;
use crate::model::{FieldExtraction, FieldStatus, OcrToken, PageImage, Registry, RegistryError};
use crate::ocr::{tokens_to_text, FixtureOcr, HttpOcr, OcrBackend, DEFAULT_TEXT_MIN_CONF};
use crate::postprocess::{builtin_hospitals, Postprocessor, RefIndex};
use crate::preprocess::{
    rasterizer_from_name, resize_page, sha256_hex, split_document, PreprocessConfig, PreprocessError, RawDocument,
    Rasterizer,
};
use crate::vlm::{FixtureVlm, HttpVlm, VlmBackend};

pub use config::{
    BackendKind, ClassifySection, ConfigError, FixtureSection, OcrSection, PipelineConfig, PostprocessSection,
    PreprocessSection, ServiceSection, VlmSection, BIND_ENV, CLASSIFIER_MODEL_ENV, FIXTURE_ROOTS_ENV,
    LOW_CONFIDENCE_ENV, STORE_DIR_ENV, VLM_API_KEY_ENV,
};
pub use metrics::{exact_quantile, LatencyHistogram, LatencySummary, Metrics, MetricsSnapshot, MinuteCount, RequestCounts, WindowReport};
pub use result::{export_map, ClaimExtractionResult, ClaimSummary, Correction, PageResult, SourceDocument, StageTimings};
pub use store::{format_claim_id, parse_claim_id, ClaimListing, ClaimStore, FailedJob, FsStore, StoreError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("claim {claim_id}: {source}")]
    Preprocess {
        claim_id: String,
        #[source]
        source: PreprocessError,
    },
    #[error("no documents supplied")]
    NoDocuments,
    #[error("{0} not found")]
    NotFound(String),
    #[error(transparent)]
    Store(StoreError),
}

impl PipelineError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Preprocess { source, .. } => source.code(),
            Self::NoDocuments => "empty_document",
            Self::NotFound(_) => "not_found",
            Self::Store(_) => "store_error",
        }
    }
}

impl From<StoreError> for PipelineError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(what) => Self::NotFound(what),
            other => Self::Store(other),
        }
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error("classifier model {path}: {message}")]
    Model { path: String, message: String },
    #[error("reference list {name}: {message}")]
    Reference { name: String, message: String },
    #[error("backend setup: {0}")]
    Backend(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Assembles a [`Pipeline`] from parts; unset parts take built-in defaults.
pub struct PipelineBuilder {
    store: Arc<dyn ClaimStore>,
    ocr: Arc<dyn OcrBackend>,
    vlm: Option<Arc<dyn VlmBackend>>,
    registry: Arc<Registry>,
    rules: RuleSet,
    model: Option<Arc<TextClassifier>>,
    rasterizer: Arc<dyn Rasterizer>,
    postprocessor: Option<Postprocessor>,
    metrics: Arc<Metrics>,
    preprocess: PreprocessConfig,
    extract: ExtractConfig,
    low_confidence_threshold: f64,
}

impl PipelineBuilder {
    pub fn new(store: Arc<dyn ClaimStore>, ocr: Arc<dyn OcrBackend>) -> Self {
        Self {
            store,
            ocr,
            vlm: None,
            registry: Arc::new(Registry::builtin()),
            rules: RuleSet::builtin(),
            model: None,
            rasterizer: Arc::new(crate::preprocess::EmbeddedImageRasterizer),
            postprocessor: None,
            metrics: Arc::new(Metrics::default()),
            preprocess: PreprocessConfig::default(),
            extract: ExtractConfig::default(),
            low_confidence_threshold: crate::model::DEFAULT_LOW_CONFIDENCE_THRESHOLD,
        }
    }

    /// Fixture OCR and VLM backends over `roots`, results in `store`.
    pub fn fixtures(store: Arc<dyn ClaimStore>, roots: &[std::path::PathBuf]) -> Self {
        let index = Arc::new(FixtureIndex::new(roots.iter().cloned()));
        Self::new(store, Arc::new(FixtureOcr::new(index.clone()))).vlm(Some(Arc::new(FixtureVlm::new(index))))
    }

    pub fn vlm(mut self, vlm: Option<Arc<dyn VlmBackend>>) -> Self {
        self.vlm = vlm;
        self
    }

    pub fn registry(mut self, registry: Arc<Registry>) -> Self {
        self.registry = registry;
        self
    }

    pub fn rules(mut self, rules: RuleSet) -> Self {
        self.rules = rules;
        self
    }

    pub fn model(mut self, model: Option<Arc<TextClassifier>>) -> Self {
        self.model = model;
        self
    }

    pub fn rasterizer(mut self, rasterizer: Arc<dyn Rasterizer>) -> Self {
        self.rasterizer = rasterizer;
        self
    }

    pub fn postprocessor(mut self, postprocessor: Postprocessor) -> Self {
        self.postprocessor = Some(postprocessor);
        self
    }

    pub fn metrics(mut self, metrics: Arc<Metrics>) -> Self {
        self.metrics = metrics;
        self
    }

    pub fn preprocess(mut self, cfg: PreprocessConfig) -> Self {
        self.preprocess = cfg;
        self
    }

    pub fn extract(mut self, cfg: ExtractConfig) -> Self {
        self.extract = cfg;
        self
    }

    pub fn low_confidence_threshold(mut self, t: f64) -> Self {
        self.low_confidence_threshold = t;
        self
    }

    pub fn build(self) -> Pipeline {
        let postprocessor = self.postprocessor.unwrap_or_else(|| {
            Postprocessor::default().with_reference("hospitals", Arc::new(builtin_hospitals(Default::default())))
        });
        let mut extract = self.extract;
        extract.low_confidence_threshold = self.low_confidence_threshold;
        Pipeline {
            store: self.store,
            ocr: self.ocr,
            vlm: self.vlm,
            registry: self.registry,
            classifier: HybridClassifier::new(self.rules, self.model),
            rasterizer: self.rasterizer,
            postprocessor,
            metrics: self.metrics,
            preprocess: self.preprocess,
            extract,
        }
    }
}

pub struct Pipeline {
    store: Arc<dyn ClaimStore>,
    ocr: Arc<dyn OcrBackend>,
    vlm: Option<Arc<dyn VlmBackend>>,
    registry: Arc<Registry>,
    classifier: HybridClassifier,
    rasterizer: Arc<dyn Rasterizer>,
    postprocessor: Postprocessor,
    metrics: Arc<Metrics>,
    preprocess: PreprocessConfig,
    extract: ExtractConfig,
}

/// Per-page working state between stages.
struct PageWork {
    image: PageImage,
    document_index: usize,
    document_page: usize,
    tokens: Vec<OcrToken>,
    classification: Option<ClassificationOutcome>,
    fields: Vec<FieldExtraction>,
    degraded: Vec<String>,
    diagnostics: Vec<String>,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

impl Pipeline {
    /// Builds every component named by `cfg`.
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, BuildError> {
        let registry = match &cfg.registry {
            Some(p) => Registry::load(p)?,
            None => Registry::builtin(),
        };
        let rules = match &cfg.classify.rules {
            Some(p) => RuleSet::load(p)?,
            None => RuleSet::builtin(),
        };
        rules.check_against(&registry)?;
        let model = match &cfg.classify.model {
            Some(p) => Some(Arc::new(TextClassifier::load(p).map_err(|e| BuildError::Model {
                path: p.display().to_string(),
                message: e.to_string(),
            })?)),
            None => None,
        };
        let index = Arc::new(FixtureIndex::new(cfg.fixtures.roots.iter().cloned()));
        let ocr: Arc<dyn OcrBackend> = match cfg.ocr.backend {
            BackendKind::Http => Arc::new(HttpOcr::new(cfg.ocr.http.clone()).map_err(BuildError::Backend)?),
            _ => Arc::new(FixtureOcr::new(index.clone())),
        };
        let vlm: Option<Arc<dyn VlmBackend>> = match cfg.vlm.backend {
            BackendKind::Http => Some(Arc::new(HttpVlm::new(cfg.vlm.http.clone()).map_err(BuildError::Backend)?)),
            BackendKind::Fixture => Some(Arc::new(FixtureVlm::new(index))),
            BackendKind::None => None,
        };
        let mut post = Postprocessor::new(cfg.postprocess.date_order);
        if !cfg.postprocess.references.contains_key("hospitals") {
            post = post.with_reference("hospitals", Arc::new(builtin_hospitals(cfg.postprocess.index)));
        }
        for (name, path) in &cfg.postprocess.references {
            let err = |message: String| BuildError::Reference {
                name: name.clone(),
                message,
            };
            let text = std::fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
            let index = RefIndex::from_list_text(&text, cfg.postprocess.index).map_err(|e| err(e.to_string()))?;
            post = post.with_reference(name.clone(), Arc::new(index));
        }
        let store = FsStore::open(&cfg.service.store_dir)?;
        Ok(PipelineBuilder::new(Arc::new(store), ocr)
            .vlm(vlm)
            .registry(Arc::new(registry))
            .rules(rules)
            .model(model)
            .rasterizer(Arc::from(rasterizer_from_name(&cfg.preprocess.rasterizer)?))
            .postprocessor(post)
            .preprocess(cfg.preprocess.limits.clone())
            .extract(cfg.extract)
            .low_confidence_threshold(cfg.service.low_confidence_threshold)
            .build())
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn store(&self) -> &Arc<dyn ClaimStore> {
        &self.store
    }

    pub fn metrics(&self) -> &Arc<Metrics> {
        &self.metrics
    }

    pub fn classifier(&self) -> &HybridClassifier {
        &self.classifier
    }

    pub fn low_confidence_threshold(&self) -> f64 {
        self.extract.low_confidence_threshold
    }

    pub fn allocate_claim_id(&self) -> Result<String, PipelineError> {
        Ok(self.store.next_claim_id(Utc::now().year())?)
    }

    pub fn process_document(&self, doc: RawDocument) -> Result<ClaimExtractionResult, PipelineError> {
        self.process_bundle(vec![doc])
    }

    pub fn process_bundle(&self, docs: Vec<RawDocument>) -> Result<ClaimExtractionResult, PipelineError> {
        let id = self.allocate_claim_id()?;
        self.process_bundle_as(id, docs)
    }

    /// Processes the documents of one claim under a pre-allocated id.
    ///
    /// Preprocessing failures are recorded as a failed job and nothing else
    /// is persisted. Backend failures degrade the affected pages instead.
    pub fn process_bundle_as(&self, claim_id: String, docs: Vec<RawDocument>) -> Result<ClaimExtractionResult, PipelineError> {
        let started = Instant::now();
        let created_at = Utc::now();
        if docs.is_empty() {
            self.metrics.record_failure();
            return Err(PipelineError::NoDocuments);
        }
        let mut timings = StageTimings::default();

        let t = Instant::now();
        let split = match self.split_all(&docs) {
            Ok(pages) => pages,
            Err(source) => {
                self.metrics.record_failure();
                let err = PipelineError::Preprocess { claim_id: claim_id.clone(), source };
                self.store.record_failure(&FailedJob {
                    claim_id,
                    filenames: docs.iter().map(|d| d.filename().to_string()).collect(),
                    error_code: err.code().to_string(),
                    message: err.to_string(),
                    failed_at: created_at,
                })?;
                return Err(err);
            }
        };
        let mut work: Vec<PageWork> = split
            .into_iter()
            .map(|(image, document_index, document_page)| PageWork {
                image,
                document_index,
                document_page,
                tokens: Vec::new(),
                classification: None,
                fields: Vec::new(),
                degraded: Vec::new(),
                diagnostics: Vec::new(),
            })
            .collect();
        timings.preprocess_ms = ms_since(t);

        let t = Instant::now();
        work.par_iter_mut().for_each(|w| match self.ocr.recognize_page(&w.image) {
            Ok(tokens) => w.tokens = tokens,
            Err(e) => self.degrade(w, "ocr", &e),
        });
        timings.ocr_ms = ms_since(t);

        let t = Instant::now();
        work.par_iter_mut().for_each(|w| {
            let text = tokens_to_text(&w.tokens, DEFAULT_TEXT_MIN_CONF);
            match self.classifier.classify_page(&w.image, &text, self.vlm.as_deref()) {
                Ok(outcome) => {
                    if let Some(why) = &outcome.degraded {
                        w.degraded.push("classify".into());
                        w.diagnostics.push(format!("page {}: title path skipped: {why}", w.image.page_index()));
                        self.metrics.record_stage_error("classify");
                    }
                    w.classification = Some(outcome);
                }
                Err(e) => {
                    w.degraded.push("classify".into());
                    w.diagnostics.push(format!("page {}: {e}", w.image.page_index()));
                    self.metrics.record_stage_error("classify");
                }
            }
        });
        timings.classify_ms = ms_since(t);

        let t = Instant::now();
        work.par_iter_mut().for_each(|w| self.extract_page(w));
        timings.extract_ms = ms_since(t);

        let t = Instant::now();
        for w in &mut work {
            let Some(schema) = w.classification.as_ref().and_then(|c| self.registry.schema_for(&c.doc_type).ok()) else {
                continue;
            };
            for f in &mut w.fields {
                if let Some(spec) = schema.field(&f.field) {
                    self.postprocessor.apply(spec, f);
                }
            }
        }
        timings.postprocess_ms = ms_since(t);

        let mut diagnostics = Vec::new();
        let mut images = Vec::with_capacity(work.len());
        let pages: Vec<PageResult> = work
            .into_iter()
            .map(|w| {
                diagnostics.extend(w.diagnostics);
                images.push(w.image.clone());
                PageResult {
                    page_index: w.image.page_index(),
                    document_index: w.document_index,
                    document_page: w.document_page,
                    source_digest: w.image.source_digest().to_string(),
                    width: w.image.width(),
                    height: w.image.height(),
                    ocr_token_count: w.tokens.len(),
                    classification: w.classification,
                    fields: w.fields,
                    degraded: w.degraded,
                }
            })
            .collect();
        let doc_types: Vec<&str> = pages.iter().filter_map(|p| p.doc_type()).collect();
        let bundle = self.registry.validate_claim_bundle(&doc_types);
        let documents: Vec<SourceDocument> = docs
            .iter()
            .enumerate()
            .map(|(i, d)| SourceDocument {
                filename: d.filename().to_string(),
                format: d.format(),
                digest: d.digest().to_string(),
                page_count: pages.iter().filter(|p| p.document_index == i).count(),
            })
            .collect();
        let source_digest = match documents.as_slice() {
            [one] => one.digest.clone(),
            many => sha256_hex(many.iter().map(|d| d.digest.as_str()).collect::<Vec<_>>().join("\n").as_bytes()),
        };
        let mut result = ClaimExtractionResult {
            claim_id,
            source_digest,
            documents,
            export: export_map(&pages, &self.registry),
            pages,
            bundle,
            timings,
            low_confidence_threshold: self.low_confidence_threshold(),
            created_at,
            corrections: Vec::new(),
            diagnostics,
        };
        result.timings.total_ms = ms_since(started);

        let t = Instant::now();
        let pngs: Vec<Vec<u8>> = images
            .par_iter()
            .map(|p| p.encode_png().unwrap_or_default())
            .collect();
        self.store.create(&result, &pngs)?;
        self.metrics.record_persist(ms_since(t));
        let methods: Vec<_> = result.pages.iter().map(|p| p.classification.as_ref().map(|c| c.method)).collect();
        self.metrics.record_success(&result.timings, result.pages.len(), &methods);
        Ok(result)
    }

    fn split_all(&self, docs: &[RawDocument]) -> Result<Vec<(PageImage, usize, usize)>, PreprocessError> {
        let per_doc: Vec<Vec<PageImage>> = docs
            .par_iter()
            .map(|d| {
                let pages = split_document(d, self.rasterizer.as_ref(), &self.preprocess)?;
                Ok(pages.par_iter().map(|p| resize_page(p, self.preprocess.max_dim)).collect())
            })
            .collect::<Result<_, PreprocessError>>()?;
        let mut out = Vec::new();
        for (d, pages) in per_doc.into_iter().enumerate() {
            for (i, p) in pages.into_iter().enumerate() {
                out.push((p.with_index(out.len()), d, i));
            }
        }
        Ok(out)
    }

    fn degrade(&self, w: &mut PageWork, stage: &str, e: &BackendError) {
        w.degraded.push(stage.to_string());
        w.diagnostics.push(format!("page {}: {stage} degraded: {e}", w.image.page_index()));
        self.metrics.record_stage_error(stage);
    }

    fn extract_page(&self, w: &mut PageWork) {
        let Some(c) = &w.classification else { return };
        let (Ok(dt), Ok(schema)) = (self.registry.document_type(&c.doc_type), self.registry.schema_for(&c.doc_type)) else {
            w.diagnostics.push(format!("page {}: type {} is not in the registry", w.image.page_index(), c.doc_type));
            return;
        };
        if schema.is_empty() {
            return;
        }
        let all_missing = || schema.fields.iter().map(|f| FieldExtraction::missing(&f.name)).collect();
        let Some(vlm) = &self.vlm else {
            w.fields = all_missing();
            w.degraded.push("extract".into());
            w.diagnostics.push(format!("page {}: no vision-language backend configured", w.image.page_index()));
            self.metrics.record_stage_error("extract");
            return;
        };
        match extract_fields(&w.image, dt, schema, &w.tokens, vlm.as_ref(), &self.extract) {
            Ok(out) => {
                w.fields = out.fields;
                w.diagnostics.extend(out.diagnostics);
            }
            Err(e) => {
                w.fields = all_missing();
                self.degrade(w, "extract", &e);
            }
        }
    }

    /// Sets a field's normalized value by hand and appends to the audit log.
    /// `raw_value` and evidence are left untouched.
    pub fn record_correction(
        &self,
        claim_id: &str,
        page_index: usize,
        field: &str,
        new_value: &str,
    ) -> Result<ClaimExtractionResult, PipelineError> {
        let registry = &self.registry;
        let result = self.store.append_correction(claim_id, &mut |r: &mut ClaimExtractionResult| {
            let page = r
                .pages
                .iter_mut()
                .find(|p| p.page_index == page_index)
                .ok_or_else(|| StoreError::NotFound(format!("page {page_index} of claim {claim_id}")))?;
            let f = page
                .fields
                .iter_mut()
                .find(|f| f.field == field)
                .ok_or_else(|| StoreError::NotFound(format!("field {field} on page {page_index} of claim {claim_id}")))?;
            let correction = Correction {
                field: field.to_string(),
                page_index,
                old: f.normalized_value.clone(),
                new: new_value.to_string(),
                corrected_at: Utc::now(),
            };
            f.normalized_value = Some(new_value.to_string());
            f.status = FieldStatus::Corrected;
            r.corrections.push(correction.clone());
            r.refresh_export(registry);
            Ok(correction)
        })?;
        Ok(result)
    }

    pub fn load(&self, claim_id: &str) -> Result<ClaimExtractionResult, PipelineError> {
        Ok(self.store.load(claim_id)?)
    }
}
