use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::classify::{ClassificationMethod, ClassificationOutcome};
use crate::model::{CompletenessReport, FieldExtraction, FieldStatus, Registry};
use crate::preprocess::DocumentFormat;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub filename: String,
    pub format: DocumentFormat,
    pub digest: String,
    pub page_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageResult {
    /// Position within the claim, counting across all its documents.
    pub page_index: usize,
    pub document_index: usize,
    /// Position within its own document.
    pub document_page: usize,
    pub source_digest: String,
    pub width: u32,
    pub height: u32,
    pub ocr_token_count: usize,
    /// `None` when neither the title path nor a text model could decide.
    pub classification: Option<ClassificationOutcome>,
    pub fields: Vec<FieldExtraction>,
    /// Stages that ran without their backend: `ocr`, `classify`, `extract`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degraded: Vec<String>,
}

impl PageResult {
    pub fn doc_type(&self) -> Option<&str> {
        self.classification.as_ref().map(|c| c.doc_type.as_str())
    }

    pub fn field(&self, name: &str) -> Option<&FieldExtraction> {
        self.fields.iter().find(|f| f.field == name)
    }
}

/// Wall-clock milliseconds per stage. Pages run concurrently inside a stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub preprocess_ms: f64,
    pub ocr_ms: f64,
    pub classify_ms: f64,
    pub extract_ms: f64,
    pub postprocess_ms: f64,
    pub total_ms: f64,
}

impl StageTimings {
    pub const STAGES: [&'static str; 6] = ["preprocess", "ocr", "classify", "extract", "postprocess", "total"];

    pub fn get(&self, stage: &str) -> Option<f64> {
        Some(match stage {
            "preprocess" => self.preprocess_ms,
            "ocr" => self.ocr_ms,
            "classify" => self.classify_ms,
            "extract" => self.extract_ms,
            "postprocess" => self.postprocess_ms,
            "total" => self.total_ms,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub field: String,
    pub page_index: usize,
    pub old: Option<String>,
    pub new: String,
    pub corrected_at: DateTime<Utc>,
}

/// The persisted unit: one claim, its pages, fields and audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimExtractionResult {
    pub claim_id: String,
    pub source_digest: String,
    pub documents: Vec<SourceDocument>,
    pub pages: Vec<PageResult>,
    pub bundle: CompletenessReport,
    /// Flat claim-level view keyed by each field's export key.
    pub export: BTreeMap<String, Option<String>>,
    pub timings: StageTimings,
    pub low_confidence_threshold: f64,
    pub created_at: DateTime<Utc>,
    pub corrections: Vec<Correction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl ClaimExtractionResult {
    pub fn page(&self, index: usize) -> Option<&PageResult> {
        self.pages.iter().find(|p| p.page_index == index)
    }

    pub fn doc_types(&self) -> Vec<String> {
        self.pages.iter().filter_map(|p| p.doc_type().map(str::to_string)).collect()
    }

    /// Rebuilds `export` from the pages: for each export key the first
    /// non-null value in page order, normalized form preferred.
    pub fn refresh_export(&mut self, registry: &Registry) {
        self.export = export_map(&self.pages, registry);
    }

    /// Copy with the fields that legitimately differ between two runs on
    /// the same input blanked out.
    pub fn without_run_specifics(&self) -> Self {
        let mut c = self.clone();
        c.claim_id.clear();
        c.created_at = DateTime::<Utc>::UNIX_EPOCH;
        c.timings = StageTimings::default();
        c
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, p) in self.pages.iter().enumerate() {
            if p.page_index != i {
                return Err(format!("page {i} carries index {}", p.page_index));
            }
            if let Some(c) = &p.classification {
                c.check_invariants()?;
            }
            for f in &p.fields {
                f.check_invariants(self.low_confidence_threshold)?;
                if f.evidence.iter().any(|e| e.page_index != p.page_index) {
                    return Err(format!("{}: evidence points at another page", f.field));
                }
            }
        }
        for c in &self.corrections {
            let field = self
                .page(c.page_index)
                .and_then(|p| p.field(&c.field))
                .ok_or_else(|| format!("correction for unknown field {} on page {}", c.field, c.page_index))?;
            if field.status != FieldStatus::Corrected {
                return Err(format!("corrected field {} is not marked corrected", c.field));
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> ClaimSummary {
        let count = |s: FieldStatus| self.pages.iter().flat_map(|p| &p.fields).filter(|f| f.status == s).count();
        ClaimSummary {
            claim_id: self.claim_id.clone(),
            created_at: self.created_at,
            page_types: self.pages.iter().map(|p| p.doc_type().map(str::to_string)).collect(),
            complete: self.bundle.complete,
            low_confidence_fields: count(FieldStatus::LowConfidence),
            missing_fields: count(FieldStatus::Missing),
            corrections: self.corrections.len(),
        }
    }

    pub fn method_counts(&self) -> BTreeMap<ClassificationMethod, usize> {
        let mut m = BTreeMap::new();
        for c in self.pages.iter().filter_map(|p| p.classification.as_ref()) {
            *m.entry(c.method).or_default() += 1;
        }
        m
    }
}

/// Listing entry for `GET /v1/claims`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimSummary {
    pub claim_id: String,
    pub created_at: DateTime<Utc>,
    pub page_types: Vec<Option<String>>,
    pub complete: bool,
    pub low_confidence_fields: usize,
    pub missing_fields: usize,
    pub corrections: usize,
}

pub fn export_map(pages: &[PageResult], registry: &Registry) -> BTreeMap<String, Option<String>> {
    let mut out: BTreeMap<String, Option<String>> = BTreeMap::new();
    for page in pages {
        let Some(schema) = page.doc_type().and_then(|t| registry.schema_for(t).ok()) else {
            continue;
        };
        for f in &page.fields {
            let Some(spec) = schema.field(&f.field) else { continue };
            let value = f.normalized_value.clone().or_else(|| f.raw_value.clone());
            let slot = out.entry(spec.export_name().to_string()).or_insert(None);
            if slot.is_none() {
                *slot = value;
            }
        }
    }
    out
}
