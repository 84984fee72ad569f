//! Schema-conditioned extraction: one prompt per page built from the
//! document type's schema, the model's JSON answer mapped back onto schema
//! fields, and every value grounded onto OCR tokens for evidence.

mod grounding;

use serde::{Deserialize, Serialize};

use crate::backend::BackendError;
use crate::model::{DocumentType, EvidenceRef, FieldExtraction, FieldKind, OcrToken, PageImage, Schema, DEFAULT_LOW_CONFIDENCE_THRESHOLD};
use crate::ocr::{tokens_to_text, DEFAULT_TEXT_MIN_CONF};
use crate::vlm::{build_prompt, parse_model_json, PromptError, PromptField, PromptSpec, VlmBackend};

pub use grounding::{ground_value, ground_value_with, match_key, Evidence, Grounding, GroundingConfig, MatchMode};

pub const OCR_TEXT_HEADER: &str = "### OCR TEXT";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    pub include_ocr_text: bool,
    pub ocr_min_conf: f64,
    pub grounding: GroundingConfig,
    /// Set from the service-wide threshold rather than read from config.
    #[serde(skip)]
    pub low_confidence_threshold: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            include_ocr_text: true,
            ocr_min_conf: DEFAULT_TEXT_MIN_CONF,
            grounding: GroundingConfig::default(),
            low_confidence_threshold: DEFAULT_LOW_CONFIDENCE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PageExtraction {
    pub fields: Vec<FieldExtraction>,
    pub diagnostics: Vec<String>,
}

fn placeholder(kind: FieldKind) -> &'static str {
    match kind {
        FieldKind::Text => "...",
        FieldKind::Date => "2024-10-05",
        FieldKind::Amount => "1650000",
        FieldKind::Identifier => "ABC-0001",
    }
}

/// The four-part prompt for `doc_type` without the OCR text block.
pub fn schema_prompt(doc_type: &DocumentType, schema: &Schema) -> Result<String, PromptError> {
    let labels: Vec<String> = schema.fields.iter().map(|f| f.label()).collect();
    let names: Vec<&str> = schema.fields.iter().map(|f| f.name.as_str()).collect();
    let example = schema
        .fields
        .iter()
        .map(|f| {
            let v = f.example.as_deref().unwrap_or(placeholder(f.kind));
            format!("  {}: {}", serde_json::Value::from(f.name.as_str()), serde_json::Value::from(v))
        })
        .collect::<Vec<_>>()
        .join(",\n");
    build_prompt(&PromptSpec {
        role_definition: format!(
            "You are an information extraction assistant for insurance claim documents. Extract the following fields \
             from this {} image: {}. Return the result as JSON.",
            doc_type.display_name.to_lowercase(),
            labels.join(", ")
        ),
        field_definitions: schema
            .fields
            .iter()
            .map(|f| PromptField {
                name: f.name.clone(),
                description: f.description.clone(),
                kind: f.kind,
            })
            .collect(),
        output_format: format!(
            "Return a single JSON object with exactly these keys: {}. Copy each value as printed on the document. \
             Use null when a field is not present. Do not add other keys or any commentary.",
            names.join(", ")
        ),
        example_output: format!("{{\n{example}\n}}"),
    })
}

/// Full extraction prompt for a page.
pub fn extraction_prompt(
    doc_type: &DocumentType,
    schema: &Schema,
    tokens: &[OcrToken],
    cfg: &ExtractConfig,
) -> Result<String, PromptError> {
    let mut prompt = schema_prompt(doc_type, schema)?;
    if cfg.include_ocr_text {
        prompt.push_str("\n\n");
        prompt.push_str(OCR_TEXT_HEADER);
        prompt.push('\n');
        prompt.push_str(&tokens_to_text(tokens, cfg.ocr_min_conf));
    }
    Ok(prompt)
}

fn match_mode(kind: FieldKind) -> MatchMode {
    match kind {
        FieldKind::Amount => MatchMode::Amount,
        _ => MatchMode::Text,
    }
}

/// Extracts every schema field of one page, in schema order.
///
/// Fields the model leaves null or omits are `missing`. An answer with no
/// parseable JSON object yields all fields missing plus a diagnostic.
/// Backend failures are returned to the caller.
pub fn extract_fields(
    page: &PageImage,
    doc_type: &DocumentType,
    schema: &Schema,
    tokens: &[OcrToken],
    vlm: &dyn VlmBackend,
    cfg: &ExtractConfig,
) -> Result<PageExtraction, BackendError> {
    if schema.is_empty() {
        return Ok(PageExtraction::default());
    }
    let prompt = extraction_prompt(doc_type, schema, tokens, cfg)
        .map_err(|e| BackendError::protocol(vlm.name(), None, format!("cannot build prompt: {e}")))?;
    let response = vlm.chat(page, &prompt)?;
    let mut out = PageExtraction::default();
    let answer = match parse_model_json(&response.raw_text) {
        Ok(map) => map,
        Err(e) => {
            out.diagnostics.push(format!("page {}: {e}; all fields marked missing", page.page_index()));
            out.fields = schema.fields.iter().map(|f| FieldExtraction::missing(&f.name)).collect();
            return Ok(out);
        }
    };
    for spec in &schema.fields {
        let raw = spec
            .accepted_keys()
            .find_map(|k| answer.get(k))
            .cloned()
            .flatten()
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty());
        let Some(raw) = raw else {
            out.fields.push(FieldExtraction::missing(&spec.name));
            continue;
        };
        let grounded = ground_value_with(&raw, tokens, cfg.grounding, match_mode(spec.kind));
        let (evidence, confidence) = match &grounded {
            Some(g) => (
                vec![EvidenceRef {
                    bbox: g.best.bbox,
                    page_index: g.best.page_index,
                }],
                Some(g.best.confidence),
            ),
            None => (Vec::new(), None),
        };
        if let Some(g) = grounded.as_ref().filter(|g| !g.alternates.is_empty()) {
            let spans: Vec<String> = g
                .alternates
                .iter()
                .map(|a| format!("{}..={}", a.token_span[0], a.token_span[1]))
                .collect();
            out.diagnostics.push(format!(
                "page {} field {}: grounded at tokens {}..={}; equal alternates at {}",
                page.page_index(),
                spec.name,
                g.best.token_span[0],
                g.best.token_span[1],
                spans.join(", ")
            ));
        }
        out.fields.push(FieldExtraction {
            field: spec.name.clone(),
            status: FieldExtraction::status_for(Some(&raw), confidence, cfg.low_confidence_threshold),
            raw_value: Some(raw),
            normalized_value: None,
            evidence,
            confidence,
            normalization: None,
        });
    }
    Ok(out)
}
