//! Hybrid page typing: the VLM reads the page title, a rule table maps it
//! to a document type, and a TF-IDF + logistic-regression model over the
//! OCR text decides whenever the title is missing, unmapped or ambiguous.

mod logreg;
mod model_file;
mod rules;
mod tfidf;

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::model::{FieldKind, PageImage};
use crate::vlm::{build_prompt, parse_model_json, PromptField, PromptSpec, VlmBackend};

pub use logreg::{loss_and_gradient, lr_predict, lr_train, softmax, LrError, LrHyperparams, LrModel, TrainReport};
pub use model_file::{ModelFileError, TextClassifier};
pub use rules::{fold_title, map_title, RuleError, RuleSet, TitleRule};
pub use tfidf::{tfidf_fit, tfidf_transform, tokenize, SparseVector, TfidfConfig, TfidfError, TfidfVectorizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassificationMethod {
    TitleRule,
    MlFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationOutcome {
    pub doc_type: String,
    pub method: ClassificationMethod,
    pub title: Option<String>,
    pub probabilities: Option<BTreeMap<String, f64>>,
    /// Why the title path was skipped, when the VLM could not be used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded: Option<String>,
}

impl ClassificationOutcome {
    pub fn check_invariants(&self) -> Result<(), String> {
        match self.method {
            ClassificationMethod::TitleRule if self.title.is_none() => Err("title_rule outcome without a title".into()),
            ClassificationMethod::MlFallback => match &self.probabilities {
                None => Err("ml_fallback outcome without probabilities".into()),
                Some(p) if (p.values().sum::<f64>() - 1.0).abs() > 1e-9 => Err("probabilities do not sum to 1".into()),
                Some(_) => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("classification unavailable: {0}")]
    Unavailable(String),
}

/// The fixed prompt asking only for the printed title.
pub fn title_prompt() -> &'static str {
    static PROMPT: OnceLock<String> = OnceLock::new();
    PROMPT.get_or_init(|| {
        build_prompt(&PromptSpec {
            role_definition: "You are a document analysis assistant for insurance claims. Read the title printed on this \
                              claim document page and report it verbatim. Do not guess the document type."
                .into(),
            field_definitions: vec![PromptField {
                name: "title".into(),
                description: "The main title of the page exactly as printed, or null if the page has no title".into(),
                kind: FieldKind::Text,
            }],
            output_format: "Return a single JSON object with the key \"title\" whose value is a string or null.".into(),
            example_output: r#"{"title": "HOSPITAL DISCHARGE SUMMARY"}"#.into(),
        })
        .expect("title prompt is valid")
    })
}

fn is_null_word(s: &str) -> bool {
    matches!(s.to_ascii_lowercase().as_str(), "" | "none" | "null" | "n/a" | "no title")
}

/// Title from a model completion: the `title` key of a JSON answer, else
/// the first non-empty line with quotes and fences stripped. Trimmed and
/// uppercased; `None` when the model reports no title.
pub fn parse_title(raw: &str) -> Option<String> {
    if let Ok(map) = parse_model_json(raw) {
        let t = map.get("title").cloned().flatten()?;
        let t = t.trim();
        return (!is_null_word(t)).then(|| t.to_uppercase());
    }
    let line = raw
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with("```"))?;
    let t = line.trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '*') || c.is_whitespace());
    (!is_null_word(t)).then(|| t.to_uppercase())
}

pub fn extract_title(page: &PageImage, vlm: &dyn VlmBackend) -> Result<Option<String>, BackendError> {
    let resp = vlm.chat(page, title_prompt())?;
    Ok(parse_title(&resp.raw_text))
}

/// Rules plus an optional text model.
#[derive(Debug, Clone)]
pub struct HybridClassifier {
    pub rules: RuleSet,
    pub model: Option<Arc<TextClassifier>>,
}

impl HybridClassifier {
    pub fn new(rules: RuleSet, model: Option<Arc<TextClassifier>>) -> Self {
        Self { rules, model }
    }

    pub fn classify_page(
        &self,
        page: &PageImage,
        ocr_text: &str,
        vlm: Option<&dyn VlmBackend>,
    ) -> Result<ClassificationOutcome, ClassifyError> {
        classify_page(page, ocr_text, vlm, &self.rules, self.model.as_deref())
    }
}

/// Title rule first, ML fallback on a null/unmapped/ambiguous title or
/// when the VLM is unavailable.
pub fn classify_page(
    page: &PageImage,
    ocr_text: &str,
    vlm: Option<&dyn VlmBackend>,
    rules: &RuleSet,
    model: Option<&TextClassifier>,
) -> Result<ClassificationOutcome, ClassifyError> {
    let (title, degraded) = match vlm.map(|v| extract_title(page, v)) {
        Some(Ok(t)) => (t, None),
        Some(Err(e)) => (None, Some(e.to_string())),
        None => (None, Some("no vision-language backend configured".to_string())),
    };
    if let Some(t) = &title {
        if let Some(doc_type) = rules.map_title(t) {
            return Ok(ClassificationOutcome {
                doc_type: doc_type.to_string(),
                method: ClassificationMethod::TitleRule,
                title,
                probabilities: None,
                degraded: None,
            });
        }
    }
    let Some(model) = model else {
        let why = match (&title, &degraded) {
            (_, Some(d)) => format!("title path failed ({d}) and no text model is loaded"),
            (Some(t), None) => format!("title `{t}` is unmapped and no text model is loaded"),
            (None, None) => "no title found and no text model is loaded".to_string(),
        };
        return Err(ClassifyError::Unavailable(why));
    };
    let (doc_type, probs) = model.predict(ocr_text);
    Ok(ClassificationOutcome {
        doc_type: doc_type.to_string(),
        method: ClassificationMethod::MlFallback,
        title,
        probabilities: Some(model.classes().iter().cloned().zip(probs).collect()),
        degraded,
    })
}

/// Fits vectorizer and model on labelled page texts.
pub fn train_text_classifier<S: AsRef<str>, L: AsRef<str>>(
    texts: &[S],
    labels: &[L],
    tfidf: TfidfConfig,
    hp: LrHyperparams,
) -> Result<(TextClassifier, TrainReport), String> {
    let vectorizer = TfidfVectorizer::fit(texts, tfidf).map_err(|e| e.to_string())?;
    let x: Vec<SparseVector> = texts.iter().map(|t| vectorizer.transform(t.as_ref())).collect();
    let (model, report) = lr_train(&x, labels, hp).map_err(|e| e.to_string())?;
    let clf = TextClassifier::new(vectorizer, model).map_err(|e| e.to_string())?;
    Ok((clf, report))
}
