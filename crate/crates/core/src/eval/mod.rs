//! Evaluation harness: a seeded synthetic corpus with recorded backend
//! responses, end-to-end scoring of the pipeline against gold labels, and
//! classifier training on the corpus text.

mod generator;
mod perturb;
mod train;
pub mod vocab;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::ClassificationMethod;
use crate::model::{FieldKind, Registry};
use crate::pipeline::{exact_quantile, ClaimExtractionResult, ClaimStore, Pipeline, PipelineError, StageTimings};
use crate::preprocess::RawDocument;
use crate::text::collapse_whitespace;

pub use generator::{
    generate_corpus, CorpusManifest, GenerateError, GeneratedDocument, Generator, GeneratorConfig, GoldDocument, GoldPage,
    InjectedError, Language, CORE_TYPES, GOLD_FILE, MANIFEST_FILE, PAGE_HEIGHT, PAGE_WIDTH,
};
pub use perturb::{perturb, perturbation_harness, PerturbationReport};
pub use train::{classifier_accuracy, labelled_pages, split_by_document, train_on_corpus, ClassifierEval, LabelledPage, TrainOptions, TrainOutcome};

/// Stated at the top of every report.
pub const FLA_DEFINITION: &str = "acc_type = correctly typed pages / pages; fla = micro-average over all gold fields of \
    exact match between normalized_value and gold after canonicalization (dates as calendar dates, amounts as decimals, \
    text and identifiers case- and whitespace-insensitive); a missing or unnormalizable value counts as wrong; \
    latency excludes the first document (warm-up)";

pub const UNCLASSIFIED: &str = "unclassified";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("corpus io error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("training failed: {0}")]
    Train(String),
}

/// A generated corpus read back from disk.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub manifest: CorpusManifest,
    pub documents: Vec<GoldDocument>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, EvalError> {
    let bytes = std::fs::read(path).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_slice(&bytes).map_err(|e| EvalError::Parse { path: path.to_path_buf(), message: e.to_string() })
}

impl Corpus {
    pub fn load(root: &Path) -> Result<Self, EvalError> {
        let manifest: CorpusManifest = read_json(&root.join(MANIFEST_FILE))?;
        let documents = manifest
            .documents
            .iter()
            .map(|id| read_json(&root.join(id).join(GOLD_FILE)))
            .collect::<Result<_, _>>()?;
        Ok(Self { root: root.to_path_buf(), manifest, documents })
    }

    pub fn document_path(&self, doc: &GoldDocument) -> PathBuf {
        self.root.join(&doc.doc_id).join(&doc.filename)
    }

    pub fn fixture_path(&self, doc: &GoldDocument, kind: &str, page_digest: &str) -> PathBuf {
        self.root.join(&doc.doc_id).join("fixtures").join(kind).join(format!("{page_digest}.json"))
    }

    pub fn read_document(&self, doc: &GoldDocument) -> Result<RawDocument, EvalError> {
        let path = self.document_path(doc);
        let bytes = std::fs::read(&path).map_err(|source| EvalError::Io { path: path.clone(), source })?;
        RawDocument::new(doc.filename.clone(), bytes).map_err(|e| EvalError::Parse { path, message: e.to_string() })
    }

    pub fn page_count(&self) -> usize {
        self.documents.iter().map(|d| d.pages.len()).sum()
    }
}

/// `digits[.digits]` with leading integer zeros and trailing fraction
/// zeros removed, or `None` if `s` is not a plain decimal.
pub fn canonical_decimal(s: &str) -> Option<String> {
    let s = s.trim();
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let int = match int.trim_start_matches('0') {
        "" => "0",
        t => t,
    };
    Some(match frac.trim_end_matches('0') {
        "" => int.to_string(),
        f => format!("{int}.{f}"),
    })
}

/// Kind-aware equality between a pipeline value and a gold value.
pub fn values_match(kind: FieldKind, predicted: &str, gold: &str) -> bool {
    match kind {
        FieldKind::Date => {
            let parse = |s: &str| NaiveDate::parse_from_str(s.trim(), "%d/%m/%Y").ok();
            matches!((parse(predicted), parse(gold)), (Some(a), Some(b)) if a == b)
        }
        FieldKind::Amount => matches!((canonical_decimal(predicted), canonical_decimal(gold)), (Some(a), Some(b)) if a == b),
        FieldKind::Text | FieldKind::Identifier => {
            collapse_whitespace(&predicted.to_lowercase()) == collapse_whitespace(&gold.to_lowercase())
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub correct: usize,
    pub total: usize,
}

impl Ratio {
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn add(&mut self, ok: bool) {
        self.total += 1;
        self.correct += usize::from(ok);
    }

    fn merge(&mut self, other: Ratio) {
        self.correct += other.correct;
        self.total += other.total;
    }
}

/// Counts from scoring one or more documents; merging is associative and
/// commutative.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub documents: usize,
    pub pages: Ratio,
    pub fields: Ratio,
    pub per_type: BTreeMap<String, Ratio>,
    /// `doc_type.field` -> accuracy.
    pub per_field: BTreeMap<String, Ratio>,
    pub per_language: BTreeMap<String, LanguageTally>,
    /// gold type -> predicted type -> pages.
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
    pub methods: BTreeMap<String, usize>,
    /// Pages whose printed title no rule maps.
    pub unmappable: UnmappableTally,
    pub injected: InjectedTally,
    pub failed_documents: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageTally {
    pub pages: Ratio,
    pub fields: Ratio,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnmappableTally {
    pub pages: usize,
    pub ml_fallback: usize,
    pub correct: usize,
}

/// Outcome of fields whose recorded answer was corrupted on purpose.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedTally {
    pub fields: usize,
    /// Injected fields that still scored correct (should stay 0).
    pub scored_correct: usize,
}

impl Tally {
    pub fn merge(&mut self, other: Tally) {
        self.documents += other.documents;
        self.pages.merge(other.pages);
        self.fields.merge(other.fields);
        for (k, v) in other.per_type {
            self.per_type.entry(k).or_default().merge(v);
        }
        for (k, v) in other.per_field {
            self.per_field.entry(k).or_default().merge(v);
        }
        for (k, v) in other.per_language {
            let e = self.per_language.entry(k).or_default();
            e.pages.merge(v.pages);
            e.fields.merge(v.fields);
        }
        for (gold, row) in other.confusion {
            let r = self.confusion.entry(gold).or_default();
            for (pred, n) in row {
                *r.entry(pred).or_default() += n;
            }
        }
        for (k, v) in other.methods {
            *self.methods.entry(k).or_default() += v;
        }
        self.unmappable.pages += other.unmappable.pages;
        self.unmappable.ml_fallback += other.unmappable.ml_fallback;
        self.unmappable.correct += other.unmappable.correct;
        self.injected.fields += other.injected.fields;
        self.injected.scored_correct += other.injected.scored_correct;
        self.failed_documents.extend(other.failed_documents);
        self.failed_documents.sort();
    }
}

fn method_name(m: Option<ClassificationMethod>) -> &'static str {
    match m {
        Some(ClassificationMethod::TitleRule) => "title_rule",
        Some(ClassificationMethod::MlFallback) => "ml_fallback",
        None => UNCLASSIFIED,
    }
}

/// Scores one document. `result` is `None` when processing failed, in
/// which case every gold page and field counts as wrong.
pub fn score_document(gold: &GoldDocument, result: Option<&ClaimExtractionResult>, registry: &Registry) -> Tally {
    let mut t = Tally { documents: 1, ..Default::default() };
    if result.is_none() {
        t.failed_documents.push(gold.doc_id.clone());
    }
    let lang = match gold.language {
        Language::En => "en",
        Language::Vi => "vi",
    };
    for (i, gp) in gold.pages.iter().enumerate() {
        let page = result.and_then(|r| r.pages.iter().find(|p| p.document_index == 0 && p.document_page == i));
        let method = page.and_then(|p| p.classification.as_ref()).map(|c| c.method);
        let predicted = page.and_then(|p| p.doc_type()).unwrap_or(UNCLASSIFIED);
        let type_ok = predicted == gp.doc_type;
        t.pages.add(type_ok);
        t.per_type.entry(gp.doc_type.clone()).or_default().add(type_ok);
        t.per_language.entry(lang.into()).or_default().pages.add(type_ok);
        *t.confusion.entry(gp.doc_type.clone()).or_default().entry(predicted.to_string()).or_default() += 1;
        *t.methods.entry(method_name(method).into()).or_default() += 1;
        if !gp.title_mappable {
            t.unmappable.pages += 1;
            t.unmappable.ml_fallback += usize::from(method == Some(ClassificationMethod::MlFallback));
            t.unmappable.correct += usize::from(type_ok);
        }
        let schema = registry.schema_for(&gp.doc_type).ok();
        for (name, gold_value) in &gp.fields {
            let kind = schema.and_then(|s| s.field(name)).map_or(FieldKind::Text, |f| f.kind);
            let ok = page
                .filter(|_| type_ok)
                .and_then(|p| p.field(name))
                .and_then(|f| f.normalized_value.as_deref())
                .is_some_and(|v| values_match(kind, v, gold_value));
            t.fields.add(ok);
            t.per_field.entry(format!("{}.{name}", gp.doc_type)).or_default().add(ok);
            t.per_language.entry(lang.into()).or_default().fields.add(ok);
            if gp.injected.contains_key(name) {
                t.injected.fields += 1;
                t.injected.scored_correct += usize::from(ok);
            }
        }
    }
    t
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: Option<f64>,
    pub p90: Option<f64>,
    pub mean: Option<f64>,
}

impl Percentiles {
    pub fn of(values: &[f64]) -> Self {
        Self {
            p50: exact_quantile(values, 0.5),
            p90: exact_quantile(values, 0.9),
            mean: (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub definition: String,
    pub documents: usize,
    pub pages: usize,
    pub acc_type: f64,
    pub fla: f64,
    pub gold_fields: usize,
    pub correct_fields: usize,
    /// Wall-clock milliseconds per document including persistence.
    pub latency_p50_ms: Option<f64>,
    pub latency_p90_ms: Option<f64>,
    pub latency_samples: usize,
    /// Pipeline-reported stage timings (persistence excluded).
    pub stage_latency_ms: BTreeMap<String, Percentiles>,
    pub per_type_accuracy: BTreeMap<String, f64>,
    pub per_field_accuracy: BTreeMap<String, f64>,
    pub tally: Tally,
}

impl MetricsReport {
    pub fn build(tally: Tally, wall_ms: &[f64], timings: &[StageTimings]) -> Self {
        let ratio = |r: &BTreeMap<String, Ratio>| r.iter().map(|(k, v)| (k.clone(), v.value())).collect();
        let stage_latency_ms = StageTimings::STAGES
            .iter()
            .map(|s| {
                let v: Vec<f64> = timings.iter().filter_map(|t| t.get(s)).collect();
                (s.to_string(), Percentiles::of(&v))
            })
            .collect();
        Self {
            definition: FLA_DEFINITION.to_string(),
            documents: tally.documents,
            pages: tally.pages.total,
            acc_type: tally.pages.value(),
            fla: tally.fields.value(),
            gold_fields: tally.fields.total,
            correct_fields: tally.fields.correct,
            latency_p50_ms: exact_quantile(wall_ms, 0.5),
            latency_p90_ms: exact_quantile(wall_ms, 0.9),
            latency_samples: wall_ms.len(),
            stage_latency_ms,
            per_type_accuracy: ratio(&tally.per_type),
            per_field_accuracy: ratio(&tally.per_field),
            tally,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text summary for terminals.
    pub fn render_table(&self) -> String {
        use std::fmt::Write;
        let ms = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.definition);
        let _ = writeln!(s);
        let _ = writeln!(s, "documents {:>6}   pages {:>6}   failed {}", self.documents, self.pages, self.tally.failed_documents.len());
        let _ = writeln!(s, "acc_type  {:>8.4}  ({}/{})", self.acc_type, self.tally.pages.correct, self.tally.pages.total);
        let _ = writeln!(s, "fla       {:>8.4}  ({}/{})", self.fla, self.correct_fields, self.gold_fields);
        let _ = writeln!(
            s,
            "latency   p50 {} ms   p90 {} ms   ({} docs, first excluded)",
            ms(self.latency_p50_ms),
            ms(self.latency_p90_ms),
            self.latency_samples
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<14} {:>10} {:>10} {:>10}", "stage", "p50 ms", "p90 ms", "mean ms");
        for stage in StageTimings::STAGES {
            if let Some(p) = self.stage_latency_ms.get(stage) {
                let _ = writeln!(s, "{:<14} {:>10} {:>10} {:>10}", stage, ms(p.p50), ms(p.p90), ms(p.mean));
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<14} {:>8} {:>8} {:>8}", "language", "pages", "acc", "fla");
        for (lang, t) in &self.tally.per_language {
            let _ = writeln!(s, "{:<14} {:>8} {:>8.4} {:>8.4}", lang, t.pages.total, t.pages.value(), t.fields.value());
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<28} {:>8} {:>8}", "doc_type", "pages", "acc");
        for (t, r) in &self.tally.per_type {
            let _ = writeln!(s, "{:<28} {:>8} {:>8.4}", t, r.total, r.value());
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<36} {:>8} {:>8}", "field", "gold", "acc");
        for (f, r) in &self.tally.per_field {
            let _ = writeln!(s, "{:<36} {:>8} {:>8.4}", f, r.total, r.value());
        }
        let _ = writeln!(s);
        let methods: Vec<String> = self.tally.methods.iter().map(|(k, v)| format!("{k} {v}")).collect();
        let _ = writeln!(s, "methods: {}", methods.join(", "));
        let u = self.tally.unmappable;
        let _ = writeln!(s, "unmappable titles: {} pages, {} via ml_fallback, {} typed correctly", u.pages, u.ml_fallback, u.correct);
        let confused: Vec<String> = self
            .tally
            .confusion
            .iter()
            .flat_map(|(g, row)| row.iter().filter(move |(p, _)| *p != g).map(move |(p, n)| format!("{g} -> {p}: {n}")))
            .collect();
        if !confused.is_empty() {
            let _ = writeln!(s, "confusions: {}", confused.join("; "));
        }
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocumentRun {
    pub doc_id: String,
    pub claim_id: Option<String>,
    pub wall_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub report: MetricsReport,
    pub runs: Vec<DocumentRun>,
}

/// Runs every corpus document through `pipeline` in `order` (corpus order
/// when `None`) and scores the persisted results.
pub fn evaluate_in_order(corpus: &Corpus, pipeline: &Pipeline, order: Option<&[usize]>) -> Result<EvalRun, EvalError> {
    let default: Vec<usize> = (0..corpus.documents.len()).collect();
    let order = order.unwrap_or(&default);
    let mut tally = Tally::default();
    let mut runs = Vec::with_capacity(order.len());
    let mut timings = Vec::with_capacity(order.len());
    for &i in order {
        let gold = &corpus.documents[i];
        let raw = corpus.read_document(gold)?;
        let started = Instant::now();
        let outcome = pipeline.process_document(raw);
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        match outcome {
            Ok(result) => {
                tally.merge(score_document(gold, Some(&result), pipeline.registry()));
                timings.push(result.timings);
                runs.push(DocumentRun { doc_id: gold.doc_id.clone(), claim_id: Some(result.claim_id), wall_ms, error: None });
            }
            Err(PipelineError::Preprocess { source, .. }) => {
                tally.merge(score_document(gold, None, pipeline.registry()));
                runs.push(DocumentRun { doc_id: gold.doc_id.clone(), claim_id: None, wall_ms, error: Some(source.to_string()) });
            }
            Err(e) => return Err(e.into()),
        }
    }
    let wall: Vec<f64> = runs.iter().skip(1).map(|r| r.wall_ms).collect();
    let stage: Vec<StageTimings> = timings.into_iter().skip(1).collect();
    Ok(EvalRun { report: MetricsReport::build(tally, &wall, &stage), runs })
}

pub fn evaluate(corpus: &Corpus, pipeline: &Pipeline) -> Result<EvalRun, EvalError> {
    evaluate_in_order(corpus, pipeline, None)
}

/// Second pass over the persisted results of `runs`; its field counts must
/// agree with the report produced while processing.
pub fn recount(corpus: &Corpus, store: &dyn ClaimStore, runs: &[DocumentRun], registry: &Registry) -> Result<Tally, EvalError> {
    let mut tally = Tally::default();
    for run in runs {
        let gold = corpus
            .documents
            .iter()
            .find(|d| d.doc_id == run.doc_id)
            .ok_or_else(|| EvalError::Parse { path: corpus.root.clone(), message: format!("unknown document {}", run.doc_id) })?;
        let result = match &run.claim_id {
            Some(id) => Some(store.load(id).map_err(PipelineError::from)?),
            None => None,
        };
        tally.merge(score_document(gold, result.as_ref(), registry));
    }
    Ok(tally)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_canonical_form() {
        assert_eq!(canonical_decimal("1650000").as_deref(), Some("1650000"));
        assert_eq!(canonical_decimal("001234.500").as_deref(), Some("1234.5"));
        assert_eq!(canonical_decimal("0.00").as_deref(), Some("0"));
        assert_eq!(canonical_decimal("1,234.50"), None);
        assert_eq!(canonical_decimal(".5"), None);
    }

    #[test]
    fn kind_aware_matching() {
        assert!(values_match(FieldKind::Date, "05/10/2024", "05/10/2024"));
        assert!(!values_match(FieldKind::Date, "2024-10-05", "05/10/2024"));
        assert!(values_match(FieldKind::Amount, "1234.50", "1234.5"));
        assert!(!values_match(FieldKind::Amount, "1234.51", "1234.5"));
        assert!(values_match(FieldKind::Text, "  Bach  Mai hospital", "Bach Mai Hospital"));
        assert!(values_match(FieldKind::Identifier, "hd0001", "HD0001"));
        assert!(!values_match(FieldKind::Identifier, "HD0002", "HD0001"));
    }

    #[test]
    fn tally_merge_is_order_independent() {
        let mut a = Tally::default();
        a.pages.add(true);
        a.per_type.entry("invoice".into()).or_default().add(true);
        a.failed_documents.push("doc-0002".into());
        let mut b = Tally::default();
        b.fields.add(false);
        b.per_type.entry("invoice".into()).or_default().add(false);
        b.failed_documents.push("doc-0001".into());
        let mut ab = a.clone();
        ab.merge(b.clone());
        let mut ba = b;
        ba.merge(a);
        assert_eq!(ab, ba);
    }
}
