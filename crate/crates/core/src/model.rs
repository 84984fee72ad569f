//! Domain objects shared by every pipeline stage: document types and their
//! extraction schemas, page rasters, OCR tokens, per-field extraction records
//! and the claim-bundle completeness rule.
//!
//! Everything here is an immutable value once constructed. The [`Registry`] is
//! loaded once at startup from a TOML file (one per market) and then shared
//! read-only across workers.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use image::DynamicImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default threshold under which a grounded field is flagged for review.
pub const DEFAULT_LOW_CONFIDENCE_THRESHOLD: f64 = 0.80;

const BUILTIN_REGISTRY: &str = include_str!("../data/registry.toml");

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unknown document type `{0}`")]
    UnknownType(String),
    #[error("duplicate document type `{0}`")]
    DuplicateType(String),
    #[error("schema for `{doc_type}` declares field `{field}` twice")]
    DuplicateField { doc_type: String, field: String },
    #[error("document type `{0}` has more than one schema")]
    DuplicateSchema(String),
    #[error("invalid registry: {0}")]
    Invalid(String),
    #[error("registry parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("registry serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("registry io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Market {
    #[serde(rename = "SG")]
    Sg,
    #[serde(rename = "VN")]
    Vn,
    #[serde(rename = "BOTH")]
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentType {
    pub id: String,
    pub display_name: String,
    pub market: Market,
}

/// Routes a field to its post-processing normalizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Text,
    Date,
    Amount,
    Identifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    /// Semantic boundary of the field, shown to the model verbatim.
    pub description: String,
    pub kind: FieldKind,
    #[serde(default = "default_true")]
    pub required: bool,
    /// Name of a reference list used for fuzzy entity substitution
    /// (only meaningful for `text` fields, e.g. `hospitals`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    /// Key used in the flat claim-level export. Also accepted as an alias
    /// when reading model output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub export_key: Option<String>,
    /// Further keys accepted from model output for this field.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    /// Value used in the prompt's example output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<String>,
}

fn default_true() -> bool {
    true
}

impl FieldSpec {
    pub fn new(name: impl Into<String>, description: impl Into<String>, kind: FieldKind) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            kind,
            required: true,
            reference: None,
            export_key: None,
            aliases: Vec::new(),
            example: None,
        }
    }

    /// "total_amount" -> "Total Amount".
    pub fn label(&self) -> String {
        self.name
            .split('_')
            .filter(|w| !w.is_empty())
            .map(|w| {
                let mut cs = w.chars();
                match cs.next() {
                    Some(first) => first.to_uppercase().chain(cs).collect::<String>(),
                    None => String::new(),
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn export_name(&self) -> &str {
        self.export_key.as_deref().unwrap_or(&self.name)
    }

    /// Keys under which a model may report this field, in priority order.
    pub fn accepted_keys(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.name.as_str())
            .chain(self.export_key.as_deref())
            .chain(self.aliases.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub doc_type: String,
    #[serde(default, rename = "field")]
    pub fields: Vec<FieldSpec>,
}

impl Schema {
    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }
}

/// One mandatory-document constraint: at least one of `any_of` must be present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleRequirement {
    pub description: String,
    pub any_of: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleRules {
    #[serde(default, rename = "require")]
    pub requirements: Vec<BundleRequirement>,
}

impl Default for BundleRules {
    fn default() -> Self {
        Self {
            requirements: vec![
                BundleRequirement {
                    description: "claim form".into(),
                    any_of: vec!["claim_form".into()],
                },
                BundleRequirement {
                    description: "invoice or receipt".into(),
                    any_of: vec!["invoice".into(), "receipt".into()],
                },
            ],
        }
    }
}

impl BundleRules {
    /// Order-insensitive; duplicate types are ignored.
    pub fn validate<S: AsRef<str>>(&self, types: &[S]) -> CompletenessReport {
        let present_types: BTreeSet<String> =
            types.iter().map(|t| t.as_ref().to_string()).collect();
        let missing_mandatory: Vec<String> = self
            .requirements
            .iter()
            .filter(|req| !req.any_of.iter().any(|t| present_types.contains(t)))
            .map(|req| req.description.clone())
            .collect();
        CompletenessReport {
            complete: missing_mandatory.is_empty(),
            present_types,
            missing_mandatory,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub present_types: BTreeSet<String>,
    pub missing_mandatory: Vec<String>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegistryFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    market: Option<Market>,
    #[serde(default, rename = "document_type")]
    document_types: Vec<DocumentType>,
    #[serde(default, rename = "schema")]
    schemas: Vec<Schema>,
    #[serde(default)]
    bundle: BundleRules,
}

/// Document-type registry with one schema per type.
///
/// Types without a configured schema get an empty one (classification only).
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    market: Option<Market>,
    types: Vec<DocumentType>,
    schemas: BTreeMap<String, Schema>,
    bundle: BundleRules,
}

impl Registry {
    /// The bundled registry: every type of both markets plus the four
    /// claim-form, invoice, receipt and medical-report schemas.
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN_REGISTRY).expect("bundled registry is valid")
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile = toml::from_str(text)?;
        Self::from_parts(file.market, file.document_types, file.schemas, file.bundle)
    }

    pub fn from_parts(
        market: Option<Market>,
        types: Vec<DocumentType>,
        schemas: Vec<Schema>,
        bundle: BundleRules,
    ) -> Result<Self, RegistryError> {
        if types.is_empty() {
            return Err(RegistryError::Invalid("no document types".into()));
        }
        let mut seen = HashSet::new();
        for t in &types {
            if t.id.trim().is_empty() {
                return Err(RegistryError::Invalid("empty document type id".into()));
            }
            if !seen.insert(t.id.clone()) {
                return Err(RegistryError::DuplicateType(t.id.clone()));
            }
        }
        let mut by_type = BTreeMap::new();
        for schema in schemas {
            if !seen.contains(&schema.doc_type) {
                return Err(RegistryError::UnknownType(schema.doc_type));
            }
            let mut names = HashSet::new();
            for f in &schema.fields {
                if !names.insert(f.name.as_str()) {
                    return Err(RegistryError::DuplicateField {
                        doc_type: schema.doc_type.clone(),
                        field: f.name.clone(),
                    });
                }
            }
            if by_type.contains_key(&schema.doc_type) {
                return Err(RegistryError::DuplicateSchema(schema.doc_type));
            }
            by_type.insert(schema.doc_type.clone(), schema);
        }
        for t in &types {
            by_type.entry(t.id.clone()).or_insert_with(|| Schema {
                doc_type: t.id.clone(),
                fields: Vec::new(),
            });
        }
        for req in &bundle.requirements {
            if let Some(unknown) = req.any_of.iter().find(|t| !seen.contains(*t)) {
                return Err(RegistryError::UnknownType(unknown.clone()));
            }
        }
        Ok(Self {
            market,
            types,
            schemas: by_type,
            bundle,
        })
    }

    pub fn to_toml_string(&self) -> Result<String, RegistryError> {
        let file = RegistryFile {
            market: self.market,
            document_types: self.types.clone(),
            schemas: self
                .types
                .iter()
                .map(|t| self.schemas[&t.id].clone())
                .collect(),
            bundle: self.bundle.clone(),
        };
        Ok(toml::to_string(&file)?)
    }

    pub fn market(&self) -> Option<Market> {
        self.market
    }

    pub fn types(&self) -> &[DocumentType] {
        &self.types
    }

    pub fn document_type(&self, id: &str) -> Result<&DocumentType, RegistryError> {
        self.types
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| RegistryError::UnknownType(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.schemas.contains_key(id)
    }

    pub fn schema_for(&self, doc_type: &str) -> Result<&Schema, RegistryError> {
        self.schemas
            .get(doc_type)
            .ok_or_else(|| RegistryError::UnknownType(doc_type.to_string()))
    }

    pub fn bundle_rules(&self) -> &BundleRules {
        &self.bundle
    }

    pub fn validate_claim_bundle<S: AsRef<str>>(&self, types: &[S]) -> CompletenessReport {
        self.bundle.validate(types)
    }
}

/// Axis-aligned box in page pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn is_valid(&self) -> bool {
        [self.x0, self.y0, self.x1, self.y1]
            .iter()
            .all(|v| v.is_finite())
            && self.x0 < self.x1
            && self.y0 < self.y1
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x0 >= 0.0 && self.y0 >= 0.0 && self.x1 <= width as f64 && self.y1 <= height as f64
    }

    /// Scale every coordinate by the same factor pair.
    pub fn scaled(&self, sx: f64, sy: f64) -> BBox {
        BBox::new(self.x0 * sx, self.y0 * sy, self.x1 * sx, self.y1 * sy)
    }
}

/// One rasterized page of a document.
#[derive(Clone)]
pub struct PageImage {
    page_index: usize,
    image: Arc<DynamicImage>,
    source_digest: String,
}

#[derive(Debug, Error)]
#[error("page raster must be at least 1x1 pixels")]
pub struct EmptyRaster;

impl PageImage {
    pub fn new(
        page_index: usize,
        image: DynamicImage,
        source_digest: impl Into<String>,
    ) -> Result<Self, EmptyRaster> {
        if image.width() == 0 || image.height() == 0 {
            return Err(EmptyRaster);
        }
        Ok(Self {
            page_index,
            image: Arc::new(image),
            source_digest: source_digest.into(),
        })
    }

    /// A blank white page, mostly useful for fixtures keyed only by digest.
    pub fn blank(page_index: usize, width: u32, height: u32, source_digest: &str) -> Self {
        let img = image::GrayImage::from_pixel(width.max(1), height.max(1), image::Luma([255]));
        Self::new(page_index, DynamicImage::ImageLuma8(img), source_digest)
            .expect("non-empty raster")
    }

    pub fn page_index(&self) -> usize {
        self.page_index
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn image(&self) -> &DynamicImage {
        &self.image
    }

    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }

    /// Same lineage (index and digest), different raster.
    pub fn with_image(&self, image: DynamicImage) -> Result<Self, EmptyRaster> {
        Self::new(self.page_index, image, self.source_digest.clone())
    }

    /// Same raster and digest under another page index.
    pub fn with_index(&self, page_index: usize) -> Self {
        Self {
            page_index,
            image: Arc::clone(&self.image),
            source_digest: self.source_digest.clone(),
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, image::ImageError> {
        let mut out = Vec::new();
        let encoder = image::codecs::png::PngEncoder::new_with_quality(
            &mut out,
            image::codecs::png::CompressionType::Fast,
            image::codecs::png::FilterType::Adaptive,
        );
        self.image.write_with_encoder(encoder)?;
        Ok(out)
    }
}

impl fmt::Debug for PageImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PageImage")
            .field("page_index", &self.page_index)
            .field("width", &self.width())
            .field("height", &self.height())
            .field("source_digest", &self.source_digest)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrToken {
    pub text: String,
    pub bbox: BBox,
    pub confidence: f64,
    pub order: u32,
    pub page_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("token {order}: degenerate or non-finite box")]
    BadBox { order: u32 },
    #[error("token {order}: box outside the {width}x{height} page")]
    OutOfBounds { order: u32, width: u32, height: u32 },
    #[error("token {order}: confidence outside [0, 1]")]
    BadConfidence { order: u32 },
    #[error("token {order}: reading order not strictly increasing")]
    Order { order: u32 },
}

/// Check the per-token invariants for one page.
pub fn validate_tokens(tokens: &[OcrToken], width: u32, height: u32) -> Result<(), TokenError> {
    let mut last: Option<u32> = None;
    for t in tokens {
        if !t.bbox.is_valid() {
            return Err(TokenError::BadBox { order: t.order });
        }
        if !t.bbox.within(width, height) {
            return Err(TokenError::OutOfBounds {
                order: t.order,
                width,
                height,
            });
        }
        if !(0.0..=1.0).contains(&t.confidence) {
            return Err(TokenError::BadConfidence { order: t.order });
        }
        if last.is_some_and(|prev| t.order <= prev) {
            return Err(TokenError::Order { order: t.order });
        }
        last = Some(t.order);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldStatus {
    Extracted,
    Missing,
    LowConfidence,
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRef {
    pub bbox: BBox,
    pub page_index: usize,
}

/// How a value was normalized; records both forms for entity substitution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationNote {
    pub rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldExtraction {
    pub field: String,
    pub raw_value: Option<String>,
    pub normalized_value: Option<String>,
    pub evidence: Vec<EvidenceRef>,
    pub confidence: Option<f64>,
    pub status: FieldStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationNote>,
}

impl FieldExtraction {
    pub fn missing(field: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            raw_value: None,
            normalized_value: None,
            evidence: Vec::new(),
            confidence: None,
            status: FieldStatus::Missing,
            normalization: None,
        }
    }

    /// Status implied by the value and its grounding confidence.
    pub fn status_for(raw_value: Option<&str>, confidence: Option<f64>, threshold: f64) -> FieldStatus {
        match (raw_value, confidence) {
            (None, _) => FieldStatus::Missing,
            (Some(_), Some(c)) if c < threshold => FieldStatus::LowConfidence,
            (Some(_), _) => FieldStatus::Extracted,
        }
    }

    /// Checks the record invariants against a low-confidence threshold.
    pub fn check_invariants(&self, threshold: f64) -> Result<(), String> {
        if (self.status == FieldStatus::Missing) != self.raw_value.is_none() {
            return Err(format!("{}: missing status must match a null raw value", self.field));
        }
        if !self.evidence.is_empty() && self.confidence.is_none() {
            return Err(format!("{}: evidence without confidence", self.field));
        }
        if let Some(c) = self.confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(format!("{}: confidence outside [0, 1]", self.field));
            }
        }
        if self.status == FieldStatus::LowConfidence && !self.confidence.is_some_and(|c| c < threshold) {
            return Err(format!("{}: low_confidence requires confidence below threshold", self.field));
        }
        Ok(())
    }
}
