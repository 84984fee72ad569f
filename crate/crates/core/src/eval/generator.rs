//! Seeded synthetic claim corpus: rendered page images, recorded OCR and
//! VLM responses keyed by page digest, and gold labels.
//!
//! Layout of a corpus directory:
//!
//! ```text
//! corpus.json
//! doc-0001/doc-0001.png        (or .pdf for multi-page documents)
//! doc-0001/gold.json
//! doc-0001/fixtures/ocr/<page digest>.json
//! doc-0001/fixtures/vlm/<page digest>.json
//! ```

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use image::{GrayImage, ImageFormat, Luma};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::vocab::{self, TypeVocab, TYPES};
use crate::classify::title_prompt;
use crate::extract::{extraction_prompt, ExtractConfig};
use crate::model::{FieldKind, FieldSpec, PageImage, Registry};
use crate::ocr::{assemble_tokens, RawToken};
use crate::postprocess::{parse_reference_list, BUILTIN_HOSPITALS};
use crate::preprocess::{page_digest, scaled_dimensions, sha256_hex, write_image_pdf, DEFAULT_MAX_DIM};
use crate::vlm::prompt_key;

pub const PAGE_WIDTH: u32 = 1275;
pub const PAGE_HEIGHT: u32 = 1650;
pub const MANIFEST_FILE: &str = "corpus.json";
pub const GOLD_FILE: &str = "gold.json";
pub const CORE_TYPES: [&str; 4] = ["claim_form", "invoice", "receipt", "medical_report"];
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub documents: usize,
    /// Probability that a document is one of the four core types.
    pub core_type_share: f64,
    pub vietnamese_share: f64,
    pub handwritten_rate: f64,
    /// Per-field probability that the recorded VLM answer is wrong; half of
    /// the injected errors are nulls, half are wrong values of the same kind.
    pub error_rate: f64,
    pub unmappable_title_rate: f64,
    pub multipage_rate: f64,
    /// Probability that the VLM answer uses an export key or alias instead
    /// of the field name.
    pub alias_key_rate: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            documents: 500,
            core_type_share: 0.7,
            vietnamese_share: 0.5,
            handwritten_rate: 0.3,
            error_rate: 0.10,
            unmappable_title_rate: 0.05,
            multipage_rate: 0.15,
            alias_key_rate: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    En,
    Vi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectedError {
    Missing,
    Wrong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldPage {
    pub page_digest: String,
    pub doc_type: String,
    /// Title printed on the page, if any.
    pub title: Option<String>,
    /// Whether the printed title maps through the rule table.
    pub title_mappable: bool,
    pub handwritten: bool,
    pub width: u32,
    pub height: u32,
    /// Canonical value per schema field.
    pub fields: BTreeMap<String, String>,
    /// Fields whose recorded VLM answer was corrupted.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub injected: BTreeMap<String, InjectedError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldDocument {
    pub doc_id: String,
    pub filename: String,
    pub digest: String,
    pub language: Language,
    pub pages: Vec<GoldPage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub config: GeneratorConfig,
    pub documents: Vec<String>,
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("corpus io error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot encode page image: {0}")]
    Encode(String),
    #[error("registry has none of the generator's document types")]
    NoTypes,
    #[error("invalid generator config: {0}")]
    Config(String),
}

/// A generated document before it is written out.
#[derive(Debug, Clone)]
pub struct GeneratedDocument {
    pub gold: GoldDocument,
    pub bytes: Vec<u8>,
    pub ocr: Vec<(String, Vec<RawToken>)>,
    pub vlm: Vec<(String, BTreeMap<String, String>)>,
}

/// Shared inputs for generating documents.
pub struct Generator {
    config: GeneratorConfig,
    registry: Registry,
    extract: ExtractConfig,
    hospitals: Vec<String>,
    page_dims: (u32, u32),
}

impl Generator {
    pub fn new(config: GeneratorConfig, registry: Registry) -> Result<Self, GenerateError> {
        for (name, p) in [
            ("core_type_share", config.core_type_share),
            ("vietnamese_share", config.vietnamese_share),
            ("handwritten_rate", config.handwritten_rate),
            ("error_rate", config.error_rate),
            ("unmappable_title_rate", config.unmappable_title_rate),
            ("multipage_rate", config.multipage_rate),
            ("alias_key_rate", config.alias_key_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GenerateError::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if !TYPES.iter().any(|v| registry.contains(v.doc_type)) {
            return Err(GenerateError::NoTypes);
        }
        Ok(Self {
            config,
            registry,
            extract: ExtractConfig::default(),
            hospitals: parse_reference_list(BUILTIN_HOSPITALS).into_iter().map(|(_, n)| n).collect(),
            page_dims: scaled_dimensions(PAGE_WIDTH, PAGE_HEIGHT, DEFAULT_MAX_DIM),
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    fn rng_for(&self, index: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index as u64)
    }

    pub fn doc_id(index: usize) -> String {
        format!("doc-{:04}", index + 1)
    }

    fn candidates(&self, lang: Language, core: bool) -> Vec<&'static TypeVocab> {
        TYPES
            .iter()
            .filter(|v| self.registry.contains(v.doc_type))
            .filter(|v| CORE_TYPES.contains(&v.doc_type) == core)
            .filter(|v| match lang {
                Language::En => !v.en_titles.is_empty(),
                Language::Vi => !v.vi_titles.is_empty(),
            })
            .collect()
    }

    /// Document `index` of the corpus; depends only on the seed and index.
    pub fn document(&self, index: usize) -> Result<GeneratedDocument, GenerateError> {
        let mut rng = self.rng_for(index);
        let cfg = &self.config;
        let lang = if rng.gen_bool(cfg.vietnamese_share) { Language::Vi } else { Language::En };
        let core = self.candidates(lang, true);
        let other = self.candidates(lang, false);
        let pool = if other.is_empty() || (!core.is_empty() && rng.gen_bool(cfg.core_type_share)) { core } else { other };
        let vocab = *pool.choose(&mut rng).ok_or(GenerateError::NoTypes)?;
        let n_pages = if rng.gen_bool(cfg.multipage_rate) { rng.gen_range(2..=3) } else { 1 };

        let pages: Vec<PageDraft> = (0..n_pages).map(|_| self.page(&mut rng, vocab, lang)).collect();
        let images: Vec<GrayImage> = pages.iter().enumerate().map(|(i, p)| self.render(p, index, i)).collect();
        let doc_id = Self::doc_id(index);
        let (bytes, filename) = if n_pages == 1 {
            let mut out = Cursor::new(Vec::new());
            image::DynamicImage::ImageLuma8(images[0].clone())
                .write_to(&mut out, ImageFormat::Png)
                .map_err(|e| GenerateError::Encode(e.to_string()))?;
            (out.into_inner(), format!("{doc_id}.png"))
        } else {
            let pdf = write_image_pdf(&images).map_err(|e| GenerateError::Encode(e.to_string()))?;
            (pdf, format!("{doc_id}.pdf"))
        };
        let digest = sha256_hex(&bytes);

        let (w, h) = self.page_dims;
        let doc_type = self.registry.document_type(vocab.doc_type).map_err(|_| GenerateError::NoTypes)?;
        let schema = self.registry.schema_for(vocab.doc_type).map_err(|_| GenerateError::NoTypes)?;
        let mut gold_pages = Vec::with_capacity(n_pages);
        let mut ocr = Vec::with_capacity(n_pages);
        let mut vlm = Vec::with_capacity(n_pages);
        for (i, draft) in pages.into_iter().enumerate() {
            let pd = page_digest(&digest, i);
            let raw = draft.raw_tokens();
            let blank = PageImage::blank(i, w, h, &pd);
            let tokens = assemble_tokens("generator", raw.clone(), &blank).expect("generated tokens are valid");
            let mut answers = BTreeMap::new();
            answers.insert(prompt_key(title_prompt()), draft.title_answer.clone());
            if !schema.is_empty() {
                let prompt = extraction_prompt(doc_type, schema, &tokens, &self.extract).expect("registry schemas are valid");
                answers.insert(prompt_key(&prompt), draft.extraction_answer.clone());
            }
            gold_pages.push(GoldPage {
                page_digest: pd.clone(),
                doc_type: vocab.doc_type.to_string(),
                title: draft.title.clone(),
                title_mappable: draft.title_mappable,
                handwritten: draft.handwritten,
                width: w,
                height: h,
                fields: draft.gold,
                injected: draft.injected,
            });
            ocr.push((pd.clone(), raw));
            vlm.push((pd, answers));
        }
        Ok(GeneratedDocument {
            gold: GoldDocument { doc_id, filename, digest, language: lang, pages: gold_pages },
            bytes,
            ocr,
            vlm,
        })
    }

    fn page(&self, rng: &mut ChaCha8Rng, vocab: &TypeVocab, lang: Language) -> PageDraft {
        let cfg = &self.config;
        let vi = lang == Language::Vi;
        let (titles, words, common, unmappable) = if vi {
            (vocab.vi_titles, vocab.vi_words, vocab::COMMON_VI, vocab::UNMAPPABLE_VI)
        } else {
            (vocab.en_titles, vocab.en_words, vocab::COMMON_EN, vocab::UNMAPPABLE_EN)
        };
        let handwritten = rng.gen_bool(cfg.handwritten_rate);
        let value_conf = |rng: &mut ChaCha8Rng| if handwritten { rng.gen_range(0.45..0.85) } else { rng.gen_range(0.90..0.99) };
        let printed_conf = |rng: &mut ChaCha8Rng| rng.gen_range(0.92..0.995);

        let (title, title_mappable) = if rng.gen_bool(cfg.unmappable_title_rate) {
            if rng.gen_bool(0.25) {
                (None, false)
            } else {
                (Some(unmappable.choose(rng).expect("non-empty").to_string()), false)
            }
        } else {
            (Some(titles.choose(rng).expect("language has titles").to_string()), true)
        };

        let mut lines: Vec<Line> = Vec::new();
        if let Some(t) = &title {
            lines.push(Line::printed(t, true, rng, &printed_conf));
        }
        let filler = |rng: &mut ChaCha8Rng, lines: &mut Vec<Line>| {
            let mut text = words.choose(rng).expect("type has words").to_string();
            if rng.gen_bool(0.5) {
                text = format!("{text} {}", common.choose(rng).expect("non-empty"));
            }
            if rng.gen_bool(0.3) {
                text = format!("{text} {}", rng.gen_range(1..999));
            }
            lines.push(Line::printed(&text, false, rng, &printed_conf));
        };
        filler(rng, &mut lines);

        let schema = self.registry.schema_for(vocab.doc_type).ok();
        let mut gold = BTreeMap::new();
        let mut injected = BTreeMap::new();
        let mut answer = serde_json::Map::new();
        for spec in schema.map(|s| s.fields.as_slice()).unwrap_or_default() {
            let value = self.field_value(rng, spec, lang);
            let label = vocab::label(&spec.name, vi).map(str::to_string).unwrap_or_else(|| format!("{}:", spec.label()));
            let mut line = Line::printed(&label, false, rng, &printed_conf);
            let shown = if spec.reference.is_some() && rng.gen_bool(0.15) { ocr_noise(rng, &value.printed) } else { value.printed.clone() };
            for w in shown.split_whitespace() {
                line.words.push((w.to_string(), value_conf(rng)));
            }
            lines.push(line);
            if rng.gen_bool(0.4) {
                filler(rng, &mut lines);
            }

            let u: f64 = rng.gen();
            let reported: Value = if u < cfg.error_rate / 2.0 {
                injected.insert(spec.name.clone(), InjectedError::Missing);
                Value::Null
            } else if u < cfg.error_rate {
                injected.insert(spec.name.clone(), InjectedError::Wrong);
                Value::String(self.wrong_value(rng, spec, lang, &value))
            } else if spec.kind == FieldKind::Amount && lang == Language::Vi && rng.gen_bool(0.2) {
                json!(value.canonical.parse::<u64>().expect("VND amounts are integral"))
            } else {
                Value::String(value.reported.clone())
            };
            let alternatives: Vec<&str> = spec.accepted_keys().skip(1).collect();
            let key = if !alternatives.is_empty() && rng.gen_bool(cfg.alias_key_rate) {
                alternatives.choose(rng).expect("non-empty").to_string()
            } else {
                spec.name.clone()
            };
            answer.insert(key, reported);
            gold.insert(spec.name.clone(), value.canonical);
        }
        if schema.is_none_or(|s| s.is_empty()) {
            let name = if vi { vocab::NAMES_VI } else { vocab::NAMES_EN }.choose(rng).expect("non-empty");
            let label = vocab::label("patient_name", vi).expect("known label");
            lines.push(Line::printed(&format!("{label} {name}"), false, rng, &printed_conf));
        }
        for _ in 0..rng.gen_range(1..=3) {
            filler(rng, &mut lines);
        }

        let extraction_answer = {
            let body = serde_json::to_string_pretty(&Value::Object(answer)).expect("json");
            match rng.gen_range(0..3) {
                0 => body,
                1 => format!("```json\n{body}\n```"),
                _ => format!("Here are the extracted fields:\n{body}"),
            }
        };
        let title_answer = match (&title, rng.gen_range(0..3)) {
            (Some(t), 0) => t.clone(),
            (Some(t), 1) => json!({ "title": t }).to_string(),
            (Some(t), _) => format!("```json\n{}\n```", json!({ "title": t })),
            (None, 0) => "NONE".to_string(),
            (None, _) => json!({ "title": null }).to_string(),
        };
        PageDraft {
            title,
            title_mappable,
            handwritten,
            lines: layout(lines, self.page_dims),
            gold,
            injected,
            title_answer,
            extraction_answer,
        }
    }

    fn field_value(&self, rng: &mut ChaCha8Rng, spec: &FieldSpec, lang: Language) -> FieldValue {
        let vi = lang == Language::Vi;
        let pick = |rng: &mut ChaCha8Rng, list: &[&str]| list.choose(rng).expect("non-empty").to_string();
        match spec.kind {
            FieldKind::Date => {
                let date = random_date(rng);
                let printed = printed_date(rng, date, lang);
                FieldValue::same(date.format("%d/%m/%Y").to_string(), printed)
            }
            FieldKind::Amount => {
                let (canonical, printed) = random_amount(rng, lang);
                let reported = if rng.gen_bool(0.5) { canonical.clone() } else { printed.clone() };
                FieldValue { canonical, printed, reported }
            }
            FieldKind::Text if spec.reference.is_some() => {
                let name = self.hospitals.choose(rng).expect("hospital list is non-empty").clone();
                let reported = if rng.gen_bool(0.2) { name.to_uppercase() } else { name.clone() };
                FieldValue { canonical: name.clone(), printed: name, reported }
            }
            FieldKind::Text => {
                let v = match spec.name.as_str() {
                    "diagnosis" => pick(rng, if vi { vocab::DIAGNOSES_VI } else { vocab::DIAGNOSES_EN }),
                    "doctor_name" => pick(rng, if vi { vocab::DOCTORS_VI } else { vocab::DOCTORS_EN }),
                    _ => pick(rng, if vi { vocab::NAMES_VI } else { vocab::NAMES_EN }),
                };
                FieldValue::same(v.clone(), v)
            }
            FieldKind::Identifier => {
                let v = random_identifier(rng, &spec.name, lang);
                FieldValue::same(v.clone(), v)
            }
        }
    }

    fn wrong_value(&self, rng: &mut ChaCha8Rng, spec: &FieldSpec, lang: Language, right: &FieldValue) -> String {
        loop {
            let other = self.field_value(rng, spec, lang);
            let differs = match spec.kind {
                FieldKind::Date | FieldKind::Amount => other.canonical != right.canonical,
                _ => other.canonical.to_lowercase() != right.canonical.to_lowercase(),
            };
            if differs {
                return other.reported;
            }
        }
    }

    fn render(&self, page: &PageDraft, doc_index: usize, page_index: usize) -> GrayImage {
        let mut img = GrayImage::from_pixel(PAGE_WIDTH, PAGE_HEIGHT, Luma([255]));
        let sx = PAGE_WIDTH as f64 / self.page_dims.0 as f64;
        let sy = PAGE_HEIGHT as f64 / self.page_dims.1 as f64;
        for t in &page.lines {
            let shade = if t.big { 60 } else if t.conf < 0.9 { 120 } else { 170 };
            fill(&mut img, t.bbox[0] * sx, t.bbox[1] * sy, t.bbox[2] * sx, t.bbox[3] * sy, shade);
        }
        // a per-page bit pattern keeps every page's bytes distinct
        let tag = (self.config.seed << 24) ^ ((doc_index as u64) << 4) ^ page_index as u64;
        for bit in 0..64 {
            if tag >> bit & 1 == 1 {
                let x = 40.0 + bit as f64 * 18.0;
                fill(&mut img, x, 1600.0, x + 12.0, 1612.0, 0);
            }
        }
        img
    }

    /// Writes the whole corpus below `dir`, which must be empty or absent.
    pub fn write_corpus(&self, dir: &Path) -> Result<CorpusManifest, GenerateError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| GenerateError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let ids: Vec<String> = (0..self.config.documents)
            .into_par_iter()
            .map(|i| {
                let doc = self.document(i)?;
                let root = dir.join(&doc.gold.doc_id);
                for sub in ["fixtures/ocr", "fixtures/vlm"] {
                    std::fs::create_dir_all(root.join(sub)).map_err(io(&root))?;
                }
                let write = |p: PathBuf, bytes: &[u8]| std::fs::write(&p, bytes).map_err(io(&p));
                write(root.join(&doc.gold.filename), &doc.bytes)?;
                write(root.join(GOLD_FILE), &to_json(&doc.gold))?;
                for (digest, tokens) in &doc.ocr {
                    write(root.join("fixtures/ocr").join(format!("{digest}.json")), &to_json(tokens))?;
                }
                for (digest, answers) in &doc.vlm {
                    write(root.join("fixtures/vlm").join(format!("{digest}.json")), &to_json(answers))?;
                }
                Ok(doc.gold.doc_id)
            })
            .collect::<Result<_, GenerateError>>()?;
        let manifest = CorpusManifest { version: MANIFEST_VERSION, config: self.config.clone(), documents: ids };
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, to_json(&manifest)).map_err(io(&path))?;
        Ok(manifest)
    }
}

fn to_json<T: Serialize + ?Sized>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("corpus records serialize");
    out.push(b'\n');
    out
}

pub fn generate_corpus(dir: &Path, config: GeneratorConfig) -> Result<CorpusManifest, GenerateError> {
    Generator::new(config, Registry::builtin())?.write_corpus(dir)
}

struct FieldValue {
    canonical: String,
    printed: String,
    reported: String,
}

impl FieldValue {
    fn same(canonical: String, printed: String) -> Self {
        Self { canonical, reported: printed.clone(), printed }
    }
}

struct Line {
    words: Vec<(String, f64)>,
    big: bool,
}

impl Line {
    fn printed(text: &str, big: bool, rng: &mut ChaCha8Rng, conf: &dyn Fn(&mut ChaCha8Rng) -> f64) -> Self {
        Self {
            words: text.split_whitespace().map(|w| (w.to_string(), conf(rng))).collect(),
            big,
        }
    }
}

struct PlacedToken {
    text: String,
    bbox: [f64; 4],
    conf: f64,
    big: bool,
}

struct PageDraft {
    title: Option<String>,
    title_mappable: bool,
    handwritten: bool,
    lines: Vec<PlacedToken>,
    gold: BTreeMap<String, String>,
    injected: BTreeMap<String, InjectedError>,
    title_answer: String,
    extraction_answer: String,
}

impl PageDraft {
    fn raw_tokens(&self) -> Vec<RawToken> {
        self.lines
            .iter()
            .enumerate()
            .map(|(i, t)| RawToken {
                text: t.text.clone(),
                bbox: t.bbox,
                score: (t.conf * 1000.0).round() / 1000.0,
                order: Some(i as u32),
            })
            .collect()
    }
}

/// Places words left to right, wrapping at the right margin.
fn layout(lines: Vec<Line>, (w, h): (u32, u32)) -> Vec<PlacedToken> {
    let (margin, pitch) = (40.0, 28.0);
    let mut out = Vec::new();
    let mut y = 36.0;
    for line in lines {
        let (cw, lh) = if line.big { (12.0, 20.0) } else { (7.0, 13.0) };
        let mut x = margin;
        for (text, conf) in line.words {
            let tw = cw * text.chars().count() as f64;
            if x > margin && x + tw > w as f64 - margin {
                x = margin;
                y += pitch;
            }
            let x1 = (x + tw).min(w as f64 - 1.0);
            out.push(PlacedToken { text, bbox: [x, y, x1, (y + lh).min(h as f64 - 1.0)], conf, big: line.big });
            x += tw + cw;
        }
        y += if line.big { pitch * 1.5 } else { pitch };
    }
    out
}

fn fill(img: &mut GrayImage, x0: f64, y0: f64, x1: f64, y1: f64, shade: u8) {
    let (w, h) = img.dimensions();
    let clamp = |v: f64, max: u32| (v.round().max(0.0) as u32).min(max);
    for y in clamp(y0, h)..clamp(y1, h) {
        for x in clamp(x0, w)..clamp(x1, w) {
            img.put_pixel(x, y, Luma([shade]));
        }
    }
}

fn random_date(rng: &mut ChaCha8Rng) -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 1, 1).expect("valid date") + Duration::days(rng.gen_range(0..1095))
}

fn printed_date(rng: &mut ChaCha8Rng, d: NaiveDate, lang: Language) -> String {
    match rng.gen_range(0..20) {
        0..=10 => d.format("%d/%m/%Y").to_string(),
        11..=13 => d.format("%d-%m-%Y").to_string(),
        14..=16 => d.format("%Y-%m-%d").to_string(),
        _ if lang == Language::Vi => format!("ngày {} tháng {} năm {}", d.format("%d"), d.format("%m"), d.format("%Y")),
        _ => format!("{} {:02}:{:02}", d.format("%d/%m/%Y"), rng.gen_range(7..20), rng.gen_range(0..60)),
    }
}

fn group(digits: &str, sep: char) -> String {
    let n = digits.len();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (n - i).is_multiple_of(3) {
            out.push(sep);
        }
        out.push(c);
    }
    out
}

/// `(canonical, printed)`: whole dong for VND, dollars and cents for SGD.
fn random_amount(rng: &mut ChaCha8Rng, lang: Language) -> (String, String) {
    match lang {
        Language::Vi => {
            let v: u64 = rng.gen_range(50..=50_000) * 1000;
            let grouped = group(&v.to_string(), '.');
            let printed = match rng.gen_range(0..3) {
                0 => grouped,
                1 => format!("{grouped} VND"),
                _ => format!("{grouped}đ"),
            };
            (v.to_string(), printed)
        }
        Language::En => {
            let cents: u64 = rng.gen_range(1_000..=2_000_000);
            let (d, c) = (cents / 100, cents % 100);
            let canonical = format!("{d}.{c:02}");
            let grouped = format!("{}.{c:02}", group(&d.to_string(), ','));
            let printed = match rng.gen_range(0..3) {
                0 => grouped,
                1 => format!("S${grouped}"),
                _ => format!("SGD {grouped}"),
            };
            (canonical, printed)
        }
    }
}

fn random_identifier(rng: &mut ChaCha8Rng, field: &str, lang: Language) -> String {
    let vi = lang == Language::Vi;
    match field {
        "claim_id" => format!("CL-{}-{:06}", rng.gen_range(2023..=2025), rng.gen_range(0..1_000_000)),
        "policy_number" if vi => format!("HD{:08}", rng.gen_range(0..100_000_000)),
        "policy_number" => format!("P{:07}", rng.gen_range(0..10_000_000)),
        "receipt_number" if vi => format!("BL{:06}", rng.gen_range(0..1_000_000)),
        "receipt_number" => format!("OR-{:06}", rng.gen_range(0..1_000_000)),
        _ => format!("ID{:06}", rng.gen_range(0..1_000_000)),
    }
}

/// One plausible misread in a word of five or more letters.
fn ocr_noise(rng: &mut ChaCha8Rng, text: &str) -> String {
    let mut words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    let long: Vec<usize> = (0..words.len()).filter(|i| words[*i].chars().count() >= 5).collect();
    let Some(&wi) = long.choose(rng) else { return text.to_string() };
    let swapped: String = words[wi]
        .chars()
        .map(|c| match c {
            'o' => '0',
            'l' => '1',
            'e' => 'c',
            'a' => 'o',
            c => c,
        })
        .collect();
    // change only the first substitutable character
    let orig: Vec<char> = words[wi].chars().collect();
    let new: Vec<char> = swapped.chars().collect();
    if let Some(pos) = (0..orig.len()).find(|i| orig[*i] != new[*i]) {
        let mut chars = orig.clone();
        chars[pos] = new[pos];
        words[wi] = chars.into_iter().collect();
    }
    words.join(" ")
}
