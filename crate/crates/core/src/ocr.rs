//! OCR backend contract and adapters.
//!
//! Backends return raw `{text, box, score}` records; [`assemble_tokens`]
//! turns those into page-bounded [`OcrToken`]s in reading order.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backend::{post_with_retries, BackendError, InFlightLimit};
use crate::fixture::{FixtureIndex, FixtureKind};
use crate::model::{BBox, OcrToken, PageImage};

pub const OCR_ENDPOINT_ENV: &str = "CLAIMPIPE_OCR_ENDPOINT";
/// Minimum token confidence for text handed to the classifier and prompts.
pub const DEFAULT_TEXT_MIN_CONF: f64 = 0.30;
/// Consecutive tokens whose vertical overlap (relative to the shorter box)
/// falls below this start a new line.
pub const LINE_OVERLAP_RATIO: f64 = 0.30;

pub trait OcrBackend: Send + Sync {
    fn name(&self) -> &str;
    fn recognize_page(&self, page: &PageImage) -> Result<Vec<OcrToken>, BackendError>;
}

/// Wire shape of one recognized span, shared by the HTTP response and the
/// fixture files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawToken {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
}

impl From<&OcrToken> for RawToken {
    fn from(t: &OcrToken) -> Self {
        Self {
            text: t.text.clone(),
            bbox: [t.bbox.x0, t.bbox.y0, t.bbox.x1, t.bbox.y1],
            score: t.confidence,
            order: Some(t.order),
        }
    }
}

/// Validates and orders raw backend output for `page`.
///
/// Boxes are clamped to the page and dropped if degenerate afterwards. If
/// every record carries an `order`, that order is trusted (and must be
/// strictly increasing once sorted); otherwise tokens are sorted by box
/// center, top to bottom then left to right, and numbered from 0.
pub fn assemble_tokens(backend: &str, raw: Vec<RawToken>, page: &PageImage) -> Result<Vec<OcrToken>, BackendError> {
    let (w, h) = (page.width() as f64, page.height() as f64);
    let trusted = !raw.is_empty() && raw.iter().all(|t| t.order.is_some());
    let mut tokens = Vec::with_capacity(raw.len());
    for (i, t) in raw.into_iter().enumerate() {
        if !t.score.is_finite() || !(0.0..=1.0).contains(&t.score) {
            return Err(BackendError::protocol(backend, None, format!("token {i}: score {} outside [0, 1]", t.score)));
        }
        if t.bbox.iter().any(|v| !v.is_finite()) {
            return Err(BackendError::protocol(backend, None, format!("token {i}: non-finite box")));
        }
        let [x0, y0, x1, y1] = t.bbox;
        let bbox = BBox::new(x0.clamp(0.0, w), y0.clamp(0.0, h), x1.clamp(0.0, w), y1.clamp(0.0, h));
        if !bbox.is_valid() || t.text.trim().is_empty() {
            continue;
        }
        tokens.push(OcrToken {
            text: t.text,
            bbox,
            confidence: t.score,
            order: t.order.unwrap_or(0),
            page_index: page.page_index(),
        });
    }
    if trusted {
        tokens.sort_by_key(|t| t.order);
        if tokens.windows(2).any(|p| p[0].order == p[1].order) {
            return Err(BackendError::protocol(backend, None, "duplicate reading-order values"));
        }
    } else {
        tokens.sort_by(|a, b| {
            let (ax, ay) = a.bbox.center();
            let (bx, by) = b.bbox.center();
            ay.total_cmp(&by).then(ax.total_cmp(&bx))
        });
        for (i, t) in tokens.iter_mut().enumerate() {
            t.order = i as u32;
        }
    }
    Ok(tokens)
}

/// Vertical overlap of two boxes relative to the shorter one.
fn vertical_overlap(a: &BBox, b: &BBox) -> f64 {
    let overlap = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let shorter = a.height().min(b.height());
    if shorter <= 0.0 {
        0.0
    } else {
        overlap / shorter
    }
}

/// Joins tokens with confidence at least `min_conf`, separating them by a
/// space or, when the next token sits on a new line, a newline.
pub fn tokens_to_text(tokens: &[OcrToken], min_conf: f64) -> String {
    let mut out = String::new();
    let mut prev: Option<&OcrToken> = None;
    for t in tokens.iter().filter(|t| t.confidence >= min_conf) {
        if let Some(p) = prev {
            out.push(if vertical_overlap(&p.bbox, &t.bbox) < LINE_OVERLAP_RATIO { '\n' } else { ' ' });
        }
        out.push_str(&t.text);
        prev = Some(t);
    }
    out
}

/// Answers from `ocr/<digest>.json` files; a missing file is reported as an
/// unavailable backend.
#[derive(Debug, Clone)]
pub struct FixtureOcr {
    index: Arc<FixtureIndex>,
}

impl FixtureOcr {
    pub fn new(index: Arc<FixtureIndex>) -> Self {
        Self { index }
    }

    pub fn from_roots(roots: impl IntoIterator<Item = impl Into<PathBuf>>) -> Self {
        Self::new(Arc::new(FixtureIndex::new(roots)))
    }
}

impl OcrBackend for FixtureOcr {
    fn name(&self) -> &str {
        "ocr-fixture"
    }

    fn recognize_page(&self, page: &PageImage) -> Result<Vec<OcrToken>, BackendError> {
        let digest = page.source_digest();
        let path = self
            .index
            .find(FixtureKind::Ocr, digest)
            .ok_or_else(|| BackendError::unavailable(self.name(), format!("no OCR fixture for page {digest}")))?;
        let text = std::fs::read_to_string(&path).map_err(|e| BackendError::unavailable(self.name(), e.to_string()))?;
        let raw: Vec<RawToken> =
            serde_json::from_str(&text).map_err(|e| BackendError::protocol(self.name(), None, e.to_string()))?;
        assemble_tokens(self.name(), raw, page)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcrBackendConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub language_hints: Vec<String>,
    pub max_in_flight: usize,
}

impl Default for OcrBackendConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            timeout_ms: 10_000,
            retries: 2,
            language_hints: vec!["en".into(), "vi".into()],
            max_in_flight: 8,
        }
    }
}

impl OcrBackendConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.endpoint.trim().is_empty() {
            return Err("ocr endpoint is empty".into());
        }
        if self.timeout_ms == 0 {
            return Err("ocr timeout must be positive".into());
        }
        Ok(())
    }
}

/// Posts the page as PNG to `{endpoint}/ocr?lang=..` and reads back a JSON
/// array of [`RawToken`].
pub struct HttpOcr {
    config: OcrBackendConfig,
    client: reqwest::blocking::Client,
    limit: InFlightLimit,
}

impl HttpOcr {
    pub fn new(config: OcrBackendConfig) -> Result<Self, String> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| e.to_string())?;
        let limit = InFlightLimit::new(config.max_in_flight);
        Ok(Self { config, client, limit })
    }

    fn url(&self) -> String {
        format!("{}/ocr", self.config.endpoint.trim_end_matches('/'))
    }
}

impl OcrBackend for HttpOcr {
    fn name(&self) -> &str {
        "ocr-http"
    }

    fn recognize_page(&self, page: &PageImage) -> Result<Vec<OcrToken>, BackendError> {
        let png = page
            .encode_png()
            .map_err(|e| BackendError::protocol(self.name(), None, format!("png encode: {e}")))?;
        let url = self.url();
        let lang = self.config.language_hints.join(",");
        let body = {
            let _permit = self.limit.acquire();
            post_with_retries(self.name(), self.config.retries, || {
                self.client
                    .post(&url)
                    .query(&[("lang", lang.as_str())])
                    .header(reqwest::header::CONTENT_TYPE, "image/png")
                    .body(png.clone())
                    .send()
            })?
        };
        let raw: Vec<RawToken> = serde_json::from_slice(&body)
            .map_err(|e| BackendError::protocol(self.name(), None, format!("bad token array: {e}")))?;
        assemble_tokens(self.name(), raw, page)
    }
}
