//! Vision-language backend contract, the four-part prompt and lenient JSON
//! parsing of model output.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backend::{post_with_retries, BackendError, InFlightLimit};
use crate::fixture::{FixtureIndex, FixtureKind};
use crate::model::{FieldKind, PageImage};
use crate::preprocess::sha256_hex;

pub const VLM_ENDPOINT_ENV: &str = "CLAIMPIPE_VLM_ENDPOINT";
pub const VLM_MODEL_ENV: &str = "CLAIMPIPE_VLM_MODEL";

pub const ROLE_HEADER: &str = "### ROLE";
pub const FIELDS_HEADER: &str = "### FIELDS";
pub const OUTPUT_HEADER: &str = "### OUTPUT FORMAT";
pub const EXAMPLE_HEADER: &str = "### EXAMPLE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlmResponse {
    pub raw_text: String,
    pub latency_ms: f64,
}

pub trait VlmBackend: Send + Sync {
    fn name(&self) -> &str;
    fn chat(&self, page: &PageImage, prompt: &str) -> Result<VlmResponse, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptField {
    pub name: String,
    pub description: String,
    pub kind: FieldKind,
}

/// The one-slot structured prompt: role, field definitions, output format
/// and an example of the expected output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub role_definition: String,
    pub field_definitions: Vec<PromptField>,
    pub output_format: String,
    pub example_output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("prompt component `{0}` is empty")]
    EmptyComponent(&'static str),
    #[error("prompt field `{0}` is declared twice")]
    DuplicateField(String),
    #[error("prompt component `{0}` contains a section header line")]
    HeaderInjection(&'static str),
}

impl PromptSpec {
    pub fn validate(&self) -> Result<(), PromptError> {
        let parts = [
            ("role_definition", self.role_definition.as_str()),
            ("output_format", self.output_format.as_str()),
            ("example_output", self.example_output.as_str()),
        ];
        for (name, text) in parts {
            if text.trim().is_empty() {
                return Err(PromptError::EmptyComponent(name));
            }
            if text.lines().any(|l| l.starts_with("### ")) {
                return Err(PromptError::HeaderInjection(name));
            }
        }
        if self.field_definitions.is_empty() {
            return Err(PromptError::EmptyComponent("field_definitions"));
        }
        let mut seen = std::collections::HashSet::new();
        for f in &self.field_definitions {
            if f.name.trim().is_empty() || f.description.trim().is_empty() {
                return Err(PromptError::EmptyComponent("field_definitions"));
            }
            if f.description.contains('\n') {
                return Err(PromptError::HeaderInjection("field_definitions"));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(PromptError::DuplicateField(f.name.clone()));
            }
        }
        Ok(())
    }
}

/// Renders the four sections in fixed order under fixed headers.
pub fn build_prompt(spec: &PromptSpec) -> Result<String, PromptError> {
    spec.validate()?;
    let mut out = String::new();
    out.push_str(ROLE_HEADER);
    out.push('\n');
    out.push_str(spec.role_definition.trim());
    out.push_str("\n\n");
    out.push_str(FIELDS_HEADER);
    out.push('\n');
    for f in &spec.field_definitions {
        out.push_str(&format!("- {}: {}\n", f.name, f.description.trim()));
    }
    out.push('\n');
    out.push_str(OUTPUT_HEADER);
    out.push('\n');
    out.push_str(spec.output_format.trim());
    out.push_str("\n\n");
    out.push_str(EXAMPLE_HEADER);
    out.push('\n');
    out.push_str(spec.example_output.trim());
    Ok(out)
}

/// Fixture key of a prompt.
pub fn prompt_key(prompt: &str) -> String {
    sha256_hex(prompt.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no parseable JSON object in model output")]
pub struct UnparseableOutput;

/// Map from key to value (`None` for JSON null) taken from the first
/// parseable top-level JSON object in `raw`.
///
/// Surrounding prose and code fences are skipped and trailing commas are
/// tolerated. Non-string scalars are stringified; nested arrays and objects
/// are kept as compact JSON text.
pub fn parse_model_json(raw: &str) -> Result<BTreeMap<String, Option<String>>, UnparseableOutput> {
    for (start, _) in raw.match_indices('{') {
        let Some(end) = matching_brace(raw, start) else { continue };
        let candidate = strip_trailing_commas(&raw[start..=end]);
        if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&candidate) {
            return Ok(map.into_iter().map(|(k, v)| (k, value_to_string(v))).collect());
        }
    }
    Err(UnparseableOutput)
}

fn value_to_string(v: Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        other => Some(other.to_string()),
    }
}

/// Byte index of the brace closing the one at `start`, skipping braces
/// inside string literals.
fn matching_brace(s: &str, start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in s[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Drops commas that directly precede `}` or `]` (ignoring whitespace),
/// outside string literals.
fn strip_trailing_commas(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut in_string = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            out.push(c);
            continue;
        }
        if c == '"' {
            in_string = true;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// Answers from `vlm/<digest>.json` maps of prompt key to completion.
#[derive(Debug, Clone)]
pub struct FixtureVlm {
    index: Arc<FixtureIndex>,
}

impl FixtureVlm {
    pub fn new(index: Arc<FixtureIndex>) -> Self {
        Self { index }
    }

    pub fn from_roots(roots: impl IntoIterator<Item = impl Into<PathBuf>>) -> Self {
        Self::new(Arc::new(FixtureIndex::new(roots)))
    }
}

impl VlmBackend for FixtureVlm {
    fn name(&self) -> &str {
        "vlm-fixture"
    }

    fn chat(&self, page: &PageImage, prompt: &str) -> Result<VlmResponse, BackendError> {
        let started = Instant::now();
        let digest = page.source_digest();
        let path = self
            .index
            .find(FixtureKind::Vlm, digest)
            .ok_or_else(|| BackendError::unavailable(self.name(), format!("no VLM fixture for page {digest}")))?;
        let text = std::fs::read_to_string(&path).map_err(|e| BackendError::unavailable(self.name(), e.to_string()))?;
        let responses: HashMap<String, String> =
            serde_json::from_str(&text).map_err(|e| BackendError::protocol(self.name(), None, e.to_string()))?;
        let key = prompt_key(prompt);
        let raw_text = responses.get(&key).cloned().ok_or_else(|| {
            BackendError::unavailable(self.name(), format!("no recorded response for prompt {key} on page {digest}"))
        })?;
        Ok(VlmResponse {
            raw_text,
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlmBackendConfig {
    /// Base URL of an OpenAI-compatible server, e.g. `http://gpu:8000/v1`.
    pub endpoint: String,
    pub model: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub max_in_flight: usize,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
}

impl Default for VlmBackendConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: "Qwen/Qwen2.5-VL-7B-Instruct".into(),
            timeout_ms: 30_000,
            retries: 1,
            max_in_flight: 4,
            max_tokens: 512,
            api_key: None,
        }
    }
}

/// OpenAI-style chat completions: one user message holding the page as a
/// PNG data URL followed by the prompt text, temperature 0.
pub struct HttpVlm {
    config: VlmBackendConfig,
    client: reqwest::blocking::Client,
    limit: InFlightLimit,
}

impl HttpVlm {
    pub fn new(config: VlmBackendConfig) -> Result<Self, String> {
        if config.endpoint.trim().is_empty() {
            return Err("vlm endpoint is empty".into());
        }
        if config.timeout_ms == 0 {
            return Err("vlm timeout must be positive".into());
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| e.to_string())?;
        let limit = InFlightLimit::new(config.max_in_flight);
        Ok(Self { config, client, limit })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }

    pub fn request_body(&self, png: &[u8], prompt: &str) -> Value {
        let data_url = format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(png));
        serde_json::json!({
            "model": self.config.model,
            "temperature": 0,
            "max_tokens": self.config.max_tokens,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "image_url", "image_url": {"url": data_url}},
                    {"type": "text", "text": prompt},
                ],
            }],
        })
    }
}

fn completion_text(body: &Value) -> Option<String> {
    let content = body.get("choices")?.get(0)?.get("message")?.get("content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => Some(
            parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join(""),
        ),
        _ => None,
    }
}

impl VlmBackend for HttpVlm {
    fn name(&self) -> &str {
        "vlm-http"
    }

    fn chat(&self, page: &PageImage, prompt: &str) -> Result<VlmResponse, BackendError> {
        let png = page
            .encode_png()
            .map_err(|e| BackendError::protocol(self.name(), None, format!("png encode: {e}")))?;
        let body = self.request_body(&png, prompt);
        let url = self.url();
        let started = Instant::now();
        let reply = {
            let _permit = self.limit.acquire();
            post_with_retries(self.name(), self.config.retries, || {
                let mut req = self.client.post(&url).json(&body);
                if let Some(key) = &self.config.api_key {
                    req = req.bearer_auth(key);
                }
                req.send()
            })?
        };
        let latency_ms = started.elapsed().as_secs_f64() * 1e3;
        let json: Value = serde_json::from_slice(&reply)
            .map_err(|e| BackendError::protocol(self.name(), None, format!("bad completion body: {e}")))?;
        let raw_text = completion_text(&json)
            .ok_or_else(|| BackendError::protocol(self.name(), None, "completion has no message content"))?;
        Ok(VlmResponse { raw_text, latency_ms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::testserver;
    use proptest::prelude::*;

    fn invoice_spec() -> PromptSpec {
        PromptSpec {
            role_definition: "You are an information extraction assistant. Extract the following fields from this invoice image: Provider, Date, Total Amount. Return the result as JSON.".into(),
            field_definitions: vec![
                PromptField { name: "provider".into(), description: "Provider name".into(), kind: FieldKind::Text },
                PromptField { name: "date".into(), description: "Date of service".into(), kind: FieldKind::Date },
                PromptField { name: "total_amount".into(), description: "Total amount".into(), kind: FieldKind::Amount },
            ],
            output_format: "A single JSON object.".into(),
            example_output: r#"{"provider": "X", "date": "01/01/2024", "total_amount": "100"}"#.into(),
        }
    }

    #[test]
    fn prompt_sections_in_order_and_deterministic() {
        let p = build_prompt(&invoice_spec()).unwrap();
        assert!(p.contains("Extract the following fields from this invoice image"));
        assert!(p.contains("Provider, Date, Total Amount"));
        assert!(p.contains("- total_amount: Total amount\n"));
        let pos: Vec<usize> = [ROLE_HEADER, FIELDS_HEADER, OUTPUT_HEADER, EXAMPLE_HEADER]
            .iter()
            .map(|h| {
                assert_eq!(p.matches(h).count(), 1, "{h}");
                p.find(h).unwrap()
            })
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(build_prompt(&invoice_spec()).unwrap(), p);
    }

    #[test]
    fn prompt_validation() {
        let mut s = invoice_spec();
        s.role_definition = "  ".into();
        assert_eq!(build_prompt(&s), Err(PromptError::EmptyComponent("role_definition")));
        let mut s = invoice_spec();
        s.field_definitions.push(s.field_definitions[0].clone());
        assert_eq!(build_prompt(&s), Err(PromptError::DuplicateField("provider".into())));
        let mut s = invoice_spec();
        s.output_format = "json\n### EXAMPLE\nsneaky".into();
        assert!(matches!(build_prompt(&s), Err(PromptError::HeaderInjection(_))));
    }

    const SAMPLE: &str = "{  \n  \"claim_id\": \"C2024-0001\",  \n  \"patient_name\": \"ABC\",  \n  \"policy_no\": \"VN111\",  \n  \"diagnosis\": \"Acute bronchitis\",  \n  \"provider\": \"Hanoi General Hospital\",  \n  \"visit_date\": \"2024-10-05\",  \n  \"total_amount\": 1650000,  \n}";

    #[test]
    fn parses_the_export_sample() {
        let m = parse_model_json(SAMPLE).unwrap();
        assert_eq!(m["claim_id"].as_deref(), Some("C2024-0001"));
        assert_eq!(m["policy_no"].as_deref(), Some("VN111"));
        assert_eq!(m["total_amount"].as_deref(), Some("1650000"));
        assert_eq!(m["visit_date"].as_deref(), Some("2024-10-05"));
        assert_eq!(m.len(), 7);
    }

    #[test]
    fn fences_prose_and_failures() {
        let m = parse_model_json("```json\n{\"a\":\"b\"}\n```").unwrap();
        assert_eq!(m["a"].as_deref(), Some("b"));
        let m = parse_model_json("Here you go: {\"a\": null, \"b\": true, \"c\": [1, 2,], \"d\": \"}{\"} thanks").unwrap();
        assert_eq!(m["a"], None);
        assert_eq!(m["b"].as_deref(), Some("true"));
        assert_eq!(m["c"].as_deref(), Some("[1,2]"));
        assert_eq!(m["d"].as_deref(), Some("}{"));
        // a broken first object is skipped in favour of a later valid one
        let m = parse_model_json("{oops} then {\"x\": 1.5}").unwrap();
        assert_eq!(m["x"].as_deref(), Some("1.5"));
        assert_eq!(parse_model_json("Sorry, I cannot."), Err(UnparseableOutput));
        assert_eq!(parse_model_json("{\"unterminated\": "), Err(UnparseableOutput));
        assert_eq!(parse_model_json("[1, 2]"), Err(UnparseableOutput));
    }

    #[test]
    fn fixture_chat_resolves_by_digest_and_prompt() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("vlm")).unwrap();
        let title_prompt = "title please";
        let extract_prompt = build_prompt(&invoice_spec()).unwrap();
        let cf: HashMap<String, String> = [(prompt_key(title_prompt), "CLAIM FORM".to_string())].into();
        let inv: HashMap<String, String> = [(prompt_key(&extract_prompt), SAMPLE.to_string())].into();
        std::fs::write(dir.path().join("vlm/fx-cf-sg-01.json"), serde_json::to_string(&cf).unwrap()).unwrap();
        std::fs::write(dir.path().join("vlm/fx-inv-vn-02.json"), serde_json::to_string(&inv).unwrap()).unwrap();
        let vlm = FixtureVlm::from_roots([dir.path()]);

        let cf_page = PageImage::blank(0, 10, 10, "fx-cf-sg-01");
        assert_eq!(vlm.chat(&cf_page, title_prompt).unwrap().raw_text, "CLAIM FORM");
        let inv_page = PageImage::blank(0, 10, 10, "fx-inv-vn-02");
        let a = vlm.chat(&inv_page, &extract_prompt).unwrap();
        let b = vlm.chat(&inv_page, &extract_prompt).unwrap();
        assert_eq!(a.raw_text, SAMPLE);
        assert_eq!(a.raw_text, b.raw_text);
        assert!(vlm.chat(&inv_page, "other prompt").unwrap_err().is_unavailable());
    }

    #[test]
    fn http_chat_sends_openai_shape() {
        let server = testserver::serve(200, r#"{"choices":[{"message":{"role":"assistant","content":"REFERRAL LETTER"}}]}"#);
        let vlm = HttpVlm::new(VlmBackendConfig { endpoint: format!("{}/v1", server.url), ..Default::default() }).unwrap();
        let r = vlm.chat(&PageImage::blank(0, 8, 8, "d"), "what is the title").unwrap();
        assert_eq!(r.raw_text, "REFERRAL LETTER");
        assert!(r.latency_ms >= 0.0);
        let reqs = server.requests.lock().unwrap();
        assert!(reqs[0].0.starts_with("POST /v1/chat/completions"));
        let sent: Value = serde_json::from_slice(&reqs[0].1).unwrap();
        assert_eq!(sent["temperature"], 0);
        let content = &sent["messages"][0]["content"];
        assert!(content[0]["image_url"]["url"].as_str().unwrap().starts_with("data:image/png;base64,"));
        assert_eq!(content[1]["text"], "what is the title");
    }

    #[test]
    fn http_chat_errors() {
        let server = testserver::serve(500, "overloaded");
        let vlm = HttpVlm::new(VlmBackendConfig { endpoint: server.url, ..Default::default() }).unwrap();
        let err = vlm.chat(&PageImage::blank(0, 8, 8, "d"), "p").unwrap_err();
        assert!(matches!(err, BackendError::Protocol { status: Some(500), .. }));

        let vlm = HttpVlm::new(VlmBackendConfig { endpoint: testserver::dead_url(), timeout_ms: 500, ..Default::default() }).unwrap();
        assert!(vlm.chat(&PageImage::blank(0, 8, 8, "d"), "p").unwrap_err().is_unavailable());
    }

    proptest! {
        #[test]
        fn parse_inverts_serialize(map in prop::collection::btree_map("[a-z_]{1,8}", "\\PC{0,12}", 0..8)) {
            let text = serde_json::to_string(&map).unwrap();
            let parsed = parse_model_json(&text).unwrap();
            let expected: BTreeMap<String, Option<String>> = map.into_iter().map(|(k, v)| (k, Some(v))).collect();
            prop_assert_eq!(parsed, expected);
        }
    }
}
