use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use base64::Engine;
use claimpipe_core::eval::{generate_corpus, Corpus, GeneratorConfig, GoldDocument};
use claimpipe_core::pipeline::{FsStore, PipelineBuilder, PipelineConfig};
use claimpipe_server::{router, AppState, ServiceOptions, RESULT_SCHEMA};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn corpus() -> &'static (PathBuf, Corpus) {
    static CORPUS: OnceLock<(PathBuf, Corpus)> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("api-corpus");
        let _ = std::fs::remove_dir_all(&dir);
        let cfg = GeneratorConfig { seed: 3, documents: 40, error_rate: 0.0, unmappable_title_rate: 0.0, ..Default::default() };
        generate_corpus(&dir, cfg).unwrap();
        let corpus = Corpus::load(&dir).unwrap();
        (dir, corpus)
    })
}

fn first(doc_type: &str) -> &'static GoldDocument {
    corpus().1.documents.iter().find(|d| d.pages.len() == 1 && d.pages[0].doc_type == doc_type).unwrap()
}

fn bytes_of(doc: &GoldDocument) -> Vec<u8> {
    std::fs::read(corpus().1.document_path(doc)).unwrap()
}

struct Api {
    app: Router,
    _store: tempfile::TempDir,
}

impl Api {
    fn new() -> Self {
        let store = tempfile::tempdir().unwrap();
        let pipeline = PipelineBuilder::fixtures(Arc::new(FsStore::open(store.path()).unwrap()), &[corpus().0.clone()]).build();
        let mut cfg = PipelineConfig::default();
        cfg.vlm.http.api_key = Some("sk-secret".into());
        let state = AppState::new(Arc::new(pipeline), ServiceOptions::default()).with_config(&cfg);
        Self { app: router(Arc::new(state)), _store: store }
    }

    async fn send(&self, req: Request<Body>) -> (StatusCode, Option<String>, Vec<u8>) {
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let ctype = resp.headers().get(header::CONTENT_TYPE).map(|v| v.to_str().unwrap().to_string());
        let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, ctype, body)
    }

    async fn json(&self, req: Request<Body>) -> (StatusCode, Value) {
        let (status, ctype, body) = self.send(req).await;
        assert_eq!(ctype.as_deref(), Some("application/json"), "{}", String::from_utf8_lossy(&body));
        (status, serde_json::from_slice(&body).unwrap())
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.json(Request::get(uri).body(Body::empty()).unwrap()).await
    }

    async fn post_json(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        let req = Request::post(uri).header(header::CONTENT_TYPE, "application/json").body(Body::from(body.to_string())).unwrap();
        self.json(req).await
    }

    async fn submit(&self, docs: &[&GoldDocument], sync: Option<bool>) -> (StatusCode, Value) {
        let documents: Vec<Value> = docs
            .iter()
            .map(|d| json!({"filename": d.filename, "content_base64": base64::engine::general_purpose::STANDARD.encode(bytes_of(d))}))
            .collect();
        let mut body = json!({ "documents": documents });
        if let Some(s) = sync {
            body["sync"] = json!(s);
        }
        self.post_json("/v1/claims", body).await
    }
}

fn validate(v: &Value) {
    let schema: Value = serde_json::from_str(RESULT_SCHEMA).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
    let msgs: Vec<String> = match compiled.validate(v) {
        Ok(()) => Vec::new(),
        Err(errors) => errors.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    };
    assert!(msgs.is_empty(), "schema violations: {msgs:#?}");
}

/// Blanks the values that differ between runs.
fn stable(mut v: Value) -> Value {
    if v.get("claim_id").is_some() {
        v["claim_id"] = json!("<claim_id>");
    }
    if v.get("created_at").is_some() {
        v["created_at"] = json!("<timestamp>");
    }
    if let Some(t) = v.get_mut("timings").and_then(Value::as_object_mut) {
        t.values_mut().for_each(|x| *x = json!(0.0));
    }
    if let Some(cs) = v.get_mut("corrections").and_then(Value::as_array_mut) {
        cs.iter_mut().for_each(|c| c["corrected_at"] = json!("<timestamp>"));
    }
    v
}

/// Compares against `tests/golden/<name>.json`; `UPDATE_GOLDEN=1` rewrites it.
fn golden(name: &str, actual: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.json"));
    let text = serde_json::to_string_pretty(actual).unwrap() + "\n";
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, text).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}; rerun with UPDATE_GOLDEN=1", path.display()));
    let want: Value = serde_json::from_str(&want).unwrap();
    assert_eq!(&want, actual, "golden mismatch for {name}; rerun with UPDATE_GOLDEN=1 after reviewing");
}

#[tokio::test]
async fn single_document_matches_golden_and_schema() {
    let api = Api::new();
    let (status, body) = api.submit(&[first("claim_form")], None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    validate(&body);
    assert_eq!(body["pages"][0]["classification"]["method"], "title_rule");
    assert_eq!(body["pages"][0]["fields"].as_array().unwrap().len(), 4);
    assert_eq!(body["bundle"]["complete"], false);
    golden("claim_form", &stable(body));
}

#[tokio::test]
async fn export_uses_published_field_names() {
    let api = Api::new();
    let (status, body) = api.submit(&[first("claim_form"), first("invoice"), first("medical_report")], None).await;
    assert_eq!(status, StatusCode::OK);
    validate(&body);
    let export = body["export"].as_object().unwrap();
    for key in ["claim_id", "patient_name", "policy_no", "provider", "visit_date", "total_amount", "diagnosis"] {
        assert!(export.get(key).is_some_and(Value::is_string), "export lacks {key}: {export:?}");
    }
    assert!(!export.contains_key("policy_number"));
    golden("bundle_three_documents", &stable(body));
}

#[tokio::test]
async fn completeness_needs_claim_form_and_invoice_or_receipt() {
    let api = Api::new();
    for (docs, complete) in [
        (vec!["claim_form", "invoice"], true),
        (vec!["claim_form", "receipt"], true),
        (vec!["claim_form", "medical_report"], false),
        (vec!["invoice", "receipt"], false),
    ] {
        let gold: Vec<&GoldDocument> = docs.iter().map(|t| first(t)).collect();
        let (status, body) = api.submit(&gold, None).await;
        assert_eq!(status, StatusCode::OK);
        validate(&body);
        assert_eq!(body["bundle"]["complete"], complete, "{docs:?}: {}", body["bundle"]);
        if docs == ["claim_form", "invoice"] {
            golden("bundle_complete", &stable(body));
        }
    }
}

#[tokio::test]
async fn multipart_and_base64_uploads_agree() {
    let api = Api::new();
    let (doc_a, doc_b) = (first("claim_form"), first("receipt"));
    let (_, via_json) = api.submit(&[doc_a, doc_b], Some(true)).await;

    let boundary = "claimpipe-test-boundary";
    let mut body = Vec::new();
    for d in [doc_a, doc_b] {
        body.extend_from_slice(
            format!("--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{}\"\r\nContent-Type: application/octet-stream\r\n\r\n", d.filename)
                .as_bytes(),
        );
        body.extend_from_slice(&bytes_of(d));
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}\r\nContent-Disposition: form-data; name=\"sync\"\r\n\r\ntrue\r\n--{boundary}--\r\n").as_bytes());
    let req = Request::post("/v1/claims")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let (status, via_form) = api.json(req).await;
    assert_eq!(status, StatusCode::OK, "{via_form}");
    assert_ne!(via_json["claim_id"], via_form["claim_id"]);
    assert_eq!(stable(via_json), stable(via_form));
}

#[tokio::test]
async fn async_submission_is_accepted_then_completes() {
    let api = Api::new();
    let (status, body) = api.submit(&[first("invoice")], Some(false)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(body["status"], "processing");
    let id = body["claim_id"].as_str().unwrap().to_string();
    let mut waited = Duration::ZERO;
    let result = loop {
        let (status, body) = api.get(&format!("/v1/claims/{id}")).await;
        match status {
            StatusCode::OK => break body,
            StatusCode::ACCEPTED => assert_eq!(body, json!({"claim_id": id, "status": "processing"})),
            other => panic!("{other}: {body}"),
        }
        assert!(waited < Duration::from_secs(10), "job never finished");
        tokio::time::sleep(Duration::from_millis(20)).await;
        waited += Duration::from_millis(20);
    };
    validate(&result);
    assert_eq!(result["claim_id"], id.as_str());

    let req = Request::post("/v1/claims?sync=false")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(json!({"documents": [{"filename": "x.png", "content_base64": base64::engine::general_purpose::STANDARD.encode(bytes_of(first("receipt")))}], "sync": true}).to_string()))
        .unwrap();
    assert_eq!(api.json(req).await.0, StatusCode::ACCEPTED, "query flag wins over body");
}

#[tokio::test]
async fn corrupt_upload_reports_failed_job() {
    let api = Api::new();
    let mut png = b"\x89PNG\r\n\x1a\n".to_vec();
    png.extend_from_slice(&[0u8; 64]);
    let body = json!({"documents": [{"filename": "broken.png", "content_base64": base64::engine::general_purpose::STANDARD.encode(&png)}]});
    let (status, err) = api.post_json("/v1/claims", body).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"]["code"], "decode_failed");
    let id = err["error"]["claim_id"].as_str().unwrap().to_string();
    let (status, again) = api.get(&format!("/v1/claims/{id}")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(again["error"]["code"], "decode_failed");
    assert_eq!(api.get("/v1/claims").await.1["total"], 0);

    let mut shown = err.clone();
    shown["error"]["claim_id"] = json!("<claim_id>");
    assert!(shown["error"]["message"].as_str().unwrap().contains(&id));
    shown["error"]["message"] = json!("<message>");
    golden("error_decode_failed", &shown);
}

#[tokio::test]
async fn request_errors_share_one_shape() {
    let api = Api::new();
    let text = |s: &str| Request::post("/v1/claims").header(header::CONTENT_TYPE, "application/json").body(Body::from(s.to_string())).unwrap();
    let cases = [
        (api.json(text("{not json")).await, StatusCode::BAD_REQUEST, "bad_request"),
        (api.post_json("/v1/claims", json!({"documents": []})).await, StatusCode::BAD_REQUEST, "bad_request"),
        (
            api.post_json("/v1/claims", json!({"documents": [{"filename": "a.png", "content_base64": "@@@"}]})).await,
            StatusCode::BAD_REQUEST,
            "bad_request",
        ),
        (
            api.post_json("/v1/claims", json!({"documents": [{"filename": "a.png", "content_base64": ""}]})).await,
            StatusCode::UNPROCESSABLE_ENTITY,
            "empty_document",
        ),
        (
            api.post_json("/v1/claims", json!({"documents": [{"filename": "a.txt", "content_base64": "aGVsbG8gd29ybGQ="}]})).await,
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            "unsupported_format",
        ),
        (api.get("/v1/claims/C2024-9999").await, StatusCode::NOT_FOUND, "not_found"),
        (api.get("/v1/claims?limit=0").await, StatusCode::BAD_REQUEST, "bad_request"),
        (api.get("/v1/claims?limit=abc").await, StatusCode::BAD_REQUEST, "bad_request"),
        (api.get("/v1/claims/C2024-0001/pages/x/image").await, StatusCode::BAD_REQUEST, "bad_request"),
        (api.get("/v1/nothing").await, StatusCode::NOT_FOUND, "not_found"),
    ];
    for (i, ((status, body), want_status, want_code)) in cases.into_iter().enumerate() {
        assert_eq!(status, want_status, "case {i}: {body}");
        assert_eq!(body["error"]["code"], want_code, "case {i}: {body}");
        assert!(body["error"]["message"].as_str().is_some_and(|m| !m.is_empty()), "case {i}");
    }
}

#[tokio::test]
async fn corrections_round_trip() {
    let api = Api::new();
    let (_, created) = api.submit(&[first("invoice")], None).await;
    let id = created["claim_id"].as_str().unwrap();
    let raw = created["pages"][0]["fields"][2]["raw_value"].clone();
    assert_eq!(created["pages"][0]["fields"][2]["field"], "total_amount");

    let uri = format!("/v1/claims/{id}/corrections");
    let (status, updated) = api.post_json(&uri, json!({"page_index": 0, "field": "total_amount", "new_value": "1560000"})).await;
    assert_eq!(status, StatusCode::OK, "{updated}");
    validate(&updated);
    let f = &updated["pages"][0]["fields"][2];
    assert_eq!((f["status"].as_str(), f["normalized_value"].as_str()), (Some("corrected"), Some("1560000")));
    assert_eq!(f["raw_value"], raw);
    assert_eq!(updated["export"]["total_amount"], "1560000");

    let (_, twice) = api.post_json(&uri, json!({"page_index": 0, "field": "total_amount", "new_value": "1650000"})).await;
    assert_eq!(twice["corrections"].as_array().unwrap().len(), 2);
    assert_eq!(twice["corrections"][1]["old"], "1560000");
    assert_eq!(api.get(&format!("/v1/claims/{id}")).await.1, twice);

    let (status, err) = api.post_json(&uri, json!({"page_index": 0, "field": "nope", "new_value": "x"})).await;
    assert_eq!((status, err["error"]["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    let (status, _) = api.post_json("/v1/claims/C2024-9999/corrections", json!({"page_index": 0, "field": "total_amount", "new_value": "x"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, err) = api.post_json(&uri, json!({"page_index": 0, "field": "total_amount"})).await;
    assert_eq!((status, err["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));
}

#[tokio::test]
async fn listing_pages_and_images() {
    let api = Api::new();
    let mut ids = Vec::new();
    for t in ["claim_form", "invoice", "receipt"] {
        ids.push(api.submit(&[first(t)], None).await.1["claim_id"].as_str().unwrap().to_string());
    }
    let (status, all) = api.get("/v1/claims").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(all["total"], 3);
    let listed: Vec<&str> = all["claims"].as_array().unwrap().iter().map(|c| c["claim_id"].as_str().unwrap()).collect();
    assert_eq!(listed, ids);
    assert_eq!(all["claims"][1]["page_types"], json!(["invoice"]));

    let (_, page) = api.get("/v1/claims?limit=1&offset=1").await;
    assert_eq!((page["limit"].as_u64(), page["offset"].as_u64()), (Some(1), Some(1)));
    assert_eq!(page["claims"].as_array().unwrap().len(), 1);
    assert_eq!(page["claims"][0]["claim_id"], ids[1].as_str());
    let mut shown = page.clone();
    shown["claims"][0]["claim_id"] = json!("<claim_id>");
    shown["claims"][0]["created_at"] = json!("<timestamp>");
    golden("listing", &shown);

    let (status, ctype, png) = api.send(Request::get(format!("/v1/claims/{}/pages/0/image", ids[0])).body(Body::empty()).unwrap()).await;
    assert_eq!((status, ctype.as_deref()), (StatusCode::OK, Some("image/png")));
    assert!(png.starts_with(b"\x89PNG"));
    let (status, err) = api.get(&format!("/v1/claims/{}/pages/3/image", ids[0])).await;
    assert_eq!((status, err["error"]["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
}

#[tokio::test]
async fn metrics_count_requests() {
    let api = Api::new();
    let (_, before) = api.get("/v1/metrics").await;
    assert_eq!(before["requests"], json!({"total": 0, "succeeded": 0, "failed": 0}));
    for t in ["claim_form", "invoice", "medical_report"] {
        api.submit(&[first(t)], None).await;
    }
    let (_, after) = api.get("/v1/metrics").await;
    assert_eq!(after["requests"], json!({"total": 3, "succeeded": 3, "failed": 0}));
    assert_eq!(after["pages"], 3);
    assert_eq!(after["latency_ms"]["total"]["count"], 3);
    for q in ["p50", "p90", "p99"] {
        assert!(after["latency_ms"]["total"][q].as_f64().unwrap() > 0.0);
    }
}

#[tokio::test]
async fn config_is_redacted() {
    let api = Api::new();
    let (status, cfg) = api.get("/v1/config").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(cfg["vlm"]["api_key"], "***");
    assert_eq!(cfg["service"]["low_confidence_threshold"], 0.8);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_submissions_get_distinct_ids() {
    let api = Arc::new(Api::new());
    let docs = ["claim_form", "invoice", "receipt", "medical_report"];
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let api = api.clone();
            tokio::spawn(async move { api.submit(&[first(docs[i % 4])], None).await })
        })
        .collect();
    let mut ids = std::collections::BTreeSet::new();
    for h in handles {
        let (status, body) = h.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        ids.insert(body["claim_id"].as_str().unwrap().to_string());
    }
    assert_eq!(ids.len(), 8);
    assert_eq!(api.get("/v1/claims?limit=50").await.1["total"], 8);
}

#[tokio::test]
async fn schema_rejects_malformed_results() {
    let api = Api::new();
    let (_, body) = api.submit(&[first("receipt")], None).await;
    let schema: Value = serde_json::from_str(RESULT_SCHEMA).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
    assert!(compiled.is_valid(&body));
    let edits: [(&str, Value); 5] = [
        ("/pages/0/fields/0/status", json!("guessed")),
        ("/pages/0/classification/method", json!("vlm")),
        ("/claim_id", json!("claim-1")),
        ("/pages/0/fields/0/confidence", json!(1.5)),
        ("/bundle", json!(null)),
    ];
    let mut broken = Vec::new();
    for (pointer, value) in edits {
        let mut v = body.clone();
        *v.pointer_mut(pointer).unwrap() = value;
        broken.push(compiled.is_valid(&v));
    }
    let mut extra = body.clone();
    extra["policyNo"] = json!("x");
    broken.push(compiled.is_valid(&extra));
    assert_eq!(broken, [false; 6]);
}
