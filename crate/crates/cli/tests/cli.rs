use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn claimpipe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_claimpipe"))
        .args(args)
        .current_dir(dir)
        .env_remove("CLAIMPIPE_OCR_ENDPOINT")
        .env_remove("CLAIMPIPE_VLM_ENDPOINT")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn generate_train_eval_process() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gen: Value = serde_json::from_str(&stdout(&claimpipe(d, &["corpus", "generate", "--out", "corpus", "--documents", "30", "--seed", "11"]))).unwrap();
    assert_eq!(gen["documents"], 30);

    let trained: Value = serde_json::from_str(&stdout(&claimpipe(d, &["train", "--corpus", "corpus", "--out", "model.json", "--max-iters", "300"]))).unwrap();
    assert_eq!(trained["options"]["hyperparams"]["max_iters"], 300);
    assert!(d.join("model.json").exists());

    std::fs::write(d.join("claimpipe.toml"), "[service]\nstore_dir = \"claims\"\n[classify]\nmodel = \"model.json\"\n").unwrap();
    let table = stdout(&claimpipe(d, &["eval", "--corpus", "corpus", "--config", "claimpipe.toml", "--report", "report.json"]));
    assert!(table.contains("fla"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["documents"], 30);
    assert!(report["definition"].as_str().unwrap().starts_with("acc_type"));
    assert!(!d.join("claims").exists(), "eval uses a scratch store unless --store is given");

    let doc = "corpus/doc-0001/doc-0001.png";
    std::fs::write(d.join("fixtures.toml"), "[service]\nstore_dir = \"claims\"\n[fixtures]\nroots = [\"corpus\"]\n").unwrap();
    let lines = stdout(&claimpipe(d, &["process", "--config", "fixtures.toml", doc, "corpus/doc-0002/doc-0002.png"]));
    let results: Vec<Value> = lines.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(results.len(), 2);
    assert_ne!(results[0]["claim_id"], results[1]["claim_id"]);
    assert!(d.join("claims").join(results[0]["claim_id"].as_str().unwrap()).join("result.json").exists());

    let bundled = stdout(&claimpipe(d, &["process", "--config", "fixtures.toml", "--bundle", doc, "corpus/doc-0002/doc-0002.png"]));
    let r: Value = serde_json::from_str(bundled.trim()).unwrap();
    assert_eq!(r["documents"].as_array().unwrap().len(), 2);

    std::fs::write(d.join("junk.png"), b"not an image").unwrap();
    let out = claimpipe(d, &["process", "--config", "fixtures.toml", "junk.png"]);
    assert_eq!(out.status.code(), Some(1));
    let line: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(line["error"]["code"], "unsupported_format");
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[service]\nlow_confidence_threshold = 3\n").unwrap();
    let out = claimpipe(dir.path(), &["process", "--config", "bad.toml", "x.png"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("low_confidence_threshold"));
}
