//! On-disk claim store: `<root>/<claim_id>/` holds `result.json`, an
//! append-only `corrections.log` (JSON lines) and `pages/<n>.png`.
//! Failed jobs land in `<root>/failed/<claim_id>.json`.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::result::{ClaimExtractionResult, ClaimSummary, Correction};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("claim {0} already exists")]
    Conflict(String),
    #[error("stored record {path} is corrupt: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("store io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A job that failed before any result could be produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedJob {
    pub claim_id: String,
    pub filenames: Vec<String>,
    pub error_code: String,
    pub message: String,
    pub failed_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimListing {
    pub total: usize,
    pub limit: usize,
    pub offset: usize,
    pub claims: Vec<ClaimSummary>,
}

/// Persistence seam used by the pipeline and the HTTP layer.
pub trait ClaimStore: Send + Sync {
    /// Next unused id of the form `C{year}-{n:04}`.
    fn next_claim_id(&self, year: i32) -> Result<String, StoreError>;
    /// Persists a new claim atomically; `pages[i]` is the PNG of page `i`.
    fn create(&self, result: &ClaimExtractionResult, pages: &[Vec<u8>]) -> Result<(), StoreError>;
    fn load(&self, claim_id: &str) -> Result<ClaimExtractionResult, StoreError>;
    /// Claims in id order.
    fn list(&self, limit: usize, offset: usize) -> Result<ClaimListing, StoreError>;
    fn page_image(&self, claim_id: &str, page_index: usize) -> Result<Vec<u8>, StoreError>;
    /// Runs `apply` on the stored result under the claim's lock, appends the
    /// correction it returns to the log and saves the result.
    fn append_correction(
        &self,
        claim_id: &str,
        apply: &mut dyn FnMut(&mut ClaimExtractionResult) -> Result<Correction, StoreError>,
    ) -> Result<ClaimExtractionResult, StoreError>;
    fn corrections_log(&self, claim_id: &str) -> Result<Vec<Correction>, StoreError>;
    fn record_failure(&self, job: &FailedJob) -> Result<(), StoreError>;
    fn failure(&self, claim_id: &str) -> Result<Option<FailedJob>, StoreError>;
}

fn id_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^C(\d{4})-(\d{4,9})$").expect("valid id pattern"))
}

/// `(year, counter)` of a well-formed claim id.
pub fn parse_claim_id(id: &str) -> Option<(i32, u32)> {
    let caps = id_pattern().captures(id)?;
    Some((caps[1].parse().ok()?, caps[2].parse().ok()?))
}

pub fn format_claim_id(year: i32, n: u32) -> String {
    format!("C{year}-{n:04}")
}

#[derive(Debug)]
pub struct FsStore {
    root: PathBuf,
    counters: Mutex<HashMap<i32, u32>>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl FsStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("failed"))?;
        fs::create_dir_all(root.join(".staging"))?;
        let mut counters: HashMap<i32, u32> = HashMap::new();
        let mut note = |name: &str| {
            if let Some((y, n)) = parse_claim_id(name) {
                let c = counters.entry(y).or_default();
                *c = (*c).max(n);
            }
        };
        for entry in fs::read_dir(&root)? {
            note(&entry?.file_name().to_string_lossy());
        }
        for entry in fs::read_dir(root.join("failed"))? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            note(name.trim_end_matches(".json"));
        }
        Ok(Self {
            root,
            counters: Mutex::new(counters),
            locks: Mutex::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn claim_dir(&self, claim_id: &str) -> Result<PathBuf, StoreError> {
        if parse_claim_id(claim_id).is_none() {
            return Err(StoreError::NotFound(format!("claim {claim_id}")));
        }
        Ok(self.root.join(claim_id))
    }

    fn existing_dir(&self, claim_id: &str) -> Result<PathBuf, StoreError> {
        let dir = self.claim_dir(claim_id)?;
        if !dir.join("result.json").is_file() {
            return Err(StoreError::NotFound(format!("claim {claim_id}")));
        }
        Ok(dir)
    }

    fn lock_for(&self, claim_id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().expect("lock table poisoned");
        locks.entry(claim_id.to_string()).or_default().clone()
    }

    fn read_result(path: &Path) -> Result<ClaimExtractionResult, StoreError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let tmp = path.with_extension("json.tmp");
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_data()?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    fn listed_ids(&self) -> Result<Vec<String>, StoreError> {
        let mut ids: Vec<(i32, u32, String)> = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some((y, n)) = parse_claim_id(&name) {
                if entry.path().join("result.json").is_file() {
                    ids.push((y, n, name));
                }
            }
        }
        ids.sort();
        Ok(ids.into_iter().map(|(_, _, id)| id).collect())
    }
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec_pretty(v).expect("store records serialize")
}

impl ClaimStore for FsStore {
    fn next_claim_id(&self, year: i32) -> Result<String, StoreError> {
        let mut counters = self.counters.lock().expect("counter table poisoned");
        let c = counters.entry(year).or_default();
        *c += 1;
        Ok(format_claim_id(year, *c))
    }

    fn create(&self, result: &ClaimExtractionResult, pages: &[Vec<u8>]) -> Result<(), StoreError> {
        let target = self.claim_dir(&result.claim_id)?;
        if target.exists() {
            return Err(StoreError::Conflict(result.claim_id.clone()));
        }
        let staging = tempfile::Builder::new()
            .prefix(&result.claim_id)
            .tempdir_in(self.root.join(".staging"))?;
        fs::create_dir(staging.path().join("pages"))?;
        for (i, png) in pages.iter().enumerate() {
            fs::write(staging.path().join("pages").join(format!("{i}.png")), png)?;
        }
        let mut log = String::new();
        for c in &result.corrections {
            log.push_str(&serde_json::to_string(c).expect("corrections serialize"));
            log.push('\n');
        }
        fs::write(staging.path().join("corrections.log"), log)?;
        Self::write_atomic(&staging.path().join("result.json"), &to_json(result))?;
        let staged = staging.keep();
        fs::rename(&staged, &target).map_err(|e| {
            let _ = fs::remove_dir_all(&staged);
            if target.exists() {
                StoreError::Conflict(result.claim_id.clone())
            } else {
                StoreError::Io(e)
            }
        })
    }

    fn load(&self, claim_id: &str) -> Result<ClaimExtractionResult, StoreError> {
        let dir = self.existing_dir(claim_id)?;
        Self::read_result(&dir.join("result.json"))
    }

    fn list(&self, limit: usize, offset: usize) -> Result<ClaimListing, StoreError> {
        let ids = self.listed_ids()?;
        let claims = ids
            .iter()
            .skip(offset)
            .take(limit)
            .map(|id| self.load(id).map(|r| r.summary()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ClaimListing {
            total: ids.len(),
            limit,
            offset,
            claims,
        })
    }

    fn page_image(&self, claim_id: &str, page_index: usize) -> Result<Vec<u8>, StoreError> {
        let dir = self.existing_dir(claim_id)?;
        let path = dir.join("pages").join(format!("{page_index}.png"));
        fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => StoreError::NotFound(format!("page {page_index} of claim {claim_id}")),
            _ => StoreError::Io(e),
        })
    }

    fn append_correction(
        &self,
        claim_id: &str,
        apply: &mut dyn FnMut(&mut ClaimExtractionResult) -> Result<Correction, StoreError>,
    ) -> Result<ClaimExtractionResult, StoreError> {
        let dir = self.existing_dir(claim_id)?;
        let lock = self.lock_for(claim_id);
        let _guard = lock.lock().expect("claim lock poisoned");
        let mut result = Self::read_result(&dir.join("result.json"))?;
        let correction = apply(&mut result)?;
        let mut line = serde_json::to_string(&correction).expect("corrections serialize");
        line.push('\n');
        let mut log = OpenOptions::new().append(true).open(dir.join("corrections.log"))?;
        log.write_all(line.as_bytes())?;
        log.sync_data()?;
        Self::write_atomic(&dir.join("result.json"), &to_json(&result))?;
        Ok(result)
    }

    fn corrections_log(&self, claim_id: &str) -> Result<Vec<Correction>, StoreError> {
        let path = self.existing_dir(claim_id)?.join("corrections.log");
        fs::read_to_string(&path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l).map_err(|e| StoreError::Corrupt {
                    path: path.clone(),
                    message: e.to_string(),
                })
            })
            .collect()
    }

    fn record_failure(&self, job: &FailedJob) -> Result<(), StoreError> {
        if parse_claim_id(&job.claim_id).is_none() {
            return Err(StoreError::NotFound(format!("claim {}", job.claim_id)));
        }
        Self::write_atomic(&self.root.join("failed").join(format!("{}.json", job.claim_id)), &to_json(job))
    }

    fn failure(&self, claim_id: &str) -> Result<Option<FailedJob>, StoreError> {
        if parse_claim_id(claim_id).is_none() {
            return Ok(None);
        }
        let path = self.root.join("failed").join(format!("{claim_id}.json"));
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map(Some).map_err(|e| StoreError::Corrupt {
                path,
                message: e.to_string(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn claim_ids() {
        assert_eq!(format_claim_id(2024, 1), "C2024-0001");
        assert_eq!(parse_claim_id("C2024-0001"), Some((2024, 1)));
        assert_eq!(parse_claim_id("C2024-12345"), Some((2024, 12345)));
        assert_eq!(parse_claim_id("../etc"), None);
        assert_eq!(parse_claim_id("C2024-01"), None);
    }

    #[test]
    fn counter_resumes_after_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let store = FsStore::open(dir.path()).unwrap();
        assert_eq!(store.next_claim_id(2026).unwrap(), "C2026-0001");
        assert_eq!(store.next_claim_id(2026).unwrap(), "C2026-0002");
        assert_eq!(store.next_claim_id(2025).unwrap(), "C2025-0001");
        fs::create_dir(dir.path().join("C2026-0007")).unwrap();
        store
            .record_failure(&FailedJob {
                claim_id: "C2026-0009".into(),
                filenames: vec!["x.pdf".into()],
                error_code: "decode_failed".into(),
                message: "bad".into(),
                failed_at: Utc::now(),
            })
            .unwrap();
        let again = FsStore::open(dir.path()).unwrap();
        assert_eq!(again.next_claim_id(2026).unwrap(), "C2026-0010");
        assert_eq!(again.failure("C2026-0009").unwrap().unwrap().error_code, "decode_failed");
        assert_eq!(again.failure("C2026-0010").unwrap(), None);
        assert!(matches!(again.load("C2026-0007"), Err(StoreError::NotFound(_))));
        assert!(matches!(again.load("../../etc/passwd"), Err(StoreError::NotFound(_))));
    }
}
