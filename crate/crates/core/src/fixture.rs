//! Lookup of recorded backend responses by page digest.
//!
//! A fixture root holds `ocr/<digest>.json` and `vlm/<digest>.json`. A
//! directory containing `corpus.json` is a generated corpus and expands to
//! every `<corpus>/<doc>/fixtures` root below it.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FixtureKind {
    Ocr,
    Vlm,
}

impl FixtureKind {
    fn dir(self) -> &'static str {
        match self {
            Self::Ocr => "ocr",
            Self::Vlm => "vlm",
        }
    }
}

#[derive(Debug)]
pub struct FixtureIndex {
    roots: Vec<PathBuf>,
    files: RwLock<HashMap<(FixtureKind, String), PathBuf>>,
}

impl FixtureIndex {
    pub fn new(roots: impl IntoIterator<Item = impl Into<PathBuf>>) -> Self {
        let index = Self {
            roots: roots.into_iter().map(Into::into).collect(),
            files: RwLock::new(HashMap::new()),
        };
        index.rescan();
        index
    }

    pub fn roots(&self) -> &[PathBuf] {
        &self.roots
    }

    /// Path of the fixture for `digest`, rescanning the roots once on a miss
    /// so fixtures written after construction are found.
    pub fn find(&self, kind: FixtureKind, digest: &str) -> Option<PathBuf> {
        let key = (kind, digest.to_string());
        if let Some(p) = self.files.read().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Some(p.clone());
        }
        self.rescan();
        self.files.read().unwrap_or_else(|e| e.into_inner()).get(&key).cloned()
    }

    fn rescan(&self) {
        let mut found = HashMap::new();
        for root in &self.roots {
            for dir in expand_root(root) {
                for kind in [FixtureKind::Ocr, FixtureKind::Vlm] {
                    let Ok(entries) = std::fs::read_dir(dir.join(kind.dir())) else { continue };
                    for entry in entries.flatten() {
                        let path = entry.path();
                        if path.extension().is_some_and(|e| e == "json") {
                            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                                found.entry((kind, stem.to_string())).or_insert(path);
                            }
                        }
                    }
                }
            }
        }
        *self.files.write().unwrap_or_else(|e| e.into_inner()) = found;
    }
}

fn expand_root(root: &Path) -> Vec<PathBuf> {
    if !root.join("corpus.json").is_file() {
        return vec![root.to_path_buf()];
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| e.path().join("fixtures"))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs
}
