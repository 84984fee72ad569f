use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{levenshtein, normalize_for_index, similarity_from_distance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefIndexConfig {
    pub similarity_threshold: f64,
    pub prefilter_top_k: usize,
}

impl Default for RefIndexConfig {
    fn default() -> Self {
        Self {
            similarity_threshold: 0.60,
            prefilter_top_k: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RefIndexError {
    #[error("reference list has no usable names")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefEntry {
    pub id: String,
    pub name: String,
    /// Lowercased, accent-folded, punctuation-free form used for matching.
    pub key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationResult {
    pub output: String,
    pub matched: bool,
    pub score: f64,
    pub canonical_id: Option<String>,
}

/// Seam for entity substitution; an external search service can stand in
/// for the in-process index.
pub trait EntityNormalizer: Send + Sync {
    fn normalize_entity(&self, value: &str) -> NormalizationResult;
}

/// Character-trigram postings over padded keys, Levenshtein rescoring.
#[derive(Debug, Clone)]
pub struct RefIndex {
    entries: Vec<RefEntry>,
    postings: HashMap<[char; 3], Vec<u32>>,
    config: RefIndexConfig,
    duplicates_dropped: usize,
}

/// Distinct trigrams of `key` padded with two spaces on each side.
pub fn trigrams(key: &str) -> BTreeSet<[char; 3]> {
    let padded: Vec<char> = "  ".chars().chain(key.chars()).chain("  ".chars()).collect();
    padded.windows(3).map(|w| [w[0], w[1], w[2]]).collect()
}

/// Parses newline-delimited names, each optionally `id<TAB>name`. Blank
/// lines and `#` comments are skipped.
pub fn parse_reference_list(text: &str) -> Vec<(Option<String>, String)> {
    text.lines()
        .map(str::trim_end)
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|l| match l.split_once('\t') {
            Some((id, name)) => (Some(id.trim().to_string()), name.trim().to_string()),
            None => (None, l.trim().to_string()),
        })
        .collect()
}

impl RefIndex {
    pub fn build<I, S>(names: I, config: RefIndexConfig) -> Result<Self, RefIndexError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::build_with_ids(names.into_iter().map(|n| (None, n.as_ref().to_string())), config)
    }

    /// Entries without an id are numbered by their position in the input.
    pub fn build_with_ids<I>(names: I, config: RefIndexConfig) -> Result<Self, RefIndexError>
    where
        I: IntoIterator<Item = (Option<String>, String)>,
    {
        let mut entries: Vec<RefEntry> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut duplicates_dropped = 0;
        for (pos, (id, name)) in names.into_iter().enumerate() {
            let key = normalize_for_index(&name);
            if key.is_empty() {
                continue;
            }
            if !seen.insert(key.clone()) {
                duplicates_dropped += 1;
                continue;
            }
            entries.push(RefEntry {
                id: id.unwrap_or_else(|| pos.to_string()),
                name: crate::text::collapse_whitespace(&name),
                key,
            });
        }
        if entries.is_empty() {
            return Err(RefIndexError::Empty);
        }
        let mut postings: HashMap<[char; 3], Vec<u32>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            for g in trigrams(&e.key) {
                postings.entry(g).or_default().push(i as u32);
            }
        }
        Ok(Self {
            entries,
            postings,
            config,
            duplicates_dropped,
        })
    }

    pub fn from_list_text(text: &str, config: RefIndexConfig) -> Result<Self, RefIndexError> {
        Self::build_with_ids(parse_reference_list(text), config)
    }

    pub fn entries(&self) -> &[RefEntry] {
        &self.entries
    }

    pub fn config(&self) -> RefIndexConfig {
        self.config
    }

    pub fn trigram_count(&self) -> usize {
        self.postings.len()
    }

    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    pub fn postings(&self, trigram: [char; 3]) -> &[u32] {
        self.postings.get(&trigram).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Candidates ranked by shared-trigram count (ties: smaller key), at
    /// most `prefilter_top_k`.
    fn candidates(&self, key: &str) -> Vec<(u32, usize)> {
        let mut counts: HashMap<u32, usize> = HashMap::new();
        for g in trigrams(key) {
            for &id in self.postings(g) {
                *counts.entry(id).or_default() += 1;
            }
        }
        let mut ranked: Vec<(u32, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| {
            b.1.cmp(&a.1)
                .then_with(|| self.entries[a.0 as usize].key.cmp(&self.entries[b.0 as usize].key))
        });
        ranked.truncate(self.config.prefilter_top_k.max(1));
        ranked
    }

    pub fn normalize(&self, value: &str) -> NormalizationResult {
        let unmatched = |score: f64| NormalizationResult {
            output: value.to_string(),
            matched: false,
            score,
            canonical_id: None,
        };
        let key = normalize_for_index(value);
        if key.is_empty() {
            return unmatched(0.0);
        }
        let query: Vec<char> = key.chars().collect();
        let mut best: Option<(f64, usize, &RefEntry)> = None;
        for (id, overlap) in self.candidates(&key) {
            let entry = &self.entries[id as usize];
            let target: Vec<char> = entry.key.chars().collect();
            let score = similarity_from_distance(levenshtein(&query, &target), query.len(), target.len());
            let better = match best {
                None => true,
                Some((s, o, e)) => score > s || (score == s && (overlap > o || (overlap == o && entry.key < e.key))),
            };
            if better {
                best = Some((score, overlap, entry));
            }
        }
        match best {
            Some((score, _, entry)) if score >= self.config.similarity_threshold => NormalizationResult {
                output: entry.name.clone(),
                matched: true,
                score,
                canonical_id: Some(entry.id.clone()),
            },
            Some((score, _, _)) => unmatched(score),
            None => unmatched(0.0),
        }
    }
}

impl EntityNormalizer for RefIndex {
    fn normalize_entity(&self, value: &str) -> NormalizationResult {
        self.normalize(value)
    }
}

pub fn build_reference_index<S: AsRef<str>>(names: &[S]) -> Result<RefIndex, RefIndexError> {
    RefIndex::build(names.iter().map(AsRef::as_ref), RefIndexConfig::default())
}

pub fn normalize_entity(value: &str, index: &RefIndex) -> NormalizationResult {
    index.normalize(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry_and_padding() {
        let idx = build_reference_index(&["Hanoi General Hospital"]).unwrap();
        assert_eq!(idx.entries().len(), 1);
        let g = trigrams("hanoi general hospital");
        assert!(g.contains(&[' ', ' ', 'h']));
        assert!(g.contains(&['l', ' ', ' ']));
        assert_eq!(idx.trigram_count(), g.len());
        for t in &g {
            assert_eq!(idx.postings(*t), &[0]);
        }
    }

    #[test]
    fn dedup_and_degenerate_input() {
        let idx = build_reference_index(&["Hanoi General Hospital", "HANOI general  hospital."]).unwrap();
        assert_eq!(idx.entries().len(), 1);
        assert_eq!(idx.duplicates_dropped(), 1);
        assert_eq!(build_reference_index(&["", "  "]).unwrap_err(), RefIndexError::Empty);
    }

    #[test]
    fn examples() {
        let idx = build_reference_index(&["Hanoi General Hospital", "Bach Mai Hospital", "Cho Ray Hospital"]).unwrap();
        let exact = normalize_entity("Hanoi General Hospital", &idx);
        assert!(exact.matched);
        assert_eq!(exact.score, 1.0);
        let spaced = normalize_entity("Ha Noi General Hospital", &idx);
        assert!(spaced.matched);
        assert_eq!(spaced.output, "Hanoi General Hospital");
        assert!((spaced.score - (1.0 - 1.0 / 23.0)).abs() < 1e-12);
        let none = normalize_entity("Zzyx Clinic", &idx);
        assert!(!none.matched);
        assert_eq!(none.output, "Zzyx Clinic");
        assert_eq!(none.canonical_id, None);
    }

    #[test]
    fn accents_fold_for_matching_but_originals_are_kept() {
        let idx = build_reference_index(&["Bệnh viện Bạch Mai"]).unwrap();
        let r = normalize_entity("Benh vien Bach Mai", &idx);
        assert!(r.matched);
        assert_eq!(r.output, "Bệnh viện Bạch Mai");
    }

    #[test]
    fn ties_prefer_overlap_then_smaller_key() {
        // both entries are one substitution away from the query
        let idx = build_reference_index(&["abcx", "abcy"]).unwrap();
        let r = normalize_entity("abcz", &idx);
        assert_eq!(r.output, "abcx");
    }

    #[test]
    fn list_parsing() {
        let parsed = parse_reference_list("# comment\nH1\tHanoi General Hospital\n\nBach Mai Hospital\n");
        assert_eq!(parsed, vec![
            (Some("H1".to_string()), "Hanoi General Hospital".to_string()),
            (None, "Bach Mai Hospital".to_string()),
        ]);
        let idx = RefIndex::from_list_text("H1\tHanoi General Hospital\nBach Mai Hospital", RefIndexConfig::default()).unwrap();
        assert_eq!(idx.normalize("hanoi general hospital").canonical_id.as_deref(), Some("H1"));
        assert_eq!(idx.normalize("bach mai hospital").canonical_id.as_deref(), Some("1"));
    }
}
