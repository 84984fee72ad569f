//! String helpers shared by grounding, entity normalization and title rules.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Character-level Levenshtein distance.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn levenshtein_str(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein(&a, &b)
}

/// `1 - distance / max(len)`; two empty strings are identical.
pub fn similarity_from_distance(distance: usize, len_a: usize, len_b: usize) -> f64 {
    let longest = len_a.max(len_b);
    if longest == 0 {
        return 1.0;
    }
    1.0 - distance as f64 / longest as f64
}

pub fn similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    similarity_from_distance(levenshtein(&a, &b), a.len(), b.len())
}

/// Strip combining marks after canonical decomposition. `đ`/`Đ` have no
/// decomposition and are mapped explicitly.
pub fn fold_diacritics(s: &str) -> String {
    s.nfd()
        .filter(|c| !is_combining_mark(*c))
        .map(|c| match c {
            'đ' => 'd',
            'Đ' => 'D',
            other => other,
        })
        .collect()
}

pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercase, trim non-alphanumerics off each whitespace-separated piece,
/// drop pieces that become empty and rejoin with single spaces.
pub fn normalize_for_match(s: &str) -> String {
    let lower = s.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    for piece in lower.split_whitespace() {
        let trimmed = piece.trim_matches(|c: char| !c.is_alphanumeric());
        if trimmed.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(trimmed);
    }
    out
}

/// Lowercase, fold diacritics, drop punctuation, collapse whitespace.
pub fn normalize_for_index(s: &str) -> String {
    let folded = fold_diacritics(&s.to_lowercase());
    let cleaned: String = folded
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    collapse_whitespace(&cleaned)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein_str("kitten", "sitting"), 3);
        assert_eq!(levenshtein_str("", "abc"), 3);
        assert_eq!(levenshtein_str("abc", ""), 3);
        assert_eq!(levenshtein_str("hanoi general hospital", "ha noi general hospital"), 1);
        assert_eq!(levenshtein_str("việt", "viet"), 1);
    }

    #[test]
    fn similarity_of_inserted_space() {
        let s = similarity("hanoi general hospital", "ha noi general hospital");
        assert!((s - (1.0 - 1.0 / 23.0)).abs() < 1e-12);
        assert_eq!(similarity("", ""), 1.0);
    }

    #[test]
    fn folding() {
        assert_eq!(fold_diacritics("Bệnh viện Đà Nẵng"), "Benh vien Da Nang");
        assert_eq!(normalize_for_index("  St. Luke's   Hospital "), "st lukes hospital");
    }

    #[test]
    fn match_normalization() {
        assert_eq!(normalize_for_match("Claim No:"), "claim no");
        assert_eq!(normalize_for_match(" C2024-0001 "), "c2024-0001");
        assert_eq!(normalize_for_match(": -- :"), "");
        assert_eq!(normalize_for_match("Hanoi   General\tHospital."), "hanoi general hospital");
    }
}
