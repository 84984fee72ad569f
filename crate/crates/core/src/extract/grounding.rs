use serde::{Deserialize, Serialize};

use crate::model::{BBox, OcrToken};
use crate::text::{normalize_for_match, similarity_from_distance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundingConfig {
    pub max_span: usize,
    pub threshold: f64,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        Self {
            max_span: 12,
            threshold: 0.75,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Text,
    /// Also drops `.`, `,`, whitespace and currency marks, so digit
    /// grouping does not count as a difference.
    Amount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    /// Position of the first token in the slice searched.
    pub start: usize,
    pub len: usize,
    /// Reading-order values of the first and last token.
    pub token_span: [u32; 2],
    pub bbox: BBox,
    pub confidence: f64,
    pub match_score: f64,
    pub page_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grounding {
    pub best: Evidence,
    /// Other spans with the same score and length, later on the page.
    pub alternates: Vec<Evidence>,
}

fn is_currency_mark(c: char) -> bool {
    matches!(c, '$' | '€' | '£' | '¥' | '₫' | '₹' | '₩' | '฿' | '₱' | '¢') || c == 'đ'
}

/// Comparison form of `s` under `mode`.
pub fn match_key(s: &str, mode: MatchMode) -> String {
    let text = normalize_for_match(s);
    match mode {
        MatchMode::Text => text,
        MatchMode::Amount => text
            .chars()
            .filter(|c| !matches!(c, '.' | ',') && !c.is_whitespace() && !is_currency_mark(*c))
            .collect(),
    }
}

fn evidence(tokens: &[OcrToken], start: usize, len: usize, score: f64) -> Evidence {
    let span = &tokens[start..start + len];
    let bbox = span[1..].iter().fold(span[0].bbox, |acc, t| acc.union(&t.bbox));
    Evidence {
        start,
        len,
        token_span: [span[0].order, span[len - 1].order],
        bbox,
        confidence: span.iter().map(|t| t.confidence).fold(f64::INFINITY, f64::min),
        match_score: score,
        page_index: span[0].page_index,
    }
}

/// Best span of 1..=`max_span` consecutive tokens whose joined text is
/// closest to `value` by normalized edit distance, if its similarity reaches
/// `threshold`. Ties go to the shorter span, then the earlier one.
pub fn ground_value(value: &str, tokens: &[OcrToken], max_span: usize, threshold: f64) -> Option<Evidence> {
    ground_value_with(value, tokens, GroundingConfig { max_span, threshold }, MatchMode::Text).map(|g| g.best)
}

pub fn ground_value_with(value: &str, tokens: &[OcrToken], cfg: GroundingConfig, mode: MatchMode) -> Option<Grounding> {
    let query: Vec<char> = match_key(value, mode).chars().collect();
    let m = query.len();
    if m == 0 || tokens.is_empty() || cfg.max_span == 0 {
        return None;
    }
    let keys: Vec<Vec<char>> = tokens.iter().map(|t| match_key(&t.text, mode).chars().collect()).collect();
    let sep = match mode {
        MatchMode::Text => Some(' '),
        MatchMode::Amount => None,
    };

    // (score, len, start) of the best span so far and its equal-rank peers
    let mut best: Option<(f64, usize, usize)> = None;
    let mut peers: Vec<usize> = Vec::new();
    let mut col = vec![0usize; m + 1];
    let mut next = vec![0usize; m + 1];

    for start in 0..tokens.len() {
        // column of distances between every prefix of the query and the span text
        for (j, c) in col.iter_mut().enumerate() {
            *c = j;
        }
        let mut span_chars = 0usize;
        let max_len = cfg.max_span.min(tokens.len() - start);
        for len in 1..=max_len {
            let piece = &keys[start + len - 1];
            if !piece.is_empty() {
                let lead = (span_chars > 0).then_some(sep).flatten();
                for ch in lead.into_iter().chain(piece.iter().copied()) {
                    next[0] = col[0] + 1;
                    for j in 1..=m {
                        let sub = col[j - 1] + usize::from(query[j - 1] != ch);
                        next[j] = sub.min(col[j] + 1).min(next[j - 1] + 1);
                    }
                    std::mem::swap(&mut col, &mut next);
                    span_chars += 1;
                }
            }
            let score = similarity_from_distance(col[m], m, span_chars);
            if score >= cfg.threshold {
                match best {
                    Some((s, l, _)) if score < s || (score == s && len > l) => {}
                    Some((s, l, _)) if score == s && len == l => peers.push(start),
                    _ => {
                        best = Some((score, len, start));
                        peers.clear();
                    }
                }
            }
            // longer spans only add characters: similarity <= m / span_chars
            if span_chars > m {
                let bound = m as f64 / span_chars as f64;
                if bound < cfg.threshold || best.is_some_and(|(s, _, _)| bound < s) {
                    break;
                }
            }
        }
    }

    let (score, len, start) = best?;
    Some(Grounding {
        best: evidence(tokens, start, len, score),
        alternates: peers.into_iter().map(|s| evidence(tokens, s, len, score)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[(&str, f64)]) -> Vec<OcrToken> {
        words
            .iter()
            .enumerate()
            .map(|(i, (w, c))| OcrToken {
                text: w.to_string(),
                bbox: BBox::new(10.0 * i as f64, 5.0 + i as f64, 10.0 * i as f64 + 8.0, 20.0 + i as f64),
                confidence: *c,
                order: i as u32,
                page_index: 0,
            })
            .collect()
    }

    #[test]
    fn exact_single_token() {
        let t = toks(&[("Claim", 0.99), ("No:", 0.97), ("C2024-0001", 0.91), ("Date", 0.9)]);
        let e = ground_value("C2024-0001", &t, 12, 0.75).unwrap();
        assert_eq!((e.start, e.len, e.match_score, e.confidence), (2, 1, 1.0, 0.91));
        assert_eq!(e.token_span, [2, 2]);
        assert_eq!(e.bbox, t[2].bbox);
    }

    #[test]
    fn split_hospital_name() {
        let t = toks(&[("Provider:", 0.99), ("Ha", 0.9), ("Noi", 0.6), ("General", 0.95), ("Hospital", 0.97)]);
        let e = ground_value("Hanoi General Hospital", &t, 12, 0.75).unwrap();
        assert_eq!((e.start, e.len), (1, 4));
        assert!((e.match_score - (1.0 - 1.0 / 23.0)).abs() < 1e-12);
        assert_eq!(e.confidence, 0.6);
        assert_eq!(e.bbox, BBox::new(10.0, 6.0, 48.0, 24.0));
    }

    #[test]
    fn miss_below_threshold() {
        let t = toks(&[("Paracetamol", 0.9), ("500mg", 0.9), ("twice", 0.9), ("daily", 0.9)]);
        assert_eq!(ground_value("NOT ON PAGE", &t, 12, 0.75), None);
        assert_eq!(ground_value("", &t, 12, 0.75), None);
        assert_eq!(ground_value("x", &[], 12, 0.75), None);
    }

    #[test]
    fn amount_mode_ignores_grouping_and_currency() {
        let t = toks(&[("Total:", 0.99), ("1.650.000", 0.88), ("₫", 0.7)]);
        let g = ground_value_with("1650000", &t, GroundingConfig::default(), MatchMode::Amount).unwrap();
        assert_eq!((g.best.start, g.best.len, g.best.match_score), (1, 1, 1.0));
        // text mode counts the two dots as edits: 1 - 2/9
        let plain = ground_value("1650000", &t, 12, 0.75).unwrap();
        assert!((plain.match_score - 7.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn duplicates_keep_earliest_and_record_alternates() {
        let t = toks(&[("Visit", 0.9), ("05/10/2024", 0.9), ("Paid", 0.9), ("05/10/2024", 0.8)]);
        let g = ground_value_with("05/10/2024", &t, GroundingConfig::default(), MatchMode::Text).unwrap();
        assert_eq!(g.best.start, 1);
        assert_eq!(g.alternates.len(), 1);
        assert_eq!(g.alternates[0].start, 3);
    }
}
