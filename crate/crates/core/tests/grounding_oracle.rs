//! `ground_value` against an exhaustive span search with a textbook
//! Levenshtein table.

use claimpipe_core::extract::{ground_value, ground_value_with, match_key, GroundingConfig, MatchMode};
use claimpipe_core::model::{BBox, OcrToken};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reference_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

/// (start, len, score) of the best span, or None.
fn brute_force(value: &str, tokens: &[OcrToken], cfg: GroundingConfig, mode: MatchMode) -> Option<(usize, usize, f64)> {
    let q = match_key(value, mode);
    let qn = q.chars().count();
    if qn == 0 {
        return None;
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for start in 0..tokens.len() {
        for len in 1..=cfg.max_span.min(tokens.len() - start) {
            let joined = tokens[start..start + len].iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ");
            let s = match_key(&joined, mode);
            let longest = qn.max(s.chars().count());
            let score = 1.0 - reference_levenshtein(&q, &s) as f64 / longest as f64;
            if score < cfg.threshold {
                continue;
            }
            let better = match best {
                None => true,
                Some((bs, bl, bscore)) => {
                    score > bscore || (score == bscore && (len < bl || (len == bl && start < bs)))
                }
            };
            if better {
                best = Some((start, len, score));
            }
        }
    }
    best
}

const WORDS: [&str; 14] = [
    "hanoi", "ha", "noi", "general", "hospital", "C2024-0001", "05/10/2024", "1.650.000", "bệnh", "viện", "No:", "-", "đ", "total",
];

fn random_case(rng: &mut ChaCha8Rng) -> (String, Vec<OcrToken>) {
    let n = rng.gen_range(0..20);
    let alphabet: Vec<char> = "abcdeh nạo.,-0159".chars().collect();
    let tokens: Vec<OcrToken> = (0..n)
        .map(|i| {
            let text = if rng.gen_bool(0.6) {
                WORDS[rng.gen_range(0..WORDS.len())].to_string()
            } else {
                (0..rng.gen_range(1..6)).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
            };
            let x = rng.gen_range(0.0..700.0);
            let y = rng.gen_range(0.0..1000.0);
            OcrToken {
                text,
                bbox: BBox::new(x, y, x + rng.gen_range(1.0..90.0), y + rng.gen_range(1.0..24.0)),
                confidence: rng.gen_range(0.0..=1.0),
                order: i as u32,
                page_index: 0,
            }
        })
        .collect();
    let value = if !tokens.is_empty() && rng.gen_bool(0.7) {
        // a span of the page, possibly mutated
        let s = rng.gen_range(0..tokens.len());
        let l = rng.gen_range(1..=4.min(tokens.len() - s));
        let mut v: Vec<char> = tokens[s..s + l].iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ").chars().collect();
        for _ in 0..rng.gen_range(0..3) {
            let c = alphabet[rng.gen_range(0..alphabet.len())];
            match rng.gen_range(0..3) {
                0 if !v.is_empty() => {
                    let at = rng.gen_range(0..v.len());
                    v.remove(at);
                }
                1 if !v.is_empty() => {
                    let at = rng.gen_range(0..v.len());
                    v[at] = c;
                }
                _ => {
                    let at = rng.gen_range(0..=v.len());
                    v.insert(at, c);
                }
            }
        }
        v.into_iter().collect()
    } else {
        WORDS[rng.gen_range(0..WORDS.len())].to_string()
    };
    (value, tokens)
}

#[test]
fn agrees_with_brute_force_on_seeded_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(20241005);
    let mut hits = 0;
    for case in 0..1000 {
        let (value, tokens) = random_case(&mut rng);
        let mode = if case % 4 == 3 { MatchMode::Amount } else { MatchMode::Text };
        let cfg = GroundingConfig {
            max_span: [12, 3, 1][case % 3],
            threshold: [0.75, 0.5, 0.9][case % 3],
        };
        let fast = ground_value_with(&value, &tokens, cfg, mode).map(|g| (g.best.start, g.best.len, g.best.match_score));
        let slow = brute_force(&value, &tokens, cfg, mode);
        assert_eq!(fast, slow, "case {case}: {value:?} over {:?}", tokens.iter().map(|t| &t.text).collect::<Vec<_>>());
        hits += usize::from(slow.is_some());
    }
    // the generator must exercise both outcomes
    assert!(hits > 300 && hits < 1000, "{hits} grounded");
}

#[test]
fn spec_examples() {
    let tok = |text: &str, i: u32, c: f64| OcrToken {
        text: text.into(),
        bbox: BBox::new(10.0 * i as f64, 0.0, 10.0 * i as f64 + 9.0, 10.0),
        confidence: c,
        order: i,
        page_index: 0,
    };
    let t = [tok("Ha", 0, 0.9), tok("Noi", 1, 0.7), tok("General", 2, 0.95), tok("Hospital", 3, 0.99)];
    let e = ground_value("Hanoi General Hospital", &t, 12, 0.75).unwrap();
    let expected = 1.0 - reference_levenshtein("hanoi general hospital", "ha noi general hospital") as f64 / 23.0;
    assert_eq!((e.start, e.len), (0, 4));
    assert!((e.match_score - expected).abs() < 1e-12);
    assert!((e.match_score - 0.956_521_739_130_434_8).abs() < 1e-12);
    assert_eq!(e.confidence, 0.7);
    assert_eq!(e.bbox, BBox::new(0.0, 0.0, 39.0, 10.0));
}

fn arb_tokens() -> impl Strategy<Value = Vec<OcrToken>> {
    prop::collection::vec(("[a-e0-9.,]{1,6}", 0.0f64..500.0, 0.0f64..500.0, 1.0f64..50.0, 1.0f64..20.0, 0.0f64..=1.0), 1..15)
        .prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (text, x, y, w, h, c))| OcrToken {
                    text,
                    bbox: BBox::new(x, y, x + w, y + h),
                    confidence: c,
                    order: i as u32,
                    page_index: 0,
                })
                .collect()
        })
}

proptest! {
    #[test]
    fn evidence_envelope_and_confidence(tokens in arb_tokens(), pick in 0usize..15, len in 1usize..4) {
        let start = pick % tokens.len();
        let end = (start + len).min(tokens.len());
        let value = tokens[start..end].iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ");
        if let Some(e) = ground_value(&value, &tokens, 12, 0.75) {
            let span = &tokens[e.start..e.start + e.len];
            prop_assert!(e.len >= 1 && e.match_score >= 0.75);
            for t in span {
                prop_assert!(e.bbox.contains(&t.bbox));
                prop_assert!(e.confidence <= t.confidence);
            }
            let x0 = span.iter().map(|t| t.bbox.x0).fold(f64::INFINITY, f64::min);
            let y1 = span.iter().map(|t| t.bbox.y1).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!((e.bbox.x0, e.bbox.y1), (x0, y1));
            prop_assert_eq!(e.token_span, [span[0].order, span[e.len - 1].order]);
        }
    }

    #[test]
    fn verbatim_token_scores_one(tokens in arb_tokens(), pick in 0usize..15) {
        let t = &tokens[pick % tokens.len()];
        prop_assume!(!match_key(&t.text, MatchMode::Text).is_empty());
        let e = ground_value(&t.text, &tokens, 12, 0.75).unwrap();
        prop_assert_eq!(e.match_score, 1.0);
        prop_assert_eq!(e.len, 1);
    }
}
