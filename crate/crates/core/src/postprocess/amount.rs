use std::sync::OnceLock;

use regex::Regex;

fn numeric_run() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"\d(?:[\d.,'\u{00A0}\u{202F} ]*\d)?").unwrap())
}

/// `^[1-9]\d{0,2}(sep\d{3})+$`
fn is_grouped(s: &str, sep: char) -> bool {
    let mut groups = s.split(sep);
    let head = groups.next().unwrap_or_default();
    let mut n = 0;
    for g in groups {
        if g.len() != 3 || !g.bytes().all(|b| b.is_ascii_digit()) {
            return false;
        }
        n += 1;
    }
    n > 0 && (1..=3).contains(&head.len()) && head.bytes().all(|b| b.is_ascii_digit()) && !head.starts_with('0')
}

fn strip_leading_zeros(digits: &str) -> &str {
    let t = digits.trim_start_matches('0');
    if t.is_empty() {
        "0"
    } else {
        t
    }
}

/// Plain decimal string (`digits` or `digits.digits`), or `None` when no
/// unambiguous number is present.
///
/// The longest digit run is used (currency symbols, codes and spaces are
/// ignored). With both `.` and `,` present the last one is the decimal
/// separator and the other must form valid thousands groups. With one kind
/// present it is grouping iff the run reads as `1-3 digits (sep 3 digits)+`;
/// otherwise a single occurrence is a decimal point and repeated ones are
/// rejected.
pub fn normalize_amount(raw: &str) -> Option<String> {
    let run = numeric_run()
        .find_iter(raw)
        .max_by_key(|m| (m.as_str().bytes().filter(u8::is_ascii_digit).count(), std::cmp::Reverse(m.start())))?;
    let compact: String = run.as_str().chars().filter(|c| c.is_ascii_digit() || *c == '.' || *c == ',').collect();
    // leading zeros directly followed by a digit carry no information
    let lead = compact.bytes().take_while(|b| *b == b'0').count();
    let s = if lead > 0 && compact[lead..].starts_with(|c: char| c.is_ascii_digit()) {
        &compact[lead..]
    } else if lead > 1 {
        &compact[lead - 1..]
    } else {
        &compact[..]
    };
    let (int, frac) = match (s.rfind('.'), s.rfind(',')) {
        (None, None) => (s.to_string(), None),
        (Some(d), Some(c)) => {
            let (pos, group) = if d > c { (d, ',') } else { (c, '.') };
            let (int, frac) = (&s[..pos], &s[pos + 1..]);
            if !frac.bytes().all(|b| b.is_ascii_digit()) || !(int == "0" || is_grouped(int, group)) {
                return None;
            }
            (int.replace(group, ""), Some(frac.to_string()))
        }
        (Some(_), None) | (None, Some(_)) => {
            let sep = if s.contains('.') { '.' } else { ',' };
            if is_grouped(s, sep) {
                (s.replace(sep, ""), None)
            } else if s.matches(sep).count() == 1 {
                let (int, frac) = s.split_once(sep)?;
                (int.to_string(), Some(frac.to_string()))
            } else {
                return None;
            }
        }
    };
    let int = strip_leading_zeros(&int);
    Some(match frac {
        Some(f) => format!("{int}.{f}"),
        None => int.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(normalize_amount("1.650.000 ₫").as_deref(), Some("1650000"));
        assert_eq!(normalize_amount("S$1,234.50").as_deref(), Some("1234.50"));
        assert_eq!(normalize_amount("free"), None);
    }

    #[test]
    fn leading_zero_before_group_is_not_grouping() {
        assert_eq!(normalize_amount("05.123").as_deref(), Some("5123"));
        assert_eq!(normalize_amount("0.500").as_deref(), Some("0.500"));
        assert_eq!(normalize_amount("0.123,456"), None);
    }

    proptest! {
        #[test]
        fn output_is_plain_and_stable(raw in "[0-9.,₫$ SGDVN]{0,16}") {
            if let Some(out) = normalize_amount(&raw) {
                let re = Regex::new(r"^\d+(\.\d+)?$").unwrap();
                prop_assert!(re.is_match(&out), "{out}");
                prop_assert_eq!(normalize_amount(&out), Some(out.clone()));
            }
        }

        #[test]
        fn grouped_rendering_round_trips(n in 0u64..10_000_000_000, sep in prop::sample::select(vec!['.', ',', ' '])) {
            let digits = n.to_string();
            let mut grouped = String::new();
            for (i, c) in digits.chars().enumerate() {
                if i > 0 && (digits.len() - i) % 3 == 0 {
                    grouped.push(sep);
                }
                grouped.push(c);
            }
            prop_assert_eq!(normalize_amount(&format!("{grouped} VND")), Some(digits));
        }
    }
}
