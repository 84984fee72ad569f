use std::sync::OnceLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::text::fold_diacritics;

/// How `a/b/YYYY` is read when both parts could be a month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DateOrder {
    #[default]
    DayFirst,
    MonthFirst,
}

struct Patterns {
    iso: Regex,
    numeric: Regex,
    vietnamese: Regex,
    time: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        iso: Regex::new(r"^(\d{4})([-/.])(\d{1,2})([-/.])(\d{1,2})").unwrap(),
        numeric: Regex::new(r"^(\d{1,2})\s*([-/.])\s*(\d{1,2})\s*([-/.])\s*(\d{4})").unwrap(),
        vietnamese: Regex::new(r"^ngay\s*(\d{1,2})\s*thang\s*(\d{1,2})\s*nam\s*(\d{4})").unwrap(),
        time: Regex::new(
            r"^(?:[t,]|luc)?\s*(?:\d{1,2}(?::\d{2}){1,2}(?:\.\d+)?\s*(?:am|pm)?|\d{1,2}\s*h\s*\d{0,2}|\d{1,2}\s*(?:am|pm))\s*(?:z|[+-]\d{2}:?\d{2}|utc|gmt|sgt|ict)?$",
        )
        .unwrap(),
    })
}

fn is_time_suffix(rest: &str) -> bool {
    let rest = rest.trim();
    rest.is_empty() || patterns().time.is_match(rest)
}

fn emit(day: u32, month: u32, year: i32) -> Option<String> {
    NaiveDate::from_ymd_opt(year, month, day).map(|d| d.format("%d/%m/%Y").to_string())
}

/// Canonical `DD/MM/YYYY`, or `None` for unrecognized or impossible dates.
///
/// Accepts `YYYY-MM-DD` (also `/` or `.`), `D/M/YYYY` with `/`, `-` or
/// `.` separators, and `ngày D tháng M năm YYYY`, each optionally followed
/// by a time of day which is discarded. For `a/b/YYYY` the first part is the
/// day unless only the second part can be one (then the parts are swapped);
/// [`DateOrder::MonthFirst`] mirrors this.
pub fn normalize_date_with(raw: &str, order: DateOrder) -> Option<String> {
    let s = fold_diacritics(&raw.trim().to_lowercase());
    let p = patterns();
    if let Some(c) = p.iso.captures(&s) {
        if c[2] != c[4] || !is_time_suffix(&s[c.get(0)?.end()..]) {
            return None;
        }
        return emit(c[5].parse().ok()?, c[3].parse().ok()?, c[1].parse().ok()?);
    }
    if let Some(c) = p.vietnamese.captures(&s) {
        if !is_time_suffix(&s[c.get(0)?.end()..]) {
            return None;
        }
        return emit(c[1].parse().ok()?, c[2].parse().ok()?, c[3].parse().ok()?);
    }
    if let Some(c) = p.numeric.captures(&s) {
        if c[2] != c[4] || !is_time_suffix(&s[c.get(0)?.end()..]) {
            return None;
        }
        let a: u32 = c[1].parse().ok()?;
        let b: u32 = c[3].parse().ok()?;
        let year: i32 = c[5].parse().ok()?;
        let (first, second) = match order {
            DateOrder::DayFirst => (a, b),
            DateOrder::MonthFirst => (b, a),
        };
        // `first` is the preferred day, `second` the preferred month
        let (day, month) = if second > 12 && first <= 12 { (second, first) } else { (first, second) };
        return emit(day, month, year);
    }
    None
}

pub fn normalize_date(raw: &str) -> Option<String> {
    normalize_date_with(raw, DateOrder::DayFirst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn month_first_mirrors() {
        assert_eq!(normalize_date_with("10/05/2024", DateOrder::MonthFirst).as_deref(), Some("05/10/2024"));
        assert_eq!(normalize_date_with("25/12/2024", DateOrder::MonthFirst).as_deref(), Some("25/12/2024"));
    }

    #[test]
    fn mixed_separators_rejected() {
        assert_eq!(normalize_date("05/10-2024"), None);
        assert_eq!(normalize_date("2024-10/05"), None);
        assert_eq!(normalize_date("05/10/2024 garbage"), None);
    }
}
