use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Registry;
use crate::text::{collapse_whitespace, fold_diacritics};

const BUILTIN_RULES: &str = include_str!("../../data/rules.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleRule {
    pub pattern: String,
    pub doc_type: String,
    pub priority: i32,
}

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("rule {0} has an empty pattern")]
    EmptyPattern(usize),
    #[error("rule `{pattern}` maps to unknown document type `{doc_type}`")]
    UnknownType { pattern: String, doc_type: String },
    #[error("rule file parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("rule file io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Deserialize, Serialize)]
struct RuleFile {
    #[serde(rename = "rule", default)]
    rules: Vec<TitleRule>,
}

/// Folded form used on both sides of a title match.
pub fn fold_title(s: &str) -> String {
    collapse_whitespace(&fold_diacritics(&s.to_lowercase()))
}

/// Title rules held sorted by priority, highest first, with their patterns
/// pre-folded.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    rules: Vec<TitleRule>,
    folded: Vec<String>,
}

impl RuleSet {
    pub fn new(rules: Vec<TitleRule>) -> Result<Self, RuleError> {
        for (i, r) in rules.iter().enumerate() {
            if r.pattern.trim().is_empty() {
                return Err(RuleError::EmptyPattern(i));
            }
        }
        let mut rules = rules;
        rules.sort_by_key(|r| std::cmp::Reverse(r.priority));
        let folded = rules.iter().map(|r| fold_title(&r.pattern)).collect();
        Ok(Self { rules, folded })
    }

    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN_RULES).expect("built-in rule table is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RuleError> {
        let file: RuleFile = toml::from_str(text)?;
        Self::new(file.rules)
    }

    pub fn load(path: &Path) -> Result<Self, RuleError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn rules(&self) -> &[TitleRule] {
        &self.rules
    }

    /// Every rule must name a type the registry knows.
    pub fn check_against(&self, registry: &Registry) -> Result<(), RuleError> {
        match self.rules.iter().find(|r| !registry.contains(&r.doc_type)) {
            Some(r) => Err(RuleError::UnknownType {
                pattern: r.pattern.clone(),
                doc_type: r.doc_type.clone(),
            }),
            None => Ok(()),
        }
    }

    pub fn map_title(&self, title: &str) -> Option<&str> {
        let folded = fold_title(title);
        if folded.is_empty() {
            return None;
        }
        let mut top: Option<i32> = None;
        let mut types = BTreeSet::new();
        for (rule, pattern) in self.rules.iter().zip(&self.folded) {
            if top.is_some_and(|p| rule.priority < p) {
                break;
            }
            if folded.contains(pattern.as_str()) {
                top = Some(rule.priority);
                types.insert(rule.doc_type.as_str());
            }
        }
        match types.len() {
            1 => types.into_iter().next(),
            _ => None,
        }
    }
}

/// Maps a title to the document type of the highest-priority matching rule.
/// `None` when nothing matches or when distinct types tie at the top
/// priority.
pub fn map_title<'a>(title: &str, rules: &'a RuleSet) -> Option<&'a str> {
    rules.map_title(title)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rule(p: &str, t: &str, prio: i32) -> TitleRule {
        TitleRule {
            pattern: p.into(),
            doc_type: t.into(),
            priority: prio,
        }
    }

    #[test]
    fn builtin_rules_cover_registry_types() {
        let rules = RuleSet::builtin();
        let reg = Registry::builtin();
        rules.check_against(&reg).unwrap();
        for t in reg.types() {
            assert!(rules.rules().iter().any(|r| r.doc_type == t.id), "no rule for {}", t.id);
        }
    }

    #[test]
    fn maps_paper_titles() {
        let rules = RuleSet::builtin();
        assert_eq!(rules.map_title("HOSPITAL DISCHARGE SUMMARY"), Some("discharge_summary"));
        assert_eq!(rules.map_title("REFERRAL LETTER"), Some("referral_letter"));
        assert_eq!(rules.map_title("LETTER OF GUARANTEE"), Some("letter_of_guarantee"));
        assert_eq!(rules.map_title("GIẤY RA VIỆN"), Some("discharge_certificate"));
        assert_eq!(rules.map_title("FINAL GUARANTEE LETTER"), Some("final_guarantee_letter"));
        assert_eq!(rules.map_title("QUARTERLY NEWSLETTER"), None);
        assert_eq!(rules.map_title(""), None);
    }

    #[test]
    fn equal_priority_conflict_is_unmapped() {
        let rules = RuleSet::new(vec![rule("invoice", "invoice", 10), rule("receipt", "receipt", 10)]).unwrap();
        assert_eq!(rules.map_title("TAX INVOICE / RECEIPT"), None);
        assert_eq!(rules.map_title("TAX INVOICE"), Some("invoice"));
        // the shipped table behaves the same on this title
        assert_eq!(RuleSet::builtin().map_title("TAX INVOICE / RECEIPT"), None);
        // two patterns for the same type are not a conflict
        let same = RuleSet::new(vec![rule("tax", "invoice", 10), rule("invoice", "invoice", 10)]).unwrap();
        assert_eq!(same.map_title("TAX INVOICE"), Some("invoice"));
        // a higher priority breaks the tie
        let ranked = RuleSet::new(vec![rule("invoice", "invoice", 10), rule("receipt", "receipt", 11)]).unwrap();
        assert_eq!(ranked.map_title("TAX INVOICE / RECEIPT"), Some("receipt"));
    }

    #[test]
    fn empty_pattern_rejected() {
        assert!(matches!(RuleSet::new(vec![rule(" ", "x", 1)]), Err(RuleError::EmptyPattern(0))));
    }

    fn arb_rules() -> impl Strategy<Value = Vec<TitleRule>> {
        prop::collection::vec(("[a-d]{1,2}", "t[0-3]", 0i32..5), 0..8)
            .prop_map(|v| v.into_iter().map(|(p, t, prio)| rule(&p, &t, prio)).collect())
    }

    proptest! {
        #[test]
        fn lower_priority_rules_never_override(rules in arb_rules(), extra in ("[a-d]{1,2}", "t[0-3]"), title in "[a-d ]{0,10}") {
            let base = RuleSet::new(rules.clone()).unwrap();
            let before = base.map_title(&title).map(str::to_string);
            let mut more = rules.clone();
            let min = rules.iter().map(|r| r.priority).min().unwrap_or(0);
            more.push(rule(&extra.0, &extra.1, min - 1));
            let after = RuleSet::new(more).unwrap().map_title(&title).map(str::to_string);
            if before.is_some() {
                prop_assert_eq!(before, after);
            }
        }

        #[test]
        fn mapping_is_pure(rules in arb_rules(), title in "[a-d ]{0,10}") {
            let set = RuleSet::new(rules).unwrap();
            prop_assert_eq!(set.map_title(&title), set.map_title(&title));
        }
    }
}
