//! Field-kind normalizers: fuzzy entity substitution against reference
//! lists, date canonicalization to `DD/MM/YYYY` and amount canonicalization
//! to a plain decimal string.

mod amount;
mod date;
mod entity;

use std::collections::HashMap;
use std::sync::Arc;

use crate::model::{FieldExtraction, FieldKind, FieldSpec, NormalizationNote};
use crate::text::collapse_whitespace;

pub use amount::normalize_amount;
pub use date::{normalize_date, normalize_date_with, DateOrder};
pub use entity::{
    build_reference_index, normalize_entity, parse_reference_list, trigrams, EntityNormalizer, NormalizationResult,
    RefEntry, RefIndex, RefIndexConfig, RefIndexError,
};

pub const BUILTIN_HOSPITALS: &str = include_str!("../../data/hospitals.txt");

/// Built-in hospital reference list.
pub fn builtin_hospitals(config: RefIndexConfig) -> RefIndex {
    RefIndex::from_list_text(BUILTIN_HOSPITALS, config).expect("built-in hospital list is non-empty")
}

/// Applies the normalizer selected by each field's kind.
#[derive(Clone, Default)]
pub struct Postprocessor {
    references: HashMap<String, Arc<dyn EntityNormalizer>>,
    date_order: DateOrder,
}

impl std::fmt::Debug for Postprocessor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut names: Vec<_> = self.references.keys().collect();
        names.sort();
        f.debug_struct("Postprocessor")
            .field("references", &names)
            .field("date_order", &self.date_order)
            .finish()
    }
}

impl Postprocessor {
    pub fn new(date_order: DateOrder) -> Self {
        Self {
            references: HashMap::new(),
            date_order,
        }
    }

    /// Registers the normalizer behind `FieldSpec::reference == name`.
    pub fn with_reference(mut self, name: impl Into<String>, normalizer: Arc<dyn EntityNormalizer>) -> Self {
        self.references.insert(name.into(), normalizer);
        self
    }

    pub fn date_order(&self) -> DateOrder {
        self.date_order
    }

    /// Normalized form of `raw` for a field of `spec` plus a note on how it
    /// was obtained.
    pub fn normalize_value(&self, spec: &FieldSpec, raw: &str) -> (Option<String>, NormalizationNote) {
        let note = |rule: &str| NormalizationNote {
            rule: rule.to_string(),
            matched: None,
            score: None,
            canonical_id: None,
            message: None,
        };
        match spec.kind {
            FieldKind::Date => {
                let out = normalize_date_with(raw, self.date_order);
                let mut n = note("date");
                if out.is_none() {
                    n.message = Some("unrecognized or invalid date".into());
                }
                (out, n)
            }
            FieldKind::Amount => {
                let out = normalize_amount(raw);
                let mut n = note("amount");
                if out.is_none() {
                    n.message = Some("no unambiguous amount".into());
                }
                (out, n)
            }
            FieldKind::Identifier => (Some(collapse_whitespace(raw)), note("identifier")),
            FieldKind::Text => match spec.reference.as_deref() {
                None => (Some(collapse_whitespace(raw)), note("text")),
                Some(list) => match self.references.get(list) {
                    None => {
                        let mut n = note("text");
                        n.message = Some(format!("reference list `{list}` is not loaded"));
                        (Some(collapse_whitespace(raw)), n)
                    }
                    Some(index) => {
                        let r = index.normalize_entity(raw);
                        let mut n = note(&format!("entity:{list}"));
                        n.matched = Some(r.matched);
                        n.score = Some(r.score);
                        n.canonical_id = r.canonical_id;
                        let out = if r.matched { r.output } else { collapse_whitespace(raw) };
                        (Some(out), n)
                    }
                },
            },
        }
    }

    /// Fills `normalized_value` and `normalization` from `raw_value`.
    pub fn apply(&self, spec: &FieldSpec, field: &mut FieldExtraction) {
        let Some(raw) = field.raw_value.as_deref() else {
            field.normalized_value = None;
            return;
        };
        let (value, note) = self.normalize_value(spec, raw);
        field.normalized_value = value;
        field.normalization = Some(note);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Registry;

    fn post() -> Postprocessor {
        Postprocessor::new(DateOrder::DayFirst).with_reference("hospitals", Arc::new(builtin_hospitals(RefIndexConfig::default())))
    }

    #[test]
    fn every_field_kind_in_the_registry_is_handled() {
        let reg = Registry::builtin();
        let p = post();
        for t in reg.types() {
            for spec in &reg.schema_for(&t.id).unwrap().fields {
                let (_, note) = p.normalize_value(spec, "05/10/2024");
                assert!(!note.rule.is_empty());
                if let Some(r) = &spec.reference {
                    assert_eq!(note.rule, format!("entity:{r}"), "{}.{}", t.id, spec.name);
                }
            }
        }
    }

    #[test]
    fn builtin_list_entries_match_themselves_exactly() {
        let idx = builtin_hospitals(RefIndexConfig::default());
        assert_eq!(idx.entries().len(), 100);
        assert!(idx.entries().iter().any(|e| e.name == "Hanoi General Hospital"));
        for e in idx.entries() {
            let r = idx.normalize(&e.name);
            assert!(r.matched && r.score == 1.0, "{}", e.name);
            assert_eq!(r.output, e.name);
            let again = idx.normalize(&r.output);
            assert_eq!((again.output, again.score), (e.name.clone(), 1.0));
        }
    }

    #[test]
    fn apply_sets_normalized_and_keeps_raw() {
        let reg = Registry::builtin();
        let schema = reg.schema_for("invoice").unwrap();
        let p = post();
        let mut f = FieldExtraction::missing("provider");
        f.raw_value = Some("Ha Noi  General Hospital".into());
        p.apply(schema.field("provider").unwrap(), &mut f);
        assert_eq!(f.normalized_value.as_deref(), Some("Hanoi General Hospital"));
        assert_eq!(f.raw_value.as_deref(), Some("Ha Noi  General Hospital"));
        let note = f.normalization.unwrap();
        assert_eq!(note.matched, Some(true));
        assert_eq!(note.canonical_id.as_deref(), Some("H001"));

        let mut d = FieldExtraction::missing("visit_date");
        d.raw_value = Some("31/02/2024".into());
        p.apply(schema.field("visit_date").unwrap(), &mut d);
        assert_eq!(d.normalized_value, None);
        assert_eq!(d.raw_value.as_deref(), Some("31/02/2024"));
        assert!(d.normalization.unwrap().message.is_some());
    }
}
