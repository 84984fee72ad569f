use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_json, Corpus, EvalError};
use crate::classify::{classify_page, train_text_classifier, LrHyperparams, RuleSet, TextClassifier, TfidfConfig, TrainReport};
use crate::fixture::FixtureIndex;
use crate::model::PageImage;
use crate::ocr::{assemble_tokens, tokens_to_text, RawToken, DEFAULT_TEXT_MIN_CONF};
use crate::vlm::FixtureVlm;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledPage {
    pub doc_id: String,
    pub page_digest: String,
    pub doc_type: String,
    pub width: u32,
    pub height: u32,
    /// Page text as the pipeline sees it: assembled OCR tokens above the
    /// text confidence floor.
    pub text: String,
    pub title_mappable: bool,
}

/// Every corpus page with its gold type and OCR text.
pub fn labelled_pages(corpus: &Corpus) -> Result<Vec<LabelledPage>, EvalError> {
    let mut out = Vec::new();
    for doc in &corpus.documents {
        for (i, p) in doc.pages.iter().enumerate() {
            let path = corpus.fixture_path(doc, "ocr", &p.page_digest);
            let raw: Vec<RawToken> = read_json(&path)?;
            let blank = PageImage::blank(i, p.width, p.height, &p.page_digest);
            let tokens = assemble_tokens("fixture", raw, &blank).map_err(|e| EvalError::Parse { path, message: e.to_string() })?;
            out.push(LabelledPage {
                doc_id: doc.doc_id.clone(),
                page_digest: p.page_digest.clone(),
                doc_type: p.doc_type.clone(),
                width: p.width,
                height: p.height,
                text: tokens_to_text(&tokens, DEFAULT_TEXT_MIN_CONF),
                title_mappable: p.title_mappable,
            });
        }
    }
    Ok(out)
}

/// Document ids split into (train, test) after a seeded shuffle; pages of
/// one document never straddle the split.
pub fn split_by_document(doc_ids: &[String], seed: u64, train_fraction: f64) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut ids = doc_ids.to_vec();
    ids.sort();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ids.len() as f64) * train_fraction.clamp(0.0, 1.0)).round() as usize;
    let test = ids.split_off(n_train.min(ids.len()));
    (ids.into_iter().collect(), test.into_iter().collect())
}

/// Corpus training recipe. The optimizer runs longer and with a weaker
/// penalty than the library defaults; rare types have few training pages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub seed: u64,
    pub train_fraction: f64,
    pub tfidf: TfidfConfig,
    pub hyperparams: LrHyperparams,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            seed: 42,
            train_fraction: 0.8,
            tfidf: TfidfConfig::default(),
            hyperparams: LrHyperparams {
                l2_lambda: 1e-4,
                max_iters: 2000,
                ..LrHyperparams::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEval {
    pub pages: usize,
    /// Text model alone.
    pub lr_accuracy: f64,
    /// Title rule with text-model fallback, using the recorded VLM titles.
    pub hybrid_accuracy: f64,
    pub title_rule_pages: usize,
    pub ml_fallback_pages: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub classifier: TextClassifier,
    pub report: TrainReport,
    pub train_pages: usize,
    pub heldout: ClassifierEval,
}

/// Accuracy of `model` alone and of the hybrid classifier on `pages`.
pub fn classifier_accuracy(corpus: &Corpus, pages: &[&LabelledPage], model: &TextClassifier) -> ClassifierEval {
    if pages.is_empty() {
        return ClassifierEval::default();
    }
    let vlm = FixtureVlm::new(Arc::new(FixtureIndex::new([corpus.root.clone()])));
    let rules = RuleSet::builtin();
    let results: Vec<(bool, bool, bool)> = pages
        .par_iter()
        .map(|p| {
            let lr_ok = model.predict(&p.text).0 == p.doc_type;
            let page = PageImage::blank(0, p.width, p.height, &p.page_digest);
            match classify_page(&page, &p.text, Some(&vlm), &rules, Some(model)) {
                Ok(o) => (lr_ok, o.doc_type == p.doc_type, o.method == crate::classify::ClassificationMethod::TitleRule),
                Err(_) => (lr_ok, false, false),
            }
        })
        .collect();
    let n = pages.len() as f64;
    let count = |f: &dyn Fn(&(bool, bool, bool)) -> bool| results.iter().filter(|r| f(r)).count();
    let title_rule_pages = count(&|r| r.2);
    ClassifierEval {
        pages: pages.len(),
        lr_accuracy: count(&|r| r.0) as f64 / n,
        hybrid_accuracy: count(&|r| r.1) as f64 / n,
        title_rule_pages,
        ml_fallback_pages: pages.len() - title_rule_pages,
    }
}

/// Fits the text classifier on the training documents of a seeded split
/// and measures it on the held-out documents.
pub fn train_on_corpus(corpus: &Corpus, opts: &TrainOptions) -> Result<TrainOutcome, EvalError> {
    let pages = labelled_pages(corpus)?;
    let ids: Vec<String> = corpus.documents.iter().map(|d| d.doc_id.clone()).collect();
    let (train_ids, _) = split_by_document(&ids, opts.seed, opts.train_fraction);
    let (train, test): (Vec<&LabelledPage>, Vec<&LabelledPage>) = pages.iter().partition(|p| train_ids.contains(&p.doc_id));
    let texts: Vec<&str> = train.iter().map(|p| p.text.as_str()).collect();
    let labels: Vec<&str> = train.iter().map(|p| p.doc_type.as_str()).collect();
    let (classifier, report) = train_text_classifier(&texts, &labels, opts.tfidf, opts.hyperparams).map_err(EvalError::Train)?;
    let heldout = classifier_accuracy(corpus, &test, &classifier);
    Ok(TrainOutcome { classifier, report, train_pages: train.len(), heldout })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_seeded_and_disjoint() {
        let ids: Vec<String> = (0..50).map(|i| format!("doc-{i:04}")).collect();
        let (a, b) = split_by_document(&ids, 9, 0.8);
        assert_eq!((a.len(), b.len()), (40, 10));
        assert!(a.is_disjoint(&b));
        let mut reversed = ids.clone();
        reversed.reverse();
        assert_eq!(split_by_document(&reversed, 9, 0.8), (a.clone(), b));
        assert_ne!(split_by_document(&ids, 10, 0.8).0, a);
    }
}
