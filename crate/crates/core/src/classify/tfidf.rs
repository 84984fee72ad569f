use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfidfConfig {
    pub lowercase: bool,
    pub max_features: usize,
    pub min_df: usize,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            max_features: 20_000,
            min_df: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TfidfError {
    #[error("cannot fit on an empty corpus")]
    EmptyCorpus,
    #[error("no term reaches the minimum document frequency")]
    EmptyVocabulary,
    #[error("vectorizer is inconsistent: {0}")]
    Inconsistent(String),
}

/// Unicode word segmentation (NFC, optionally lowercased). Digits are kept
/// and punctuation dropped; Vietnamese diacritics survive.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    let nfc: String = text.nfc().collect();
    nfc.unicode_words()
        .map(|w| if lowercase { w.to_lowercase() } else { w.to_string() })
        .collect()
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    pub dim: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        Self {
            dim: dense.len(),
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, row: &[f64]) -> f64 {
        self.iter().map(|(i, v)| row[i] * v).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfVectorizer {
    config: TfidfConfig,
    terms: Vec<String>,
    vocabulary: HashMap<String, usize>,
    idf: Vec<f64>,
}

impl TfidfVectorizer {
    /// Fits vocabulary and idf weights.
    ///
    /// Terms need `min_df` documents; if more than `max_features` qualify,
    /// the most frequent (by document frequency, ties lexicographic) are
    /// kept. Columns are assigned in lexicographic term order.
    /// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`.
    pub fn fit<S: AsRef<str>>(corpus: &[S], config: TfidfConfig) -> Result<Self, TfidfError> {
        if corpus.is_empty() {
            return Err(TfidfError::EmptyCorpus);
        }
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in corpus {
            let unique: HashSet<String> = tokenize(doc.as_ref(), config.lowercase).into_iter().collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = df.into_iter().filter(|(_, n)| *n >= config.min_df.max(1)).collect();
        if kept.is_empty() {
            return Err(TfidfError::EmptyVocabulary);
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        kept.truncate(config.max_features.max(1));
        kept.sort_by(|a, b| a.0.cmp(&b.0));
        let n = corpus.len() as f64;
        let idf = kept.iter().map(|(_, d)| ((1.0 + n) / (1.0 + *d as f64)).ln() + 1.0).collect();
        Self::from_parts(config, kept.into_iter().map(|(t, _)| t).collect(), idf)
    }

    pub fn from_parts(config: TfidfConfig, terms: Vec<String>, idf: Vec<f64>) -> Result<Self, TfidfError> {
        if terms.len() != idf.len() {
            return Err(TfidfError::Inconsistent(format!("{} terms but {} idf weights", terms.len(), idf.len())));
        }
        if terms.is_empty() {
            return Err(TfidfError::EmptyVocabulary);
        }
        if let Some(bad) = idf.iter().find(|w| !w.is_finite() || **w <= 0.0) {
            return Err(TfidfError::Inconsistent(format!("idf weight {bad} is not positive")));
        }
        let vocabulary: HashMap<String, usize> = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if vocabulary.len() != terms.len() {
            return Err(TfidfError::Inconsistent("duplicate vocabulary term".into()));
        }
        Ok(Self {
            config,
            terms,
            vocabulary,
            idf,
        })
    }

    pub fn config(&self) -> TfidfConfig {
        self.config
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn idf_weights(&self) -> &[f64] {
        &self.idf
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.vocabulary.get(term).copied()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.index_of(term).map(|i| self.idf[i])
    }

    /// Raw counts times idf, before normalization.
    pub fn weights(&self, text: &str) -> SparseVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokenize(text, self.config.lowercase) {
            if let Some(&i) = self.vocabulary.get(&t) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let (indices, values) = counts.into_iter().map(|(i, c)| (i, c * self.idf[i])).unzip();
        SparseVector {
            dim: self.dim(),
            indices,
            values,
        }
    }

    /// L2-normalized tf-idf vector; all-zero when no term is in vocabulary.
    pub fn transform(&self, text: &str) -> SparseVector {
        let mut v = self.weights(text);
        let norm = v.norm();
        if norm > 0.0 {
            v.values.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

pub fn tfidf_fit<S: AsRef<str>>(corpus: &[S], config: TfidfConfig) -> Result<TfidfVectorizer, TfidfError> {
    TfidfVectorizer::fit(corpus, config)
}

pub fn tfidf_transform(v: &TfidfVectorizer, text: &str) -> SparseVector {
    v.transform(text)
}
