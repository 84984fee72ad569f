//! Versioned binary container for a fitted vectorizer plus LR model.
//!
//! Layout (little endian): magic `CPLR`, u32 version, tf-idf config,
//! vocabulary and idf, classes, hyperparameters, weights, bias, then a
//! SHA-256 of everything before it.

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::logreg::{LrError, LrHyperparams, LrModel};
use super::tfidf::{SparseVector, TfidfConfig, TfidfError, TfidfVectorizer};

const MAGIC: &[u8; 4] = b"CPLR";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not a classifier model file")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("model file checksum mismatch")]
    Checksum,
    #[error("model file truncated")]
    Truncated,
    #[error("model file is malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Tfidf(#[from] TfidfError),
    #[error(transparent)]
    Lr(#[from] LrError),
    #[error("model file io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Vectorizer and model fitted together; predicts a document type from
/// page text.
#[derive(Debug, Clone, PartialEq)]
pub struct TextClassifier {
    pub vectorizer: TfidfVectorizer,
    pub model: LrModel,
}

impl TextClassifier {
    pub fn new(vectorizer: TfidfVectorizer, model: LrModel) -> Result<Self, ModelFileError> {
        model.check()?;
        if model.n_features != vectorizer.dim() {
            return Err(ModelFileError::Malformed(format!(
                "model expects {} features, vocabulary has {}",
                model.n_features,
                vectorizer.dim()
            )));
        }
        Ok(Self { vectorizer, model })
    }

    pub fn features(&self, text: &str) -> SparseVector {
        self.vectorizer.transform(text)
    }

    pub fn predict(&self, text: &str) -> (&str, Vec<f64>) {
        self.model
            .predict(&self.features(text))
            .expect("vectorizer and model dimensions agree")
    }

    pub fn classes(&self) -> &[String] {
        &self.model.classes
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.raw(MAGIC);
        w.u32(VERSION);
        let cfg = self.vectorizer.config();
        w.u8(u8::from(cfg.lowercase));
        w.u64(cfg.max_features as u64);
        w.u64(cfg.min_df as u64);
        w.u64(self.vectorizer.dim() as u64);
        for t in self.vectorizer.terms() {
            w.str(t);
        }
        for v in self.vectorizer.idf_weights() {
            w.f64(*v);
        }
        w.u64(self.model.classes.len() as u64);
        for c in &self.model.classes {
            w.str(c);
        }
        let hp = self.model.hyperparams;
        w.f64(hp.l2_lambda);
        w.f64(hp.learning_rate);
        w.u64(hp.max_iters as u64);
        w.f64(hp.tolerance);
        for v in self.model.weights.iter().chain(&self.model.bias) {
            w.f64(*v);
        }
        let sum = Sha256::digest(&w.0);
        w.raw(&sum);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelFileError> {
        if bytes.len() < 4 + 4 + 32 {
            return Err(ModelFileError::Truncated);
        }
        if &bytes[..4] != MAGIC {
            return Err(ModelFileError::BadMagic);
        }
        let (body, sum) = bytes.split_at(bytes.len() - 32);
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(ModelFileError::Version(version));
        }
        if Sha256::digest(body).as_slice() != sum {
            return Err(ModelFileError::Checksum);
        }
        let config = TfidfConfig {
            lowercase: r.u8()? != 0,
            max_features: r.len()?,
            min_df: r.len()?,
        };
        let n_terms = r.len()?;
        let terms = (0..n_terms).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
        let idf = (0..n_terms).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let n_classes = r.len()?;
        let classes = (0..n_classes).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
        let hyperparams = LrHyperparams {
            l2_lambda: r.f64()?,
            learning_rate: r.f64()?,
            max_iters: r.len()?,
            tolerance: r.f64()?,
        };
        let n_weights = n_classes
            .checked_mul(n_terms)
            .ok_or_else(|| ModelFileError::Malformed("weight count overflows".into()))?;
        let weights = (0..n_weights).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let bias = (0..n_classes).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        if r.pos != body.len() {
            return Err(ModelFileError::Malformed(format!("{} trailing bytes", body.len() - r.pos)));
        }
        let vectorizer = TfidfVectorizer::from_parts(config, terms, idf)?;
        let model = LrModel {
            classes,
            n_features: n_terms,
            weights,
            bias,
            hyperparams,
        };
        Self::new(vectorizer, model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelFileError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelFileError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn raw(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.raw(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.raw(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.raw(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.raw(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ModelFileError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or(ModelFileError::Truncated)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ModelFileError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, ModelFileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self) -> Result<usize, ModelFileError> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|n| *n <= self.buf.len() * 8 + 1_000_000)
            .ok_or_else(|| ModelFileError::Malformed(format!("implausible length {v}")))
    }
    fn f64(&mut self) -> Result<f64, ModelFileError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String, ModelFileError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| ModelFileError::Malformed(e.to_string()))
    }
}
