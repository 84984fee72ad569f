//! Multi-stage claim document understanding.
//!
//! Pages are split and resized ([`preprocess`]), read by an OCR backend
//! ([`ocr`]), typed by a title-rule / logistic-regression hybrid
//! ([`classify`]), extracted field by field through a vision-language backend
//! ([`vlm`], [`extract`]), grounded back onto OCR tokens and normalized
//! ([`postprocess`]). [`pipeline`] wires the stages together, persists
//! results and keeps latency metrics; [`eval`] generates synthetic corpora
//! and scores the pipeline on them.

pub mod model;
pub mod preprocess;
pub mod text;
pub mod backend;
pub mod fixture;
pub mod ocr;
pub mod vlm;
pub mod classify;
pub mod postprocess;
pub mod extract;
pub mod pipeline;
pub mod eval;
