//! Structured-prediction layer for span identification and span
//! classification on top of any per-token or per-span scorer.
//!
//! The crate is organised by stage:
//!
//! - [`corpus`]: documents, char-offset annotations, word tokenization.
//! - [`tagcodec`]: IO / BIO / BIOES encodings, legality checks, repair.
//! - [`crf`]: linear-chain CRF (Viterbi, forward-backward, training).
//! - [`emitters`]: emission and span-probability files, and a
//!   hand-crafted-feature softmax baseline.
//! - [`spanops`]: interval merging and nesting.
//! - [`gazetteer`]: Porter-stemmed span gazetteer.
//! - [`postproc`]: boundary fixing, repetition rule, gazetteer boost,
//!   nesting resolution, multi-label assignment.
//! - [`eval`]: proportional-overlap span F1, micro F1, token F1.
//! - [`pipeline`]: config-driven runs and ablation tables.

pub mod corpus;
pub mod crf;
pub mod emitters;
pub mod error;
pub mod eval;
pub mod gazetteer;
pub mod pipeline;
pub mod postproc;
pub mod spanops;
pub mod synthetic;
pub mod tagcodec;

pub use error::{Error, Result};
