//! Textual cloze question generation over procedural (How-To) corpora, with
//! tools to measure and remove answer-choice bias.
//!
//! The pipeline runs in file-based stages:
//!
//! 1. [`corpus`]: parse, normalize and filter step-wise procedures.
//! 2. [`embeddings`]: tokenize, train skip-gram vectors on step titles, or
//!    load an external embedding file; pool titles into unit vectors.
//! 3. [`clozegen`]: build cloze questions whose distractors come from an
//!    adaptive k-nearest-neighbor neighborhood of the answer title.
//! 4. [`debias`]: resample every distractor under per-cluster budgets so
//!    picks spread evenly over title clusters.
//! 5. [`audit`]: choice-only and context-free probes plus distributional
//!    statistics, before and after debiasing.
//!
//! [`geometry`] holds the exact kNN search and KMeans used by stages 3 and 4,
//! and [`fixture`] generates seeded synthetic corpora with injected
//! positional title regularities.

pub mod audit;
pub mod cli;
pub mod clozegen;
pub mod config;
pub mod corpus;
pub mod debias;
pub mod embeddings;
pub mod error;
pub mod fixture;
pub mod geometry;
pub mod jsonl;
pub mod rng;

pub use error::{Error, Result};
