//! Building blocks for assembling rare-class labeled corpora.
//!
//! The crate covers the whole pipeline: ingesting and cleaning raw posts
//! ([`corpus`]), featurizing them ([`features`]), scoring them with binary
//! classifiers ([`models`]), choosing what humans should label either by
//! threshold pooling over an ensemble ([`pooling`]) or by an active-learning
//! loop ([`active_learning`]), aggregating structured annotations
//! ([`annotation`]) and measuring the result ([`metrics`], [`simulation`]).
//!
//! Classifier families and selection strategies are trait objects looked up
//! by name in a registry, so a run can be configured entirely from JSON or
//! command-line flags.

pub mod active_learning;
pub mod annotation;
pub mod corpus;
pub mod error;
pub mod features;
pub mod io;
pub mod metrics;
pub mod models;
pub mod pooling;
pub mod simulation;

pub use error::{Error, Result};
