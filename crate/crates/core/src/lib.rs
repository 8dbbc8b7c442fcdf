//! Query-adaptive context retrieval over a personal knowledge graph of
//! wearable health metrics.
//!
//! The crate is organised bottom-up:
//!
//! - [`stats`]: rank correlations, Fisher z, binned mutual information, sigmoid.
//! - [`graph`]: the metric knowledge graph, its construction and persistence.
//! - [`providers`]: contracts for embedding, query parsing and knowledge
//!   generation, plus deterministic offline stubs.
//! - [`ingestion`]: per-subject daily series and participant-selection statistics.
//! - [`global`]: long-term edge weights from a two-stage Gaussian posterior.
//! - [`local`]: short-term weights from windowed abnormality and query openness.
//! - [`retrieval`]: the query-time pipeline and context rendering.
//! - [`calibration`]: choosing the evidence-trust hyperparameters from
//!   Kendall tau curves.
//! - [`queryset`]: query input sampling and rank aggregation.
//! - [`report`]: per-edge weight component tables.
//! - [`synthetic`]: seeded synthetic cohorts for tests and demos.

pub mod calibration;
pub mod error;
pub mod global;
pub mod graph;
pub mod ingestion;
pub mod local;
pub mod providers;
pub mod queryset;
pub mod report;
pub mod retrieval;
pub mod stats;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result};
