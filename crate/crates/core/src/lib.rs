//! Building blocks for constructing AMD dialogue corpora from labeled fundus
//! cohorts and for evaluating multimodal chat models against them.
//!
//! The crate is organised by pipeline stage: [`cohort`] manifests and splits,
//! [`dialogue`] generation and validation, [`inference`] runs against model
//! endpoints, [`parser`] for structured answers, [`stats`] for metrics and
//! significance tests, and [`study`] for the blinded clinician rating study.

pub mod cohort;
pub mod dialogue;
pub mod endpoint;
pub mod evaluation;
pub mod inference;
pub mod labels;
pub mod parser;
pub mod provenance;
pub mod stats;
pub mod study;
pub mod stub;

pub use labels::{ExamLabels, PartialLabels, Task};
