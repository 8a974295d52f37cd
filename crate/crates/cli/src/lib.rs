//! Command-line front end: ingestion, run configuration, the estimation
//! pipeline and the experiment harness.

pub mod config;
pub mod error;
pub mod experiments;
pub mod ingest;
pub mod pipeline;
pub mod plot;
pub mod report;
