//! Batch front door for the functional state-space library: configuration,
//! CSV ingestion, and the simulate / fit / filter / smooth / summarize /
//! verify workflow. The binary in `main.rs` is a thin argument parser over
//! these modules.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod io;
