//! Ingestion, synthetic workloads and the command-line driver built on
//! `concord-core`.

pub mod bench;
pub mod cli;
pub mod gen;
pub mod ingest;
pub mod weights;
