//! Core library for classifying RPKI-invalid routes, verifying suspected
//! hijacks and maintaining a whitelist of benign ROA conflicts.

pub mod classifier;
pub mod config;
pub mod error;
pub mod features;
pub mod ingest;
pub mod pipeline;
pub mod post_analyzer;
pub mod prefix;
pub mod quarantine;
pub mod report;
pub mod rov;
pub mod synth;
pub mod trie;

pub use error::{Error, Result};
