//! Command-line front end and HTTP service for the whitelist pipeline.

pub mod cli;
pub mod http;
