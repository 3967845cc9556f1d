//! Command-line front end and HTTP service for cost-of-passing analysis.

pub mod cli;
pub mod service;
