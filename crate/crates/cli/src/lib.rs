//! Library surface of the pipeline CLI, reused by the integration and
//! acceptance tests.

pub mod config;
pub mod pipeline;
