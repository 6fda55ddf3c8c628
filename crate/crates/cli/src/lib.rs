//! Command-line front end and HTTP service for the `lumen-core` enhancer.

pub mod commands;
pub mod service;
