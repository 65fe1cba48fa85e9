//! Batch front end for the splitting computations: configuration, caching and CSV artifacts.

pub mod cache;
pub mod commands;
pub mod config;
