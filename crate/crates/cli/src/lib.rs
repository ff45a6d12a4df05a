//! Pipeline commands and HTTP service for mathsearch.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod service;
pub mod synth;
