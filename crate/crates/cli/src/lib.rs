//! Library surface of the CLI, so integration tests drive the same code the
//! binary runs.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
