//! Command-line front end and HTTP service for the orchestrator.

pub mod artifacts;
pub mod cli;
pub mod commands;
pub mod error;
pub mod service;
