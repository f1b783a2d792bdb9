//! The `erratum` command: scoring, evaluation, error injection, dataset
//! reports and the review service.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod manifest;
pub mod review;

pub use commands::{run, run_from_args, Cli, UsageError};
