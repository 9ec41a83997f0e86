//! Command-line harness: config loading, the four subcommands and the
//! validation suite.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod commands;
pub mod config;
pub mod error;
pub mod validate;
