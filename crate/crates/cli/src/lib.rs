//! Config parsing and report formatting for the `wits` binary.

pub mod config;
pub mod report;
