//! Command-line front end and local HTTP service for `dst-core`.
//!
//! Both front ends go through [`jobs`], so a transfer run from the shell and
//! the same transfer posted to the service produce identical bytes.

pub mod cli;
pub mod jobs;
pub mod server;
