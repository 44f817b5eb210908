//! Library half of the experiment CLI: config loading, the run/sweep/verify
//! harness and the report renderers. The binary is a thin wrapper.

pub mod config;
pub mod harness;
