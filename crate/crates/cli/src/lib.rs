//! Command-line front end for the sum-AoI simulator: scenario files,
//! parameter sweeps written as CSV, JSON-lines run logs and a self-test.

pub mod config;
pub mod runlog;
pub mod selftest;
pub mod sweep;

/// Package version plus `git describe` output when built from a checkout.
pub const VERSION: &str = env!("RIS_AOI_VERSION");
