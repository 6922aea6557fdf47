//! Monte Carlo harness, report formats and command-line front end for the
//! multi-colour allocation scheme in [`alloc_lab_core`].

pub mod cache;
pub mod cli;
pub mod config;
pub mod error;
pub mod format;
pub mod harness;
pub mod report;
pub mod validate;

pub use error::LabError;
