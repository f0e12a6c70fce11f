//! File formats, reports and the command-line front end for the fund engine.

pub mod app;
pub mod gen;
pub mod report;
pub mod scenario;
pub mod snapshot;

pub const ENGINE_VERSION: &str = concat!("alphafund-", env!("CARGO_PKG_VERSION"));
