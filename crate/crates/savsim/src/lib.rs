//! File formats, an independent routing oracle, parallel replications and
//! the `savsim` command line on top of `savsim-core`.

pub mod cli;
pub mod io;
pub mod oracle;
pub mod overrides;
pub mod runner;

pub use savsim_core as core;
