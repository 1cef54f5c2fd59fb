//! Batch experiment harness: config parsing, random system generation,
//! the design/redesign mode drivers, and reproducible CSV trace output.

pub mod config;
pub mod fixtures;
pub mod io;
pub mod random;
pub mod report;
pub mod run;
