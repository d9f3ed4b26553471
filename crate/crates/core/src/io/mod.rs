//! Files in and out: panel CSVs, run configuration, traces and reports.

pub mod config;
pub mod data;
pub mod report;
pub mod tracefile;
