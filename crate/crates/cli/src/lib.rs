//! Library half of the `opplab` command: configuration, task execution,
//! artifact writing and report rendering.

pub mod app;
pub mod config;
pub mod output;
pub mod report;
pub mod run;
