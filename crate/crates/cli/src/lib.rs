//! Command-line front end: pipeline stages, checkpoint layout and argument handling.

pub mod checkpoint;
pub mod cli;
pub mod pipeline;
