//! Batch runner around `drdw-core`: reads articles and behaviors, runs the
//! configured strategies over every user and writes lists and metrics.

pub mod config;
pub mod io;
pub mod pipeline;
pub mod synth;
