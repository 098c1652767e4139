//! Configuration-driven pipeline around the `irt_partition` library:
//! response matrix, per-fold 3PL calibration, IRT-guided partitions with
//! tuned evaluation and statistics, and plot-data export. Every stage reads
//! and writes documented files in one output directory (see [`pipeline`]).

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod plots;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use pipeline::Pipeline;
