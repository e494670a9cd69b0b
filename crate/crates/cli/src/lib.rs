//! Command-line front end of the toolkit.
//!
//! Every command takes its settings from flags, optionally layered over a
//! JSON config file (`--config`), writes its outputs through `.partial`
//! files and leaves a JSON run manifest beside them.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod report;

use clap::Parser;

pub use commands::Command;
pub use manifest::RunManifest;
pub use report::{dataset_report, run_aggregation, DatasetReport, ReportInputs};

#[derive(Debug, Parser)]
#[command(name = "rarepool", version, about = "Rare-class document selection: pooling, active learning and annotation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}
