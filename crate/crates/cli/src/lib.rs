//! Command-line harness around `anc-core`: scenario files, controller
//! comparisons, CSV traces and SVG figures.

pub mod compare;
pub mod config;
pub mod error;
pub mod identify;
pub mod plot;
pub mod run;

pub use compare::{compare_command, Comparison};
pub use config::{ConfigSource, ScenarioConfig};
pub use error::{CliError, Result};
pub use identify::identify_command;
pub use plot::plot_command;
pub use run::{run_command, Manifest, RunOptions, RunOutcome};
