//! Library side of the `tenproj` command: configuration, multi-trial
//! training with summary statistics, checkpoint evaluation, gradient
//! checks and a self-test.

pub mod config;
pub mod gradcheck;
pub mod selftest;
pub mod summary;
pub mod train;

pub use config::{parse_config, parse_config_for, resolve, Command, ConfigError, ModelChoice, Overrides, RunConfig};
pub use gradcheck::{run_gradcheck, GradcheckReport, Verdict};
pub use selftest::run_selftest;
pub use summary::{median, summarize, summary_csv, Metric, SummaryRow};
pub use train::{run_eval, run_train, TrainOutcome, TrialResult};

/// Exit status for an invalid command line or configuration.
pub const EXIT_USAGE: i32 = 2;
