//! Experiment harness for `vinrs-core`: configuration, seeded multi-run
//! orchestration, CSV and plot output, and self-checks.

pub mod checks;
pub mod config;
pub mod plotdata;
pub mod run;
pub mod stats;

pub use checks::{selfcheck, CheckOutcome, SelfcheckOptions, Status};
pub use config::{ConfigError, EnvKind, EnvSpec, ExperimentConfig};
pub use run::{run, RunCurve, RunOutput, SummaryRow};
