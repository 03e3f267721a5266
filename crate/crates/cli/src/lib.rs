//! Experiment harness: configuration files, builtin scenarios, and atomic
//! CSV/JSON artifacts for the Duffing resonance laboratory.

pub mod config;
pub mod output;
pub mod run;
pub mod scenarios;

pub use config::{Experiment, ExperimentConfig, Format};
pub use run::{run, HarnessError, RunSummary};
pub use scenarios::{builtin_scenarios, list_scenarios, scenario, Scenario};
