//! Experiment configuration files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use duffing_core::action_angle::{ActionAngleState, PhaseState};
use duffing_core::SystemSpec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Conditions,
    Averages,
    Oscillatory,
    Simulate,
    Poincare,
    Classify,
    Sweep,
    EscapeScan,
    NormalformCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Conditions,
        Experiment::Averages,
        Experiment::Oscillatory,
        Experiment::Simulate,
        Experiment::Poincare,
        Experiment::Classify,
        Experiment::Sweep,
        Experiment::EscapeScan,
        Experiment::NormalformCheck,
    ];

    /// Subcommand spelling.
    pub fn command(self) -> &'static str {
        match self {
            Experiment::Conditions => "conditions",
            Experiment::Averages => "averages",
            Experiment::Oscillatory => "oscillatory",
            Experiment::Simulate => "simulate",
            Experiment::Poincare => "poincare",
            Experiment::Classify => "classify",
            Experiment::Sweep => "sweep",
            Experiment::EscapeScan => "escape-scan",
            Experiment::NormalformCheck => "normalform-check",
        }
    }

    pub fn from_command(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.command() == s)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.command())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

/// Starting point given either in phase variables or in action-angle form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    Phase(PhaseState),
    Action(ActionAngleState),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Strobe count.
    #[serde(rename = "N", default = "default_strobes")]
    pub strobes: usize,
    /// Integration span of `simulate`; `2π·N` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialState>,
    /// Launch action of the phase scan.
    #[serde(rename = "I0", default, skip_serializing_if = "Option::is_none")]
    pub scan_action: Option<f64>,
    #[serde(default = "default_phases")]
    pub phases: usize,
    #[serde(default)]
    pub d_fit: bool,
    /// Named value lists: `h`, `a`, `t`, `I0`, `theta0`, `t0`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub grids: BTreeMap<String, Vec<f64>>,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_strobes() -> usize {
    500
}

fn default_phases() -> usize {
    64
}

impl Default for NumericConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            strobes: default_strobes(),
            horizon: None,
            initial: None,
            scan_action: None,
            phases: default_phases(),
            d_fit: false,
            grids: BTreeMap::new(),
        }
    }
}

impl NumericConfig {
    pub fn grid(&self, name: &str) -> Option<&[f64]> {
        self.grids.get(name).map(Vec::as_slice)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    /// Required in files passed to `run`; subcommands supply it otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub numeric: NumericConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn new(system: SystemSpec, experiment: Experiment) -> Self {
        Self {
            system,
            experiment: Some(experiment),
            numeric: NumericConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
