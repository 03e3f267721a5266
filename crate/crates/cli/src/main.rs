use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use duffing_lab::config::{Experiment, ExperimentConfig, Format};
use duffing_lab::{list_scenarios, run, scenario, HarnessError, RunSummary};

#[derive(Parser)]
#[command(name = "duffing-lab", version, about = "Resonant Duffing oscillator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the builtin scenarios.
    ListScenarios,
    /// Run a full config file or every step of a builtin scenario.
    Run(Source),
    /// Lazer-Leach quantities, regime and optional d fit.
    Conditions(Source),
    /// Angle averages [f1], beta and [f2] over an energy grid.
    Averages(Source),
    /// Oscillatory circle means and psi averages.
    Oscillatory(Source),
    /// Every accepted integrator step up to the horizon.
    Simulate(Source),
    /// Strobe iterates and rotation number.
    Poincare(Source),
    /// Strobe iterates and bounded/escaping verdict.
    Classify(Source),
    /// Verdicts for a grid of initial states.
    Sweep(Source),
    /// Verdicts for launch phases spread over one forcing period.
    EscapeScan(Source),
    /// Residuals of the first-order generating functions.
    NormalformCheck(Source),
}

#[derive(Args)]
struct Source {
    /// Experiment config file (JSON).
    #[arg(long, conflicts_with = "scenario")]
    system: Option<PathBuf>,
    /// Builtin scenario name.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory (scenarios write into DIR/<name>/<step>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    /// Strobe count N.
    #[arg(long)]
    strobes: Option<usize>,
    /// Comma-separated subset of csv,json.
    #[arg(long, value_delimiter = ',', value_parser = parse_format)]
    format: Option<Vec<Format>>,
    /// Fit the critical exponent d (conditions only).
    #[arg(long)]
    d_fit: bool,
}

fn parse_format(s: &str) -> Result<Format, String> {
    match s {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        other => Err(format!("unknown format {other:?}, expected csv or json")),
    }
}

impl Source {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(t) = self.tol {
            cfg.numeric.tol = t;
        }
        if let Some(n) = self.strobes {
            cfg.numeric.strobes = n;
        }
        if let Some(f) = &self.format {
            cfg.output.formats = f.clone();
        }
        if self.d_fit {
            cfg.numeric.d_fit = true;
        }
    }

    /// Configs to run: one from a file, or the matching scenario steps.
    fn configs(&self, experiment: Option<Experiment>) -> Result<Vec<ExperimentConfig>, HarnessError> {
        let mut configs = match (&self.system, &self.scenario) {
            (Some(path), None) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display())))?;
                let mut cfg = ExperimentConfig::from_json(&text)
                    .map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display())))?;
                if experiment.is_some() {
                    cfg.experiment = experiment;
                }
                if let Some(out) = &self.out {
                    cfg.output.dir = out.clone();
                }
                vec![cfg]
            }
            (None, Some(name)) => {
                let root = self.out.clone().unwrap_or_else(|| PathBuf::from("out"));
                let sc = scenario(name)
                    .ok_or_else(|| HarnessError::Validation(format!("unknown scenario {name:?}")))?
                    .with_output_root(&root);
                let picked: Vec<ExperimentConfig> = sc
                    .steps
                    .into_iter()
                    .map(|(_, cfg)| cfg)
                    .filter(|cfg| experiment.is_none() || cfg.experiment == experiment)
                    .collect();
                if picked.is_empty() {
                    return Err(HarnessError::Validation(format!(
                        "scenario {name:?} has no {} step",
                        experiment.map(|e| e.command()).unwrap_or("")
                    )));
                }
                picked
            }
            _ => return Err(HarnessError::Validation("give exactly one of --system or --scenario".into())),
        };
        for cfg in &mut configs {
            self.apply(cfg);
        }
        Ok(configs)
    }
}

fn report(summary: &RunSummary) {
    match &summary.report {
        Some(json) => println!("{json}"),
        None => {
            for f in &summary.files {
                println!("{}", f.display());
            }
        }
    }
}

fn execute(source: &Source, experiment: Option<Experiment>) -> Result<(), HarnessError> {
    for cfg in source.configs(experiment)? {
        report(&run(&cfg)?);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (source, experiment) = match &cli.command {
        Command::ListScenarios => {
            for (name, description) in list_scenarios() {
                println!("{name}\t{description}");
            }
            return ExitCode::SUCCESS;
        }
        Command::Run(s) => (s, None),
        Command::Conditions(s) => (s, Some(Experiment::Conditions)),
        Command::Averages(s) => (s, Some(Experiment::Averages)),
        Command::Oscillatory(s) => (s, Some(Experiment::Oscillatory)),
        Command::Simulate(s) => (s, Some(Experiment::Simulate)),
        Command::Poincare(s) => (s, Some(Experiment::Poincare)),
        Command::Classify(s) => (s, Some(Experiment::Classify)),
        Command::Sweep(s) => (s, Some(Experiment::Sweep)),
        Command::EscapeScan(s) => (s, Some(Experiment::EscapeScan)),
        Command::NormalformCheck(s) => (s, Some(Experiment::NormalformCheck)),
    };
    match execute(source, experiment) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
