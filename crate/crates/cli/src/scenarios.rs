//! Builtin reproduction scenarios.

use std::f64::consts::TAU;
use std::path::Path;

use duffing_core::action_angle::{ActionAngleState, PhaseState};
use duffing_core::fit::geometric_grid;
use duffing_core::{FunctionSpec, SystemSpec};

use crate::config::{Experiment, ExperimentConfig, InitialState};
use crate::run::{run, HarnessError, RunSummary};

pub struct Scenario {
    pub name: &'static str,
    pub description: &'static str,
    /// Labelled steps; each writes into `<out>/<name>/<label>`.
    pub steps: Vec<(&'static str, ExperimentConfig)>,
}

fn cos_forcing(a: f64) -> FunctionSpec {
    FunctionSpec::trig(TAU, 0.0, vec![a], vec![])
}

fn system(n: u32, g: FunctionSpec, psi: Option<FunctionSpec>, p: FunctionSpec) -> SystemSpec {
    SystemSpec {
        n,
        g,
        psi_period: psi.as_ref().map(|_| TAU),
        psi,
        p,
    }
}

fn step(sys: &SystemSpec, exp: Experiment, edit: impl FnOnce(&mut ExperimentConfig)) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(sys.clone(), exp);
    edit(&mut cfg);
    cfg
}

fn action_start(action: f64) -> Option<InitialState> {
    Some(InitialState::Action(ActionAngleState {
        action,
        theta: 0.0,
        t: 0.0,
    }))
}

/// Above the Lazer-Leach threshold: `g = arctan`, `p = 4 cos t`.
fn ding() -> Scenario {
    let sys = system(1, FunctionSpec::arctan(1.0), None, cos_forcing(4.0));
    Scenario {
        name: "ding",
        description: "arctan restoring force with p = 4cos t; forcing exceeds the threshold and orbits escape",
        steps: vec![
            ("conditions", step(&sys, Experiment::Conditions, |_| {})),
            (
                "classify",
                step(&sys, Experiment::Classify, |c| {
                    c.numeric.initial = action_start(25.0);
                    c.numeric.strobes = 500;
                }),
            ),
        ],
    }
}

/// Below the threshold with an oscillating potential `ψ = sin x`.
fn ll_bounded() -> Scenario {
    let psi = FunctionSpec::trig(TAU, 0.0, vec![], vec![1.0]);
    let sys = system(1, FunctionSpec::arctan(1.0), Some(psi), cos_forcing(1.0));
    let count = 20;
    let thetas: Vec<f64> = (0..count)
        .map(|i| -0.6 + 1.2 * i as f64 / (count - 1) as f64)
        .collect();
    Scenario {
        name: "ll-bounded",
        description: "arctan restoring force, psi = sin x, p = cos t; forcing below the threshold and orbits stay bounded",
        steps: vec![
            ("conditions", step(&sys, Experiment::Conditions, |_| {})),
            (
                "sweep",
                step(&sys, Experiment::Sweep, |c| {
                    c.numeric.strobes = 2000;
                    c.numeric.grids.insert("I0".into(), geometric_grid(50.0, 500.0, count));
                    c.numeric.grids.insert("theta0".into(), thetas);
                }),
            ),
        ],
    }
}

/// `g = arctan x + c(1−d)·x(1+x²)^(−(1+d)/2)`, `d = 1/3`, `c = 30`.
pub fn critical_low_g() -> FunctionSpec {
    FunctionSpec::sum([
        FunctionSpec::arctan(1.0),
        FunctionSpec::algebraic_tail(20.0, 2.0 / 3.0),
    ])
}

/// `d = 3/2`, `c = 1`, with `x/(1+x²)` cancelling the `1/x` tail of arctan.
pub fn critical_high_g() -> FunctionSpec {
    FunctionSpec::sum([
        FunctionSpec::arctan(1.0),
        FunctionSpec::algebraic_tail(-0.5, 1.25),
        FunctionSpec::rational1(1.0),
    ])
}

/// Launch action of the critical phase scans.
pub const CRITICAL_SCAN_ACTION: f64 = 1e4;

/// Equality `A = B` with a slowly (`d < 1`) and a quickly (`d > 1`)
/// decaying correction to arctan.
fn critical_pair() -> Scenario {
    let mut steps = Vec::new();
    for (label_c, label_s, g) in [
        ("low/conditions", "low/escape-scan", critical_low_g()),
        ("high/conditions", "high/escape-scan", critical_high_g()),
    ] {
        let sys = system(1, g, None, cos_forcing(2.0));
        steps.push((label_c, step(&sys, Experiment::Conditions, |c| c.numeric.d_fit = true)));
        steps.push((
            label_s,
            step(&sys, Experiment::EscapeScan, |c| {
                c.numeric.scan_action = Some(CRITICAL_SCAN_ACTION);
                c.numeric.phases = 64;
                c.numeric.strobes = 2000;
            }),
        ));
    }
    Scenario {
        name: "critical-pair",
        description: "critical forcing p = 2cos t against tail corrections with d = 1/3 (bounded) and d = 3/2 (escaping)",
        steps,
    }
}

/// Unperturbed resonance `ẍ + x = sin t`.
fn linear_resonance() -> Scenario {
    let sys = system(1, FunctionSpec::zero(), None, FunctionSpec::trig(TAU, 0.0, vec![], vec![1.0]));
    Scenario {
        name: "linear-resonance",
        description: "linear oscillator driven at its own frequency; amplitude grows linearly in time",
        steps: vec![
            ("conditions", step(&sys, Experiment::Conditions, |_| {})),
            (
                "simulate",
                step(&sys, Experiment::Simulate, |c| {
                    c.numeric.tol = 1e-12;
                    c.numeric.initial = Some(InitialState::Phase(PhaseState::new(0.0, 0.0, 0.0)));
                    c.numeric.horizon = Some(50.0 * TAU);
                }),
            ),
        ],
    }
}

/// Angle averages of `ψ = cos x` and of `g = arctan`.
fn oscillating_average() -> Scenario {
    let psi = FunctionSpec::trig(TAU, 0.0, vec![1.0], vec![]);
    let sys = system(1, FunctionSpec::arctan(1.0), Some(psi), FunctionSpec::zero());
    Scenario {
        name: "oscillating-average",
        description: "circle means of cos(a cos phi) and of psi = cos x, decaying like a^(-1/2) and h^(-1/4)",
        steps: vec![
            (
                "oscillatory",
                step(&sys, Experiment::Oscillatory, |c| {
                    c.numeric.grids.insert("a".into(), geometric_grid(1e2, 1e6, 41));
                    c.numeric.grids.insert("h".into(), geometric_grid(1e4, 1e8, 200));
                }),
            ),
            (
                "averages",
                step(&sys, Experiment::Averages, |c| {
                    c.numeric.grids.insert("h".into(), geometric_grid(1e2, 1e8, 13));
                }),
            ),
        ],
    }
}

/// Every builtin scenario, in catalog order.
pub fn builtin_scenarios() -> Vec<Scenario> {
    vec![ding(), ll_bounded(), critical_pair(), linear_resonance(), oscillating_average()]
}

/// `(name, description)` pairs in catalog order.
pub fn list_scenarios() -> Vec<(&'static str, &'static str)> {
    builtin_scenarios().iter().map(|s| (s.name, s.description)).collect()
}

pub fn scenario(name: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}

impl Scenario {
    /// Points every step at `<root>/<name>/<label>`.
    pub fn with_output_root(mut self, root: &Path) -> Self {
        for (label, cfg) in &mut self.steps {
            cfg.output.dir = root.join(self.name).join(label);
        }
        self
    }

    /// Runs every step in order, stopping at the first failure.
    pub fn run(&self) -> Result<Vec<RunSummary>, HarnessError> {
        self.steps.iter().map(|(_, cfg)| run(cfg)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_contents() {
        let names: Vec<&str> = list_scenarios().iter().map(|s| s.0).collect();
        assert!(names.contains(&"ding"));
        assert!(names.contains(&"critical-pair"));
        assert!(names.len() >= 4);
        assert_eq!(names, list_scenarios().iter().map(|s| s.0).collect::<Vec<_>>());
    }

    #[test]
    fn every_step_has_an_experiment_and_valid_system() {
        for s in builtin_scenarios() {
            for (label, cfg) in &s.steps {
                assert!(cfg.experiment.is_some(), "{}/{label}", s.name);
                duffing_core::DuffingSystem::from_spec(&cfg.system).unwrap();
            }
        }
    }

    #[test]
    fn output_root_is_applied() {
        let s = scenario("ding").unwrap().with_output_root(Path::new("/tmp/x"));
        assert_eq!(s.steps[1].1.output.dir, Path::new("/tmp/x/ding/classify"));
    }
}
