use std::f64::consts::TAU;

use duffing_core::resonance::*;
use duffing_core::{DuffingSystem, FunctionSpec};

fn critical(g: FunctionSpec) -> DuffingSystem {
    DuffingSystem::new(1, g, None, FunctionSpec::trig(TAU, 0.0, vec![2.0], vec![])).unwrap()
}

#[test]
fn slow_tail_is_predicted_bounded() {
    let sys = critical(FunctionSpec::sum([
        FunctionSpec::arctan(1.0),
        FunctionSpec::algebraic_tail(20.0, 2.0 / 3.0),
    ]));
    let report = lazer_leach_report(&sys).unwrap();
    assert_eq!(report.regime, Regime::Critical);
    let est = critical_d_estimate(&sys, D_FIT_WINDOW.0, D_FIT_WINDOW.1, D_FIT_POINTS).unwrap();
    assert!((est.implied_d - 1.0 / 3.0).abs() < 0.06, "{}", est.implied_d);
    assert_eq!(classify_theorem(&report, Some(&est)), Prediction::Bounded);
}

#[test]
fn fast_tail_is_predicted_unbounded() {
    let sys = critical(FunctionSpec::sum([
        FunctionSpec::arctan(1.0),
        FunctionSpec::algebraic_tail(-0.5, 1.25),
        FunctionSpec::rational1(1.0),
    ]));
    let report = lazer_leach_report(&sys).unwrap();
    assert_eq!(report.regime, Regime::Critical);
    let est = critical_d_estimate(&sys, D_FIT_WINDOW.0, D_FIT_WINDOW.1, D_FIT_POINTS).unwrap();
    assert!(est.implied_d > 1.05, "{}", est.implied_d);
    assert_eq!(classify_theorem(&report, Some(&est)), Prediction::Unbounded);
}

#[test]
fn report_serializes_with_fixed_field_names() {
    let sys = critical(FunctionSpec::arctan(1.0));
    let json = serde_json::to_value(lazer_leach_report(&sys).unwrap()).unwrap();
    let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    for k in ["lhs_A", "rhs_B", "regime", "relative_gap", "predicted"] {
        assert!(keys.contains(&k), "{k}");
    }
    assert_eq!(json["regime"], "Critical");
}

#[test]
fn quadratic_tail_scan_shows_growth() {
    use duffing_core::dynamics::critical_escape_scan;
    let sys = critical(FunctionSpec::sum([
        FunctionSpec::arctan(1.0),
        FunctionSpec::algebraic_tail(-10.0, 1.5),
        FunctionSpec::rational1(1.0),
    ]));
    let scan = critical_escape_scan(&sys, 1e4, 32, 2000, 1e-10).unwrap();
    let best = scan.best.unwrap();
    let slope = best.growth_fit.unwrap().slope;
    assert!(slope > 0.0, "{slope}");
    assert!(best.max_action > best.initial_action);
}

#[test]
fn slow_tail_scan_has_no_escapes() {
    use duffing_core::dynamics::{critical_escape_scan, Verdict};
    let sys = critical(FunctionSpec::sum([
        FunctionSpec::arctan(1.0),
        FunctionSpec::algebraic_tail(20.0, 2.0 / 3.0),
    ]));
    let scan = critical_escape_scan(&sys, 1e4, 32, 2000, 1e-10).unwrap();
    assert_eq!(scan.escaping, 0);
    for e in &scan.entries {
        let v = e.entry.verdict.as_ref().unwrap();
        assert!(matches!(v.verdict, Verdict::BoundedEvidence | Verdict::Undecided));
    }
}
