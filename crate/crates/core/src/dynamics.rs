//! Long-horizon integration, the time-`2π` strobe map, rotation numbers and
//! orbit classification.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action_angle::{from_action_angle, ActionAngleState, PhaseState};
use crate::error::{Error, Result};
use crate::fit::{fit_log_log, DecayFit, MIN_FIT_POINTS};
use crate::integrator::{self, IntegratorStats, Options};
use crate::system::DuffingSystem;

pub const MIN_TOL: f64 = 1e-14;
pub const MAX_TOL: f64 = 1e-6;
/// Orbits stop once the action exceeds this value.
pub const ACTION_CEILING: f64 = 1e12;
pub const ESCAPE_FACTOR: f64 = 4.0;
pub const CONFINE_FACTOR: f64 = 3.0;
/// Iterates needed by [`rotation_number`].
pub const MIN_ROTATION_ITERATES: usize = 50;
/// Strobes per grid point in [`twist_scaling_check`].
pub const TWIST_STROBES: usize = 64;

fn check_tol(tol: f64) -> Result<()> {
    if !(MIN_TOL..=MAX_TOL).contains(&tol) {
        return Err(Error::InvalidInput(format!(
            "tolerance {tol:e} outside [{MIN_TOL:e}, {MAX_TOL:e}]"
        )));
    }
    Ok(())
}

/// Largest step allowed while an angle is being tracked: eight samples per
/// unperturbed turn.
pub fn lift_max_step(sys: &DuffingSystem) -> f64 {
    TAU / (8.0 * sys.nf())
}

fn options(sys: &DuffingSystem, tol: f64) -> Options {
    Options::with_tol(tol).max_step(lift_max_step(sys))
}

/// Flow from `s0` to `t1` in either time direction. `observer` sees every
/// accepted step.
pub fn flow<O>(sys: &DuffingSystem, s0: PhaseState, t1: f64, tol: f64, observer: O) -> Result<(PhaseState, IntegratorStats)>
where
    O: FnMut(f64, &[f64; 2]),
{
    check_tol(tol)?;
    if !(s0.x.is_finite() && s0.y.is_finite() && s0.t.is_finite() && t1.is_finite()) {
        return Err(Error::InvalidInput("non-finite state or end time".into()));
    }
    let (y, stats) = integrator::integrate(|t, s| sys.rhs(t, s), s0.t, s0.as_array(), t1, &options(sys, tol), observer)?;
    Ok((PhaseState::new(y[0], y[1], t1), stats))
}

/// Forward integration to `t1 ≥ s0.t`.
pub fn integrate(sys: &DuffingSystem, s0: PhaseState, t1: f64, tol: f64) -> Result<(PhaseState, IntegratorStats)> {
    if t1 < s0.t {
        return Err(Error::InvalidInput(format!("end time {t1} precedes start {}", s0.t)));
    }
    flow(sys, s0, t1, tol, |_, _| {})
}

/// One period `2π` of the forcing.
pub fn strobe_map(sys: &DuffingSystem, s: PhaseState, tol: f64) -> Result<(PhaseState, IntegratorStats)> {
    integrate(sys, s, s.t + TAU, tol)
}

/// Polar phase that advances by `+n·t` under the linear flow.
fn phase(x: f64, y: f64) -> f64 {
    (-y).atan2(x)
}

/// `a − b` reduced to `(−π, π]`.
fn wrap(d: f64) -> f64 {
    let r = d.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub k: usize,
    pub t: f64,
    #[serde(rename = "I")]
    pub action: f64,
    /// Unwrapped phase `atan2(−y, x)`, continuous along the orbit.
    pub theta_lift: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub system_id: String,
    pub initial: PhaseState,
    pub iterates: Vec<Iterate>,
    pub integrator_stats: IntegratorStats,
    /// The action crossed [`ACTION_CEILING`] and the orbit was cut short.
    pub escaped: bool,
}

impl OrbitRecord {
    pub fn initial_action(&self) -> f64 {
        self.iterates[0].action
    }

    pub fn strobes(&self) -> usize {
        self.iterates.len() - 1
    }
}

fn iterate(k: usize, s: &PhaseState, n: f64, lift: f64) -> Iterate {
    Iterate {
        k,
        t: s.t,
        action: 0.5 * n * (s.x * s.x + s.y * s.y),
        theta_lift: lift,
        x: s.x,
        y: s.y,
    }
}

/// `strobes` iterates of the strobe map starting at `s0`.
pub fn orbit(sys: &DuffingSystem, system_id: &str, s0: PhaseState, strobes: usize, tol: f64) -> Result<OrbitRecord> {
    if strobes == 0 {
        return Err(Error::InvalidInput("an orbit needs at least one strobe".into()));
    }
    check_tol(tol)?;
    let n = sys.nf();
    let mut lift = phase(s0.x, s0.y);
    let mut iterates = Vec::with_capacity(strobes + 1);
    iterates.push(iterate(0, &s0, n, lift));
    let mut stats = IntegratorStats::default();
    let mut s = s0;
    let mut escaped = false;
    for k in 1..=strobes {
        let t1 = s0.t + TAU * k as f64;
        let mut last = phase(s.x, s.y);
        let (next, st) = flow(sys, s, t1, tol, |_, y| {
            let ph = phase(y[0], y[1]);
            lift += wrap(ph - last);
            last = ph;
        })?;
        stats.merge(&st);
        s = next;
        let it = iterate(k, &s, n, lift);
        iterates.push(it);
        if it.action > ACTION_CEILING {
            escaped = true;
            break;
        }
    }
    Ok(OrbitRecord {
        system_id: system_id.to_string(),
        initial: s0,
        iterates,
        integrator_stats: stats,
        escaped,
    })
}

/// Mean lifted advance per strobe divided by `2π`.
pub fn rotation_number(rec: &OrbitRecord) -> Result<f64> {
    if rec.escaped {
        return Err(Error::NotApplicable("orbit escaped".into()));
    }
    let m = rec.strobes();
    if m < MIN_ROTATION_ITERATES {
        return Err(Error::NotApplicable(format!(
            "{m} iterates, need at least {MIN_ROTATION_ITERATES}"
        )));
    }
    let first = rec.iterates[0].theta_lift;
    let last = rec.iterates[m].theta_lift;
    Ok((last - first) / (TAU * m as f64))
}

/// Starting state with action `action`, angle `theta` and time `t`.
pub fn launch(sys: &DuffingSystem, action: f64, theta: f64, t: f64) -> Result<PhaseState> {
    from_action_angle(ActionAngleState { action, theta, t }, sys.n())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistReport {
    /// `(I, ω(I))`.
    pub samples: Vec<(f64, f64)>,
    /// Fit of `|ω − n|` against `I`.
    pub fit: DecayFit,
    /// `sign(ω − n)` equals `sign(g(+∞) − g(−∞))` at every grid point.
    pub sign_consistent: bool,
    pub expected_sign: f64,
}

/// Rotation numbers of the autonomous restriction along `grid`.
pub fn twist_scaling_check(sys: &DuffingSystem, grid: &[f64], tol: f64) -> Result<TwistReport> {
    let auto = sys.autonomous();
    let jump = auto.delta_g();
    if jump.abs() <= 1e-12 * auto.sup_g().max(1.0) {
        return Err(Error::FitDegenerate("g has equal limits at ±∞, no twist".into()));
    }
    if grid.len() < MIN_FIT_POINTS {
        return Err(Error::FitDegenerate(format!("{} grid points", grid.len())));
    }
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    if !(lo > 0.0 && hi / lo >= 1e3) {
        return Err(Error::InvalidInput("action grid must span at least three decades".into()));
    }
    let n = auto.nf();
    let samples = grid
        .par_iter()
        .map(|&action| {
            let s0 = launch(&auto, action, 0.0, 0.0)?;
            let rec = orbit(&auto, "twist", s0, TWIST_STROBES, tol)?;
            Ok((action, rotation_number(&rec)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let expected_sign = jump.signum();
    let sign_consistent = samples.iter().all(|&(_, w)| (w - n).signum() == expected_sign);
    let deviations: Vec<(f64, f64)> = samples.iter().map(|&(i, w)| (i, w - n)).collect();
    let fit = fit_log_log(&deviations, MIN_FIT_POINTS)?;
    Ok(TwistReport {
        samples,
        fit,
        sign_consistent,
        expected_sign,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    BoundedEvidence,
    Escaping,
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationVerdict {
    pub verdict: Verdict,
    #[serde(rename = "initial_I")]
    pub initial_action: f64,
    #[serde(rename = "max_I")]
    pub max_action: f64,
    #[serde(rename = "min_I")]
    pub min_action: f64,
    /// `ln I` against `ln(t − t₀)` over the final half of the record.
    pub growth_fit: Option<DecayFit>,
    pub horizon_strobes: usize,
    pub escaped: bool,
}

/// Fit of the action against elapsed time on the final half of the record.
pub fn tail_growth_fit(rec: &OrbitRecord) -> Option<DecayFit> {
    let m = rec.strobes();
    let t0 = rec.initial.t;
    let pts: Vec<(f64, f64)> = rec.iterates[(m / 2).max(1)..]
        .iter()
        .map(|it| (it.t - t0, it.action))
        .collect();
    fit_log_log(&pts, MIN_FIT_POINTS).ok()
}

pub fn classify_orbit(rec: &OrbitRecord, escape_factor: f64, confine_factor: f64) -> ClassificationVerdict {
    let i0 = rec.initial_action();
    let (lo, hi) = rec
        .iterates
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), it| (lo.min(it.action), hi.max(it.action)));
    let growth_fit = tail_growth_fit(rec);
    let growing = growth_fit.as_ref().is_some_and(|f| f.slope > 0.0);
    let verdict = if hi >= escape_factor * i0 && (growing || rec.escaped) {
        Verdict::Escaping
    } else if hi <= confine_factor * i0 {
        Verdict::BoundedEvidence
    } else {
        Verdict::Undecided
    };
    ClassificationVerdict {
        verdict,
        initial_action: i0,
        max_action: hi,
        min_action: lo,
        growth_fit,
        horizon_strobes: rec.strobes(),
        escaped: rec.escaped,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for FailureRecord {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub index: usize,
    pub initial: PhaseState,
    pub verdict: Option<ClassificationVerdict>,
    pub failure: Option<FailureRecord>,
}

fn classify_from(sys: &DuffingSystem, id: &str, index: usize, s0: PhaseState, strobes: usize, tol: f64) -> SweepEntry {
    match orbit(sys, id, s0, strobes, tol) {
        Ok(rec) => SweepEntry {
            index,
            initial: s0,
            verdict: Some(classify_orbit(&rec, ESCAPE_FACTOR, CONFINE_FACTOR)),
            failure: None,
        },
        Err(e) => SweepEntry {
            index,
            initial: s0,
            verdict: None,
            failure: Some((&e).into()),
        },
    }
}

/// Orbit and classify every initial state; entries come back in input order.
pub fn sweep(sys: &DuffingSystem, grid: &[PhaseState], strobes: usize, tol: f64) -> Result<Vec<SweepEntry>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty initial grid".into()));
    }
    check_tol(tol)?;
    Ok(grid
        .par_iter()
        .enumerate()
        .map(|(i, &s0)| classify_from(sys, "sweep", i, s0, strobes, tol))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub phase_index: usize,
    pub t0: f64,
    pub entry: SweepEntry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeScan {
    #[serde(rename = "I0")]
    pub initial_action: f64,
    pub phases: usize,
    pub strobes: usize,
    pub entries: Vec<ScanEntry>,
    /// Phase with the largest maximal action among completed orbits.
    pub best_phase: Option<usize>,
    pub best: Option<ClassificationVerdict>,
    pub escaping: usize,
}

/// Orbits from `(I₀, θ = 0, t₀ = 2πk/phases)` for every `k`.
pub fn critical_escape_scan(sys: &DuffingSystem, initial_action: f64, phases: usize, strobes: usize, tol: f64) -> Result<EscapeScan> {
    if phases < 32 {
        return Err(Error::InvalidInput(format!("{phases} phases, need at least 32")));
    }
    check_tol(tol)?;
    let starts = (0..phases)
        .map(|k| {
            let t0 = TAU * k as f64 / phases as f64;
            launch(sys, initial_action, 0.0, t0)
        })
        .collect::<Result<Vec<_>>>()?;
    let entries: Vec<ScanEntry> = starts
        .par_iter()
        .enumerate()
        .map(|(k, &s0)| ScanEntry {
            phase_index: k,
            t0: s0.t,
            entry: classify_from(sys, "escape-scan", k, s0, strobes, tol),
        })
        .collect();
    let mut best: Option<(usize, &ClassificationVerdict)> = None;
    for e in &entries {
        if let Some(v) = &e.entry.verdict {
            if best.is_none_or(|(_, b)| v.max_action > b.max_action) {
                best = Some((e.phase_index, v));
            }
        }
    }
    let escaping = entries
        .iter()
        .filter(|e| e.entry.verdict.as_ref().is_some_and(|v| v.verdict == Verdict::Escaping))
        .count();
    let (best_phase, best) = match best {
        Some((k, v)) => (Some(k), Some(v.clone())),
        None => (None, None),
    };
    Ok(EscapeScan {
        initial_action,
        phases,
        strobes,
        entries,
        best_phase,
        best,
        escaping,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function::{FunctionSpec, TrigPoly};

    fn linear(n: u32) -> DuffingSystem {
        DuffingSystem::new(n, FunctionSpec::zero(), None, FunctionSpec::zero()).unwrap()
    }

    fn forced(n: u32, g: FunctionSpec, p: TrigPoly) -> DuffingSystem {
        DuffingSystem::new(n, g, None, FunctionSpec::TrigPoly(p)).unwrap()
    }

    fn close(a: &PhaseState, b: &PhaseState) -> f64 {
        (a.x - b.x).abs().max((a.y - b.y).abs())
    }

    #[test]
    fn linear_period_closes() {
        for n in 1..=3 {
            let sys = linear(n);
            let s0 = PhaseState::new(0.7, -1.3, 0.4);
            let (s1, _) = strobe_map(&sys, s0, 1e-12).unwrap();
            assert!(close(&s0, &s1) < 1e-9, "n={n}");
            assert!((s1.t - s0.t - TAU).abs() < 1e-15);
        }
    }

    #[test]
    fn resonant_linear_closed_form() {
        for n in [1u32, 2] {
            let nf = n as f64;
            let mut sin = vec![0.0; n as usize];
            sin[n as usize - 1] = 1.0;
            let sys = forced(n, FunctionSpec::zero(), TrigPoly::new(TAU, 0.0, vec![], sin).unwrap());
            let t1 = TAU * 50.0;
            let (s, _) = integrate(&sys, PhaseState::new(0.0, 0.0, 0.0), t1, 1e-12).unwrap();
            let x = -(t1 / (2.0 * nf)) * (nf * t1).cos() + (nf * t1).sin() / (2.0 * nf * nf);
            let xdot = -(nf * t1).cos() / (2.0 * nf) + t1 / 2.0 * (nf * t1).sin() + (nf * t1).cos() / (2.0 * nf);
            let y = xdot / nf;
            let scale = x.abs().max(y.abs());
            assert!((s.x - x).abs() / scale < 1e-6 && (s.y - y).abs() / scale < 1e-6, "n={n}");
        }
    }

    #[test]
    fn forward_backward_round_trip() {
        let tol = 1e-12;
        let p = TrigPoly::new(TAU, 0.0, vec![0.0, 1.5], vec![0.3]).unwrap();
        let systems = [
            linear(2),
            forced(1, FunctionSpec::arctan(1.0), p.clone()),
            DuffingSystem::new(
                1,
                FunctionSpec::arctan(1.0),
                Some((FunctionSpec::TrigPoly(TrigPoly::new(TAU, 0.0, vec![], vec![1.0]).unwrap()), TAU)),
                FunctionSpec::TrigPoly(p),
            )
            .unwrap(),
        ];
        for sys in &systems {
            for action in [10.0, 1e2, 1e4] {
                let s0 = launch(sys, action, 0.3, 0.25).unwrap();
                let (s1, _) = flow(sys, s0, s0.t + TAU, tol, |_, _| {}).unwrap();
                let (back, _) = flow(sys, s1, s0.t, tol, |_, _| {}).unwrap();
                let scale = s0.x.hypot(s0.y);
                assert!(close(&back, &s0) <= 10.0 * tol * scale, "I={action}: {back:?}");
            }
        }
    }

    #[test]
    fn strobe_composition_matches_direct() {
        let tol = 1e-10;
        let sys = forced(1, FunctionSpec::arctan(1.0), TrigPoly::new(TAU, 0.0, vec![1.0], vec![]).unwrap());
        let s0 = PhaseState::new(5.0, 1.0, 0.0);
        let (a, _) = strobe_map(&sys, s0, tol).unwrap();
        let (a, _) = strobe_map(&sys, a, tol).unwrap();
        let (b, _) = integrate(&sys, s0, 2.0 * TAU, tol).unwrap();
        let scale = s0.x.hypot(s0.y);
        assert!(close(&a, &b) <= 2.0 * tol * scale, "{}", close(&a, &b));
    }

    #[test]
    fn strobe_error_shrinks_with_tolerance() {
        let sys = forced(1, FunctionSpec::arctan(1.0), TrigPoly::new(TAU, 0.0, vec![1.0], vec![]).unwrap());
        let s0 = launch(&sys, 50.0, 0.3, 0.0).unwrap();
        let reference = strobe_map(&sys, s0, 1e-13).unwrap().0;
        let errs: Vec<f64> = [1e-7, 1e-9, 1e-11]
            .iter()
            .map(|&tol| close(&strobe_map(&sys, s0, tol).unwrap().0, &reference))
            .collect();
        assert!(errs[0] >= 4.0 * errs[1] && errs[1] >= 4.0 * errs[2], "{errs:?}");
    }

    #[test]
    fn energy_conserved_along_strobes() {
        let sys = DuffingSystem::new(2, FunctionSpec::arctan(1.0), None, FunctionSpec::zero()).unwrap();
        let mut s = PhaseState::new(4.0, 0.0, 0.0);
        let e0 = sys.energy(s.x, s.y);
        for _ in 0..20 {
            s = strobe_map(&sys, s, 1e-12).unwrap().0;
            assert!(((sys.energy(s.x, s.y) - e0) / e0).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_orbit_keeps_action_and_rotates_n() {
        for n in [1u32, 3] {
            let sys = linear(n);
            let s0 = launch(&sys, 40.0, 0.3, 0.0).unwrap();
            let rec = orbit(&sys, "linear", s0, 100, 1e-12).unwrap();
            assert_eq!(rec.iterates.len(), 101);
            assert!(rec.iterates.iter().enumerate().all(|(k, it)| it.k == k));
            assert!(rec.iterates.iter().all(|it| (it.action / 40.0 - 1.0).abs() < 1e-9));
            assert!((rotation_number(&rec).unwrap() - n as f64).abs() < 1e-9);
            let v = classify_orbit(&rec, ESCAPE_FACTOR, CONFINE_FACTOR);
            assert_eq!(v.verdict, Verdict::BoundedEvidence);
            assert!((v.max_action / v.min_action - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn short_records_have_no_rotation_number() {
        let sys = linear(1);
        let rec = orbit(&sys, "linear", PhaseState::new(1.0, 0.0, 0.0), 10, 1e-10).unwrap();
        assert!(matches!(rotation_number(&rec), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn rotation_estimate_converges_with_length() {
        let sys = DuffingSystem::new(1, FunctionSpec::arctan(1.0), None, FunctionSpec::zero()).unwrap();
        let s0 = launch(&sys, 1e4, 0.0, 0.0).unwrap();
        let rec = orbit(&sys, "arctan", s0, 200, 1e-11).unwrap();
        let mut short = rec.clone();
        short.iterates.truncate(101);
        let (r1, r2) = (rotation_number(&short).unwrap(), rotation_number(&rec).unwrap());
        assert!((r1 - r2).abs() <= TAU / 100.0);
        assert!(r2 > 1.0);
    }

    #[test]
    fn tolerance_is_range_checked() {
        let sys = linear(1);
        let s0 = PhaseState::new(1.0, 0.0, 0.0);
        assert!(integrate(&sys, s0, 1.0, 1e-5).is_err());
        assert!(integrate(&sys, s0, 1.0, 1e-15).is_err());
        assert!(integrate(&sys, s0, -1.0, 1e-10).is_err());
    }

    #[test]
    fn equal_limits_have_no_twist() {
        let g = FunctionSpec::rational1(1.0);
        let sys = DuffingSystem::new(1, g, None, FunctionSpec::zero()).unwrap();
        let grid = crate::fit::geometric_grid(1e2, 1e6, 8);
        assert!(matches!(twist_scaling_check(&sys, &grid, 1e-10), Err(Error::FitDegenerate(_))));
    }

    #[test]
    fn phase_scan_of_linear_system_is_bounded() {
        let sys = forced(1, FunctionSpec::zero(), TrigPoly::new(TAU, 0.0, vec![0.0, 1.0], vec![]).unwrap());
        let scan = critical_escape_scan(&sys, 100.0, 32, 20, 1e-10).unwrap();
        assert_eq!(scan.entries.len(), 32);
        assert_eq!(scan.escaping, 0);
        assert!(scan
            .entries
            .iter()
            .all(|e| e.entry.verdict.as_ref().unwrap().verdict == Verdict::BoundedEvidence));
    }
}
