//! Dispatch of one experiment and persistence of its artifacts.

use std::f64::consts::TAU;
use std::fmt;
use std::path::{Path, PathBuf};

use duffing_core::action_angle::{
    avg_f1, avg_f1_derivative_check, avg_f2, from_action_angle, normal_form_check, DerivativeCheck,
    NormalFormCheck, PhaseState,
};
use duffing_core::dynamics::{self, ClassificationVerdict, OrbitRecord, SweepEntry};
use duffing_core::fit::geometric_grid;
use duffing_core::integrator::IntegratorStats;
use duffing_core::oscillatory::{decay_fit_envelope, psi_average, sample, OscillatorySample};
use duffing_core::resonance::{
    beta, beta_derivative, classify_theorem, critical_d_estimate, lazer_leach_report, ConditionReport,
    DEstimate, Prediction, D_FIT_POINTS, D_FIT_WINDOW,
};
use duffing_core::{DecayFit, DuffingSystem, Error as CoreError};
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig, Format, InitialState};
use crate::output::{num, opt_num, write_json, Table};

#[derive(Debug)]
pub enum HarnessError {
    /// Malformed configuration or input outside an operation's domain.
    Validation(String),
    /// A numerical routine failed; details land in `errors.json`.
    Numeric { experiment: Experiment, error: CoreError },
    Io(std::io::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 2,
            HarnessError::Numeric { .. } => 3,
            HarnessError::Io(_) => 1,
        }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Validation(m) => write!(f, "invalid configuration: {m}"),
            HarnessError::Numeric { experiment, error } => write!(f, "{experiment}: {error}"),
            HarnessError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e)
    }
}

/// Core failure inside experiment `exp`.
fn core(exp: Experiment) -> impl Fn(CoreError) -> HarnessError {
    move |error| {
        if error.is_numeric() {
            HarnessError::Numeric { experiment: exp, error }
        } else {
            HarnessError::Validation(error.to_string())
        }
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    experiment: Experiment,
    kind: &'a str,
    message: String,
}

#[derive(Debug)]
pub struct RunSummary {
    pub experiment: Experiment,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    /// JSON document printed by the `conditions` subcommand.
    pub report: Option<String>,
}

struct Ctx<'a> {
    exp: Experiment,
    cfg: &'a ExperimentConfig,
    sys: DuffingSystem,
    dir: &'a Path,
    files: Vec<PathBuf>,
    report: Option<String>,
}

impl Ctx<'_> {
    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), HarnessError> {
        if self.cfg.output.wants(Format::Json) {
            self.files.push(write_json(self.dir, name, value)?);
        }
        Ok(())
    }

    fn csv(&mut self, name: &str, table: &Table) -> Result<(), HarnessError> {
        if self.cfg.output.wants(Format::Csv) {
            self.files.push(table.write(self.dir, name)?);
        }
        Ok(())
    }

    fn tol(&self) -> f64 {
        self.cfg.numeric.tol
    }

    fn strobes(&self) -> usize {
        self.cfg.numeric.strobes
    }

    fn grid_or(&self, name: &str, default: impl FnOnce() -> Vec<f64>) -> Vec<f64> {
        self.cfg.numeric.grid(name).map(<[f64]>::to_vec).unwrap_or_else(default)
    }

    fn initial(&self) -> Result<PhaseState, HarnessError> {
        match self.cfg.numeric.initial {
            Some(InitialState::Phase(p)) => Ok(p),
            Some(InitialState::Action(a)) => from_action_angle(a, self.sys.n()).map_err(core(self.exp)),
            None => Err(HarnessError::Validation(format!("{} needs numeric.initial", self.exp))),
        }
    }
}

fn validate(cfg: &ExperimentConfig) -> Result<Experiment, HarnessError> {
    let exp = cfg
        .experiment
        .ok_or_else(|| HarnessError::Validation("no experiment named".into()))?;
    let tol = cfg.numeric.tol;
    if !(dynamics::MIN_TOL..=dynamics::MAX_TOL).contains(&tol) {
        return Err(HarnessError::Validation(format!("tol {tol:e} outside [1e-14, 1e-6]")));
    }
    if cfg.numeric.strobes == 0 {
        return Err(HarnessError::Validation("N must be at least 1".into()));
    }
    if cfg.output.formats.is_empty() {
        return Err(HarnessError::Validation("no output format selected".into()));
    }
    for (name, values) in &cfg.numeric.grids {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HarnessError::Validation(format!("grid {name} has non-finite values")));
        }
    }
    Ok(exp)
}

/// Runs one experiment, writing the resolved config and all artifacts into
/// `cfg.output.dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    let exp = validate(cfg)?;
    let sys = DuffingSystem::from_spec(&cfg.system).map_err(|e| HarnessError::Validation(e.to_string()))?;
    let dir = cfg.output.dir.as_path();
    let mut ctx = Ctx {
        exp,
        cfg,
        sys,
        dir,
        files: vec![write_json(dir, "config.json", cfg)?],
        report: None,
    };
    let outcome = match exp {
        Experiment::Conditions => conditions(&mut ctx),
        Experiment::Averages => averages(&mut ctx),
        Experiment::Oscillatory => oscillatory(&mut ctx),
        Experiment::Simulate => simulate(&mut ctx),
        Experiment::Poincare => poincare(&mut ctx),
        Experiment::Classify => classify(&mut ctx),
        Experiment::Sweep => sweep(&mut ctx),
        Experiment::EscapeScan => escape_scan(&mut ctx),
        Experiment::NormalformCheck => normalform(&mut ctx),
    };
    if let Err(HarnessError::Numeric { experiment, error }) = &outcome {
        let record = ErrorRecord {
            experiment: *experiment,
            kind: error.kind(),
            message: error.to_string(),
        };
        write_json(dir, "errors.json", &[record])?;
    }
    outcome?;
    Ok(RunSummary {
        experiment: exp,
        dir: dir.to_path_buf(),
        files: ctx.files,
        report: ctx.report,
    })
}

#[derive(Serialize)]
struct DFitSummary {
    slope: f64,
    intercept: f64,
    rms_residual: f64,
    implied_d: f64,
}

#[derive(Serialize)]
struct ConditionsOutput {
    #[serde(flatten)]
    report: ConditionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    d_fit: Option<DFitSummary>,
    theorem_prediction: Prediction,
}

fn conditions(ctx: &mut Ctx) -> Result<(), HarnessError> {
    let exp = ctx.exp;
    let report = lazer_leach_report(&ctx.sys).map_err(core(exp))?;
    let estimate: Option<DEstimate> = if ctx.cfg.numeric.d_fit {
        let (lo, hi, points) = match ctx.cfg.numeric.grid("h") {
            Some(h) if h.len() >= 2 => (h[0], h[h.len() - 1], h.len()),
            _ => (D_FIT_WINDOW.0, D_FIT_WINDOW.1, D_FIT_POINTS),
        };
        Some(critical_d_estimate(&ctx.sys, lo, hi, points).map_err(core(exp))?)
    } else {
        None
    };
    let out = ConditionsOutput {
        theorem_prediction: classify_theorem(&report, estimate.as_ref()),
        d_fit: estimate.as_ref().map(|e| DFitSummary {
            slope: e.fit.slope,
            intercept: e.fit.intercept,
            rms_residual: e.fit.rms_residual,
            implied_d: e.implied_d,
        }),
        report,
    };
    let mut t = Table::new(&[
        "lhs_A",
        "rhs_B",
        "regime",
        "relative_gap",
        "predicted",
        "slope",
        "intercept",
        "rms_residual",
        "implied_d",
        "theorem_prediction",
    ]);
    let d = out.d_fit.as_ref();
    t.push(vec![
        num(out.report.lhs_a),
        num(out.report.rhs_b),
        format!("{:?}", out.report.regime),
        num(out.report.relative_gap),
        format!("{:?}", out.report.predicted),
        opt_num(d.map(|d| d.slope)),
        opt_num(d.map(|d| d.intercept)),
        opt_num(d.map(|d| d.rms_residual)),
        opt_num(d.map(|d| d.implied_d)),
        format!("{:?}", out.theorem_prediction),
    ]);
    ctx.csv("conditions.csv", &t)?;
    if let Some(e) = &estimate {
        let mut t = Table::new(&["h", "beta_prime"]);
        for &(h, v) in &e.samples {
            t.push(vec![num(h), num(v)]);
        }
        ctx.csv("beta_derivative.csv", &t)?;
    }
    ctx.json("conditions.json", &out)?;
    ctx.report = Some(serde_json::to_string_pretty(&out).map_err(std::io::Error::other)?);
    Ok(())
}

#[derive(Serialize)]
struct AverageRow {
    h: f64,
    avg_f1: f64,
    beta: Option<f64>,
    beta_prime: Option<f64>,
    avg_f2_t0: f64,
}

#[derive(Serialize)]
struct AveragesOutput {
    samples: Vec<AverageRow>,
    derivative_check: Option<DerivativeCheck>,
}

fn averages(ctx: &mut Ctx) -> Result<(), HarnessError> {
    let exp = ctx.exp;
    let grid = ctx.grid_or("h", || geometric_grid(1e2, 1e8, 13));
    let has_limits = ctx.sys.g().limits_at_infinity().is_ok();
    let mut rows = Vec::with_capacity(grid.len());
    for &h in &grid {
        rows.push(AverageRow {
            h,
            avg_f1: avg_f1(&ctx.sys, h).map_err(core(exp))?,
            beta: if has_limits { Some(beta(&ctx.sys, h).map_err(core(exp))?) } else { None },
            beta_prime: if has_limits && h >= 100.0 {
                Some(beta_derivative(&ctx.sys, h).map_err(core(exp))?)
            } else {
                None
            },
            avg_f2_t0: avg_f2(&ctx.sys, h, 0.0),
        });
    }
    let derivative_check = if ctx.sys.delta_g() != 0.0 && grid.len() >= 8 {
        Some(avg_f1_derivative_check(&ctx.sys, &grid).map_err(core(exp))?)
    } else {
        None
    };
    let mut t = Table::new(&["h", "avg_f1", "beta", "beta_prime", "avg_f2_t0"]);
    for r in &rows {
        t.push(vec![num(r.h), num(r.avg_f1), opt_num(r.beta), opt_num(r.beta_prime), num(r.avg_f2_t0)]);
    }
    ctx.csv("averages.csv", &t)?;
    ctx.json(
        "averages.json",
        &AveragesOutput {
            samples: rows,
            derivative_check,
        },
    )
}

#[derive(Serialize)]
struct OscillatoryOutput {
    circle_means: Vec<OscillatorySample>,
    cos_envelope: Option<DecayFit>,
    max_abs_sin: f64,
    psi_average: Vec<(f64, f64)>,
    psi_envelope: Option<DecayFit>,
}

/// Envelope fit when the grid spans three decades, otherwise nothing.
fn envelope(samples: &[(f64, f64)]) -> Result<Option<DecayFit>, CoreError> {
    match (samples.first(), samples.last()) {
        (Some(a), Some(b)) if samples.len() >= 8 && b.0 / a.0 >= 1e3 => decay_fit_envelope(samples, 2.0).map(Some),
        _ => Ok(None),
    }
}

fn oscillatory(ctx: &mut Ctx) -> Result<(), HarnessError> {
    let exp = ctx.exp;
    let a_grid = ctx.grid_or("a", || geometric_grid(1e2, 1e6, 41));
    let means = a_grid
        .iter()
        .map(|&a| sample(a, ctx.sys.n()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(core(exp))?;
    let cos: Vec<(f64, f64)> = means.iter().map(|s| (s.amplitude_a, s.value_cos)).collect();
    let cos_envelope = envelope(&cos).map_err(core(exp))?;
    let max_abs_sin = means.iter().map(|s| s.value_sin.abs()).fold(0.0, f64::max);
    let (psi_samples, psi_envelope) = if ctx.sys.psi().is_zero() {
        (Vec::new(), None)
    } else {
        let h_grid = ctx.grid_or("h", || geometric_grid(1e4, 1e8, 200));
        let s = h_grid
            .iter()
            .map(|&h| Ok((h, psi_average(&ctx.sys, h)?)))
            .collect::<Result<Vec<_>, CoreError>>()
            .map_err(core(exp))?;
        let fit = envelope(&s).map_err(core(exp))?;
        (s, fit)
    };
    let mut t = Table::new(&["a", "mean_cos", "mean_sin"]);
    for s in &means {
        t.push(vec![num(s.amplitude_a), num(s.value_cos), num(s.value_sin)]);
    }
    ctx.csv("circle_means.csv", &t)?;
    if !psi_samples.is_empty() {
        let mut t = Table::new(&["h", "psi_average"]);
        for &(h, v) in &psi_samples {
            t.push(vec![num(h), num(v)]);
        }
        ctx.csv("psi_average.csv", &t)?;
    }
    ctx.json(
        "oscillatory.json",
        &OscillatoryOutput {
            circle_means: means,
            cos_envelope,
            max_abs_sin,
            psi_average: psi_samples,
            psi_envelope,
        },
    )
}

#[derive(Serialize)]
struct SimulateOutput {
    initial: PhaseState,
    #[serde(rename = "final")]
    end: PhaseState,
    integrator_stats: IntegratorStats,
}

fn simulate(ctx: &mut Ctx) -> Result<(), HarnessError> {
    let exp = ctx.exp;
    let s0 = ctx.initial()?;
    let horizon = ctx.cfg.numeric.horizon.unwrap_or(TAU * ctx.strobes() as f64);
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(HarnessError::Validation(format!("horizon must be positive, got {horizon}")));
    }
    let n = ctx.sys.nf();
    let action = |x: f64, y: f64| 0.5 * n * (x * x + y * y);
    let mut t = Table::new(&["t", "x", "y", "I"]);
    t.push(vec![num(s0.t), num(s0.x), num(s0.y), num(action(s0.x, s0.y))]);
    let (end, stats) = dynamics::flow(&ctx.sys, s0, s0.t + horizon, ctx.tol(), |time, y| {
        t.push(vec![num(time), num(y[0]), num(y[1]), num(action(y[0], y[1]))]);
    })
    .map_err(core(exp))?;
    ctx.csv("trajectory.csv", &t)?;
    ctx.json(
        "simulate.json",
        &SimulateOutput {
            initial: s0,
            end,
            integrator_stats: stats,
        },
    )
}

fn orbit_table(rec: &OrbitRecord) -> Table {
    let mut t = Table::new(&["k", "t", "x", "y", "I", "theta_lift"]);
    for it in &rec.iterates {
        t.push(vec![
            it.k.to_string(),
            num(it.t),
            num(it.x),
            num(it.y),
            num(it.action),
            num(it.theta_lift),
        ]);
    }
    t
}

fn run_orbit(ctx: &Ctx) -> Result<OrbitRecord, HarnessError> {
    let s0 = ctx.initial()?;
    dynamics::orbit(&ctx.sys, &ctx.exp.to_string(), s0, ctx.strobes(), ctx.tol()).map_err(core(ctx.exp))
}

#[derive(Serialize)]
struct PoincareOutput {
    rotation_number: Option<f64>,
    escaped: bool,
    strobes: usize,
    integrator_stats: IntegratorStats,
}

fn poincare(ctx: &mut Ctx) -> Result<(), HarnessError> {
    let rec = run_orbit(ctx)?;
    ctx.csv("orbit.csv", &orbit_table(&rec))?;
    ctx.json(
        "poincare.json",
        &PoincareOutput {
            rotation_number: dynamics::rotation_number(&rec).ok(),
            escaped: rec.escaped,
            strobes: rec.strobes(),
            integrator_stats: rec.integrator_stats,
        },
    )
}

#[derive(Serialize)]
struct ClassifyOutput {
    #[serde(flatten)]
    verdict: ClassificationVerdict,
    integrator_stats: IntegratorStats,
}

fn classify(ctx: &mut Ctx) -> Result<(), HarnessError> {
    let rec = run_orbit(ctx)?;
    let verdict = dynamics::classify_orbit(&rec, dynamics::ESCAPE_FACTOR, dynamics::CONFINE_FACTOR);
    ctx.csv("orbit.csv", &orbit_table(&rec))?;
    ctx.json(
        "verdict.json",
        &ClassifyOutput {
            verdict,
            integrator_stats: rec.integrator_stats,
        },
    )
}

fn entry_row(prefix: Vec<String>, e: &SweepEntry) -> Vec<String> {
    let mut row = prefix;
    let v = e.verdict.as_ref();
    row.extend([
        v.map(|v| format!("{:?}", v.verdict)).unwrap_or_default(),
        opt_num(v.map(|v| v.initial_action)),
        opt_num(v.map(|v| v.max_action)),
        opt_num(v.map(|v| v.min_action)),
        opt_num(v.and_then(|v| v.growth_fit.as_ref()).map(|f| f.slope)),
        e.failure.as_ref().map(|f| f.kind.clone()).unwrap_or_default(),
    ]);
    row
}

fn sweep(ctx: &mut Ctx) -> Result<(), HarnessError> {
    let exp = ctx.exp;
    let actions = ctx
        .cfg
        .numeric
        .grid("I0")
        .ok_or_else(|| HarnessError::Validation("sweep needs grids.I0".into()))?
        .to_vec();
    let zeros = vec![0.0; actions.len()];
    let thetas = ctx.grid_or("theta0", || zeros.clone());
    let times = ctx.grid_or("t0", || zeros.clone());
    if thetas.len() != actions.len() || times.len() != actions.len() {
        return Err(HarnessError::Validation("grids I0, theta0 and t0 differ in length".into()));
    }
    let grid = actions
        .iter()
        .zip(&thetas)
        .zip(&times)
        .map(|((&a, &th), &t)| dynamics::launch(&ctx.sys, a, th, t))
        .collect::<Result<Vec<_>, _>>()
        .map_err(core(exp))?;
    let entries = dynamics::sweep(&ctx.sys, &grid, ctx.strobes(), ctx.tol()).map_err(core(exp))?;
    let mut t = Table::new(&[
        "index", "x0", "y0", "t0", "verdict", "I0", "max_I", "min_I", "growth_slope", "failure",
    ]);
    for e in &entries {
        let prefix = vec![e.index.to_string(), num(e.initial.x), num(e.initial.y), num(e.initial.t)];
        t.push(entry_row(prefix, e));
    }
    ctx.csv("sweep.csv", &t)?;
    ctx.json("sweep.json", &entries)
}

fn escape_scan(ctx: &mut Ctx) -> Result<(), HarnessError> {
    let i0 = ctx
        .cfg
        .numeric
        .scan_action
        .ok_or_else(|| HarnessError::Validation("escape-scan needs numeric.I0".into()))?;
    let scan = dynamics::critical_escape_scan(&ctx.sys, i0, ctx.cfg.numeric.phases, ctx.strobes(), ctx.tol())
        .map_err(core(ctx.exp))?;
    let mut t = Table::new(&[
        "phase_index", "t0", "verdict", "I0", "max_I", "min_I", "growth_slope", "failure",
    ]);
    for e in &scan.entries {
        t.push(entry_row(vec![e.phase_index.to_string(), num(e.t0)], &e.entry));
    }
    ctx.csv("escape_scan.csv", &t)?;
    ctx.json("escape_scan.json", &scan)
}

fn normalform(ctx: &mut Ctx) -> Result<(), HarnessError> {
    let exp = ctx.exp;
    let hs = ctx.grid_or("h", || vec![1e4, 1e6]);
    let times = ctx.grid_or("t", || vec![0.0, 1.0, 2.5]);
    let checks = hs
        .iter()
        .map(|&h| normal_form_check(&ctx.sys, h, 64, &times))
        .collect::<Result<Vec<NormalFormCheck>, _>>()
        .map_err(core(exp))?;
    let mut t = Table::new(&[
        "h",
        "s2_closure",
        "s3_closure",
        "s2_cancellation",
        "s3_cancellation",
        "s2_max_abs",
        "s3_max_abs",
        "passed",
    ]);
    for c in &checks {
        t.push(vec![
            num(c.h),
            num(c.s2_closure),
            num(c.s3_closure),
            num(c.s2_cancellation),
            num(c.s3_cancellation),
            num(c.s2_max_abs),
            num(c.s3_max_abs),
            c.passed.to_string(),
        ]);
    }
    ctx.csv("normalform.csv", &t)?;
    ctx.json("normalform.json", &checks)
}
