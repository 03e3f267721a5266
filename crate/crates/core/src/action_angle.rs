//! Action-angle coordinates `x = √(2/n)·√I·cos nθ`, `y = √(2/n)·√I·sin nθ`,
//! the Hamiltonian pieces `f₁ = G(x)/n`, `f₂ = −x·p(t)/n`, `f₃ = ψ(x)/n`,
//! their angle averages, the implicit energy-time exchange `R`, and the
//! first-order generating functions `S₂`, `S₃`.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_log_log, DecayFit, MIN_FIT_POINTS};
use crate::quadrature::{gauss_kronrod_breaks, Tolerance};
use crate::system::DuffingSystem;

/// Relative accuracy of angle averages.
const AVG_REL_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: f64,
    /// Scaled velocity `ẋ/n`.
    pub y: f64,
    pub t: f64,
}

impl PhaseState {
    pub fn new(x: f64, y: f64, t: f64) -> Self {
        Self { x, y, t }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionAngleState {
    #[serde(rename = "I")]
    pub action: f64,
    pub theta: f64,
    pub t: f64,
}

/// `(x, y, t) → (I, θ, t)` with `θ ∈ [0, 2π/n)`.
pub fn to_action_angle(s: PhaseState, n: u32) -> Result<ActionAngleState> {
    if s.x == 0.0 && s.y == 0.0 {
        return Err(Error::DegenerateState("origin has no angle".into()));
    }
    let nf = n as f64;
    let mut phi = s.y.atan2(s.x);
    if phi < 0.0 {
        phi += TAU;
    }
    if phi >= TAU {
        phi = 0.0;
    }
    Ok(ActionAngleState {
        action: 0.5 * nf * (s.x * s.x + s.y * s.y),
        theta: phi / nf,
        t: s.t,
    })
}

/// `(I, θ, t) → (x, y, t)`.
pub fn from_action_angle(a: ActionAngleState, n: u32) -> Result<PhaseState> {
    if !(a.action > 0.0) {
        return Err(Error::DegenerateState(format!(
            "action must be positive, got {}",
            a.action
        )));
    }
    let nf = n as f64;
    let r = (2.0 * a.action / nf).sqrt();
    let (s, c) = (nf * a.theta).sin_cos();
    Ok(PhaseState {
        x: r * c,
        y: r * s,
        t: a.t,
    })
}

/// Radius `√(2I/n)` of the unperturbed circle with action `I`.
pub fn radius(action: f64, n: u32) -> f64 {
    (2.0 * action / n as f64).sqrt()
}

/// `(f₁, f₂, f₃)` at `(I, θ, t)`.
pub fn hamiltonian_pieces(sys: &DuffingSystem, action: f64, theta: f64, t: f64) -> (f64, f64, f64) {
    let n = sys.nf();
    let x = radius(action, sys.n()) * (n * theta).cos();
    (
        sys.big_g().eval(x) / n,
        -x * sys.p().eval(t) / n,
        sys.psi().eval(x) / n,
    )
}

/// `(1/π)∫₀^π F(R cos φ) dφ`, the angle mean of `F(x)` over the circle of
/// radius `R`, split where `x` crosses zero.
pub(crate) fn circle_mean<F: Fn(f64) -> f64>(f: F, r: f64, tol: Tolerance) -> Result<f64> {
    let q = gauss_kronrod_breaks(|phi: f64| f(r * phi.cos()), &[0.0, FRAC_PI_2, PI], tol)?;
    Ok(q.value / PI)
}

/// `[f₁](I) = (1/2π)∫₀^{2π} G(x(I,θ))/n dθ`.
///
/// Integer `n` makes the mean independent of `n` apart from the radius, so
/// the integral runs over one half turn of `φ = nθ`.
pub fn avg_f1(sys: &DuffingSystem, action: f64) -> Result<f64> {
    if !(action >= 1.0 && action.is_finite()) {
        return Err(Error::InvalidInput(format!("avg_f1 needs I >= 1, got {action}")));
    }
    f1_mean(sys, action).map_err(|_| Error::PrecisionFailure {
        context: "angle average of f1".into(),
        h: action,
    })
}

fn f1_mean(sys: &DuffingSystem, action: f64) -> Result<f64> {
    let big_g = sys.big_g();
    circle_mean(|x| big_g.eval(x), radius(action, sys.n()), Tolerance::new(1e-15, AVG_REL_TOL))
        .map(|v| v / sys.nf())
}

/// Leading coefficient `(√2/π)·n^(−3/2)` of `[f₁] ~ coefficient·Δg·√I`.
pub fn f1_leading_coefficient(n: u32) -> f64 {
    SQRT_2 / PI * (n as f64).powf(-1.5)
}

/// Outcome of the `[f₁]'` scaling check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub fit: DecayFit,
    /// `(I, [f₁]'(I))` pairs.
    pub samples: Vec<(f64, f64)>,
    /// `(√2/2π)·n^(−3/2)·(g(+∞) − g(−∞))`.
    pub expected_level: f64,
    /// `I^(1/2)·[f₁]'(I)` at the largest `I`.
    pub measured_level: f64,
    pub level_relative_error: f64,
}

/// Central-difference derivative of `[f₁]` on `grid` and the log-log fit of
/// its magnitude.
pub fn avg_f1_derivative_check(sys: &DuffingSystem, grid: &[f64]) -> Result<DerivativeCheck> {
    let dg = sys.delta_g();
    if dg == 0.0 {
        return Err(Error::FitDegenerate("g(+inf) = g(-inf): no leading term".into()));
    }
    if grid.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidInput(format!(
            "derivative check needs at least {MIN_FIT_POINTS} grid points"
        )));
    }
    let samples = grid
        .iter()
        .map(|&i| {
            let step = 1e-4 * i;
            let hi = avg_f1(sys, i + step)?;
            let lo = avg_f1(sys, i - step)?;
            Ok((i, (hi - lo) / (2.0 * step)))
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_log_log(&samples, MIN_FIT_POINTS)?;
    let expected_level = 0.5 * f1_leading_coefficient(sys.n()) * dg;
    let (i_max, d_max) = *samples.last().expect("grid is nonempty");
    let measured_level = i_max.sqrt() * d_max;
    Ok(DerivativeCheck {
        fit,
        samples,
        expected_level,
        measured_level,
        level_relative_error: (measured_level / expected_level - 1.0).abs(),
    })
}

/// `[f₂](h, t) = (1/2π)∫₀^{2π} f₂(h, θ, t + θ) dθ` in closed form.
pub fn avg_f2(sys: &DuffingSystem, h: f64, t: f64) -> f64 {
    let n = sys.n();
    let nf = n as f64;
    let (a, b) = sys.p().harmonic(n as usize);
    let (c_n, s_n) = (PI * a, PI * b);
    let (s, c) = (nf * t).sin_cos();
    -SQRT_2 / TAU * nf.powf(-1.5) * h.sqrt() * (c * c_n + s * s_n)
}

/// Solution of the energy-time exchange `R = (f₁+f₂+f₃)(h − R, θ, t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTimeSolution {
    pub r: f64,
    pub iterations: usize,
    pub residual: f64,
    /// `C` of the bound `|R| ≤ C·√h`.
    pub bound_c: f64,
    pub h_min: f64,
}

/// Floor on the contraction threshold.
pub const H_MIN_FLOOR: f64 = 100.0;

fn sum_of_sups(sys: &DuffingSystem) -> f64 {
    sys.sup_g() + sys.sup_p() + sys.sup_psi()
}

/// `C = 2·(sup|g| + sup|p| + sup|ψ|)·√(2/n)/n`.
pub fn r_bound_constant(sys: &DuffingSystem) -> f64 {
    let n = sys.nf();
    2.0 * sum_of_sups(sys) * (2.0 / n).sqrt() / n
}

/// Smallest `h` (at least [`H_MIN_FLOOR`]) where `|∂_I(f₁+f₂+f₃)| ≤ ½` on the
/// whole range `I ≥ h − C√h` the iteration can visit.
pub fn contraction_h_min(sys: &DuffingSystem) -> f64 {
    let n = sys.nf();
    let k = (2.0 / n).sqrt() / (2.0 * n) * (sys.sup_g() + sys.sup_p() + sys.sup_psi_prime());
    let c = r_bound_constant(sys);
    let ok = |h: f64| {
        let low = h - c * h.sqrt();
        low > 0.0 && k / low.sqrt() <= 0.5
    };
    if ok(H_MIN_FLOOR) {
        return H_MIN_FLOOR;
    }
    let mut hi = H_MIN_FLOOR;
    while !ok(hi) {
        hi *= 2.0;
    }
    let mut lo = hi / 2.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    hi
}

const MAX_FIXED_POINT_ITERATIONS: usize = 500;

/// Fixed-point iteration `R ← (f₁+f₂+f₃)(h − R)` from `R = 0`.
pub fn solve_energy_time(sys: &DuffingSystem, h: f64, t: f64, theta: f64) -> Result<EnergyTimeSolution> {
    let h_min = contraction_h_min(sys);
    if !(h >= h_min) {
        return Err(Error::HTooSmall { h, h_min });
    }
    let total = |i: f64| {
        let (f1, f2, f3) = hamiltonian_pieces(sys, i, theta, t);
        f1 + f2 + f3
    };
    let step_tol = 1e-12 * h.sqrt().max(1.0);
    let mut r = 0.0;
    for k in 1..=MAX_FIXED_POINT_ITERATIONS {
        let next = total(h - r);
        if !next.is_finite() || h - next <= 0.0 {
            return Err(Error::SolverFailure(format!(
                "energy-time iteration left the domain at h = {h}"
            )));
        }
        let delta = (next - r).abs();
        r = next;
        if delta < step_tol {
            let residual = (r - total(h - r)).abs();
            if residual >= 1e-10 {
                return Err(Error::SolverFailure(format!(
                    "energy-time residual {residual:e} at h = {h}"
                )));
            }
            return Ok(EnergyTimeSolution {
                r,
                iterations: k,
                residual,
                bound_c: r_bound_constant(sys),
                h_min,
            });
        }
    }
    Err(Error::SolverFailure(format!(
        "energy-time iteration did not settle at h = {h}"
    )))
}

/// Breakpoints in `[0, θ]` at the zeros of `cos nθ'` and at `θ` itself.
fn cos_zero_breaks(n: f64, theta: f64) -> Vec<f64> {
    let mut breaks = vec![0.0];
    let mut k = 0.0;
    loop {
        let z = (FRAC_PI_2 + PI * k) / n;
        if z >= theta {
            break;
        }
        breaks.push(z);
        k += 1.0;
    }
    breaks.push(theta);
    breaks
}

fn check_generating_args(h: f64, theta: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("h must be positive, got {h}")));
    }
    if !(0.0..=TAU + 1e-12).contains(&theta) {
        return Err(Error::InvalidInput(format!("theta must lie in [0, 2π], got {theta}")));
    }
    Ok(())
}

fn generating_tolerance(h: f64) -> Tolerance {
    Tolerance::new(1e-15 * h.sqrt().max(1.0), 1e-14)
}

/// `S₂(h, θ) = ∫₀^θ (f₁(h, θ') − [f₁](h)) dθ'`.
pub fn generating_s2(sys: &DuffingSystem, h: f64, theta: f64) -> Result<f64> {
    check_generating_args(h, theta)?;
    let mean = f1_mean(sys, h).map_err(|_| Error::PrecisionFailure {
        context: "angle average of f1".into(),
        h,
    })?;
    s2_with_mean(sys, h, theta, mean)
}

pub(crate) fn s2_with_mean(sys: &DuffingSystem, h: f64, theta: f64, mean: f64) -> Result<f64> {
    if theta == 0.0 {
        return Ok(0.0);
    }
    let breaks = cos_zero_breaks(sys.nf(), theta);
    gauss_kronrod_breaks(
        |th| hamiltonian_pieces(sys, h, th, 0.0).0 - mean,
        &breaks,
        generating_tolerance(h),
    )
    .map(|q| q.value)
    .map_err(|_| Error::PrecisionFailure {
        context: "generating function S2".into(),
        h,
    })
}

/// `S₃(h, t, θ) = ∫₀^θ (f₂(h, θ', t + θ') − [f₂](h, t)) dθ'`.
pub fn generating_s3(sys: &DuffingSystem, h: f64, t: f64, theta: f64) -> Result<f64> {
    check_generating_args(h, theta)?;
    if theta == 0.0 {
        return Ok(0.0);
    }
    let mean = avg_f2(sys, h, t);
    let breaks = cos_zero_breaks(sys.nf(), theta);
    gauss_kronrod_breaks(
        |th| hamiltonian_pieces(sys, h, th, t + th).1 - mean,
        &breaks,
        generating_tolerance(h),
    )
    .map(|q| q.value)
    .map_err(|_| Error::PrecisionFailure {
        context: "generating function S3".into(),
        h,
    })
}

/// `C` of `max_θ |S₂(h, θ)| ≤ C·√h`: the integrand is bounded by
/// `2·sup|f₁| ≤ 2·sup|g|·√(2/n)·√h/n` over an interval of length `2π`.
pub fn s2_bound_constant(sys: &DuffingSystem) -> f64 {
    let n = sys.nf();
    TAU * 2.0 * sys.sup_g() * (2.0 / n).sqrt() / n
}

/// Residuals of the first-order normal-form identities at one energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalFormCheck {
    pub h: f64,
    pub s2_closure: f64,
    pub s3_closure: f64,
    pub s2_cancellation: f64,
    pub s3_cancellation: f64,
    pub s2_max_abs: f64,
    pub s3_max_abs: f64,
    /// Tolerance scale `√h` used for the pass criteria.
    pub scale: f64,
    pub passed: bool,
}

/// Checks `S(h, 2π) = 0` and `∂_θ S = integrand − mean` on `samples`
/// angles (central differences with step `1e-6`) for `S₂` and for `S₃` at
/// every `t` in `times`.
pub fn normal_form_check(sys: &DuffingSystem, h: f64, samples: usize, times: &[f64]) -> Result<NormalFormCheck> {
    let mean1 = avg_f1(sys, h)?;
    let step = 1e-6;
    let thetas: Vec<f64> = (0..samples)
        .map(|k| step + (TAU - 2.0 * step) * (k as f64 + 0.5) / samples as f64)
        .collect();

    let s2_closure = s2_with_mean(sys, h, TAU, mean1)?.abs();
    let mut s2_cancellation: f64 = 0.0;
    let mut s2_max_abs: f64 = 0.0;
    for &th in &thetas {
        let fd = (s2_with_mean(sys, h, th + step, mean1)? - s2_with_mean(sys, h, th - step, mean1)?) / (2.0 * step);
        let exact = hamiltonian_pieces(sys, h, th, 0.0).0 - mean1;
        s2_cancellation = s2_cancellation.max((fd - exact).abs());
        s2_max_abs = s2_max_abs.max(s2_with_mean(sys, h, th, mean1)?.abs());
    }

    let mut s3_closure: f64 = 0.0;
    let mut s3_cancellation: f64 = 0.0;
    let mut s3_max_abs: f64 = 0.0;
    for &t in times {
        s3_closure = s3_closure.max(generating_s3(sys, h, t, TAU)?.abs());
        let mean2 = avg_f2(sys, h, t);
        for &th in &thetas {
            let fd = (generating_s3(sys, h, t, th + step)? - generating_s3(sys, h, t, th - step)?) / (2.0 * step);
            let exact = hamiltonian_pieces(sys, h, th, t + th).1 - mean2;
            s3_cancellation = s3_cancellation.max((fd - exact).abs());
            s3_max_abs = s3_max_abs.max(generating_s3(sys, h, t, th)?.abs());
        }
    }

    let scale = h.sqrt();
    let passed = s2_closure <= 1e-10 * scale
        && s3_closure <= 1e-10 * scale
        && s2_cancellation <= 1e-7 * scale
        && s3_cancellation <= 1e-7 * scale;
    Ok(NormalFormCheck {
        h,
        s2_closure,
        s3_closure,
        s2_cancellation,
        s3_cancellation,
        s2_max_abs,
        s3_max_abs,
        scale,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function::FunctionSpec;
    use crate::quadrature::periodic_mean;
    use proptest::prelude::*;

    fn arctan_system(n: u32, p: Vec<f64>) -> DuffingSystem {
        DuffingSystem::new(n, FunctionSpec::arctan(1.0), None, FunctionSpec::trig(TAU, 0.0, p, vec![])).unwrap()
    }

    fn full_system(n: u32) -> DuffingSystem {
        DuffingSystem::new(
            n,
            FunctionSpec::sum([FunctionSpec::arctan(1.0), FunctionSpec::rational1(0.5)]),
            Some((FunctionSpec::trig(3.0, 0.0, vec![0.4], vec![0.7]), 3.0)),
            FunctionSpec::trig(TAU, 0.1, vec![0.8, 0.3], vec![0.0, -0.6]),
        )
        .unwrap()
    }

    #[test]
    fn transform_examples() {
        for n in 1..=3u32 {
            let r = (2.0 / n as f64).sqrt();
            let a = to_action_angle(PhaseState::new(r, 0.0, 0.0), n).unwrap();
            assert!((a.action - 1.0).abs() < 1e-15 && a.theta == 0.0);
            let a = to_action_angle(PhaseState::new(0.0, r, 0.0), n).unwrap();
            assert!((a.action - 1.0).abs() < 1e-15);
            assert!((a.theta - PI / (2.0 * n as f64)).abs() < 1e-15);

            let s = from_action_angle(ActionAngleState { action: 1.0, theta: 0.0, t: 0.0 }, n).unwrap();
            assert!((s.x - r).abs() < 1e-15 && s.y == 0.0);
            let s = from_action_angle(ActionAngleState { action: 4.0, theta: PI / n as f64, t: 0.0 }, n).unwrap();
            assert!((s.x + 2.0 * r).abs() < 1e-14 && s.y.abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(to_action_angle(PhaseState::new(0.0, 0.0, 1.0), 1), Err(Error::DegenerateState(_))));
        let bad = ActionAngleState { action: 0.0, theta: 0.0, t: 0.0 };
        assert!(matches!(from_action_angle(bad, 1), Err(Error::DegenerateState(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn round_trip(x in -50.0..50.0f64, y in -50.0..50.0f64, t in -10.0..10.0f64, n in 1u32..5) {
            prop_assume!(x.hypot(y) > 1e-6);
            let s = PhaseState::new(x, y, t);
            let a = to_action_angle(s, n).unwrap();
            prop_assert!(a.theta >= 0.0 && a.theta < TAU / n as f64);
            let back = from_action_angle(a, n).unwrap();
            prop_assert!((back.x - x).abs() <= 1e-12 * (1.0 + x.abs()));
            prop_assert!((back.y - y).abs() <= 1e-12 * (1.0 + y.abs()));
            prop_assert_eq!(back.t, t);
        }

        #[test]
        fn energy_identity(x in -1e3..1e3f64, y in -1e3..1e3f64, t in 0.0..TAU, n in 1u32..4) {
            prop_assume!(x.hypot(y) > 1e-3);
            let sys = full_system(n);
            let a = to_action_angle(PhaseState::new(x, y, t), n).unwrap();
            let (f1, f2, f3) = hamiltonian_pieces(&sys, a.action, a.theta, t);
            let h = sys.hamiltonian(x, y, t);
            prop_assert!((h - (a.action + f1 + f2 + f3)).abs() <= 1e-12 * (1.0 + h.abs()));
        }
    }

    #[test]
    fn pieces_vanish_on_the_axis() {
        let sys = full_system(2);
        let theta = PI / 4.0;
        let (f1, f2, f3) = hamiltonian_pieces(&sys, 7.0, theta, 0.3);
        assert!(f1.abs() < 1e-14 && f2.abs() < 1e-14);
        assert!((f3 - sys.psi().eval(0.0) / 2.0).abs() < 1e-14);

        let free = DuffingSystem::new(3, FunctionSpec::zero(), None, FunctionSpec::trig(TAU, 0.0, vec![0.0, 0.0, 2.0], vec![])).unwrap();
        let (_, f2, _) = hamiltonian_pieces(&free, 1.0, 0.0, 0.0);
        assert!((f2 + 2.0 / 3.0 * (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_g_has_zero_average() {
        let sys = DuffingSystem::new(1, FunctionSpec::constant(2.5), None, FunctionSpec::zero()).unwrap();
        assert!(avg_f1(&sys, 1e6).unwrap().abs() < 1e-9);
    }

    #[test]
    fn avg_f1_matches_trapezoid_oracle() {
        // moderate I, where the periodic trapezoid converges quickly
        let sys = full_system(2);
        for &i in &[1.0, 30.0, 2e3] {
            let r = radius(i, 2);
            let oracle = periodic_mean(|phi: f64| sys.big_g().eval(r * phi.cos()) / 2.0, TAU, Tolerance::new(0.0, 1e-14), 64, 1 << 20)
                .unwrap()
                .value;
            let v = avg_f1(&sys, i).unwrap();
            assert!((v - oracle).abs() <= 1e-12 * oracle.abs().max(1.0), "I = {i}: {v} vs {oracle}");
        }
    }

    #[test]
    fn avg_f1_asymptotic_level() {
        let v1 = avg_f1(&arctan_system(1, vec![]), 1e8).unwrap() / 1e4;
        assert!((v1 / SQRT_2 - 1.0).abs() < 0.02, "{v1}");
        let v2 = avg_f1(&arctan_system(2, vec![]), 1e8).unwrap() / 1e4;
        assert!((v2 / 0.5 - 1.0).abs() < 0.02, "{v2}");
    }

    #[test]
    fn avg_f1_band() {
        let sys = arctan_system(1, vec![]);
        let lead = f1_leading_coefficient(1) * sys.delta_g();
        for k in 4..=10 {
            let i = 10f64.powi(k);
            let v = avg_f1(&sys, i).unwrap().abs() / i.sqrt();
            assert!(v >= 0.5 * lead && v <= 2.0 * lead, "I = {i}");
        }
    }

    #[test]
    fn derivative_check_degenerate_for_equal_limits() {
        let g = FunctionSpec::sum([FunctionSpec::algebraic_tail(1.0, 1.5), FunctionSpec::scaled(-1.0, FunctionSpec::algebraic_tail(1.0, 1.5))]);
        let sys = DuffingSystem::new(1, g, None, FunctionSpec::zero()).unwrap();
        let grid = crate::fit::geometric_grid(1e4, 1e8, 8);
        assert!(matches!(avg_f1_derivative_check(&sys, &grid), Err(Error::FitDegenerate(_))));
    }

    #[test]
    fn derivative_check_arctan() {
        let sys = arctan_system(1, vec![]);
        let grid = crate::fit::geometric_grid(1e4, 1e10, 10);
        let check = avg_f1_derivative_check(&sys, &grid).unwrap();
        assert!((check.fit.slope + 0.5).abs() < 0.05, "{}", check.fit.slope);
        assert!((check.expected_level - SQRT_2 / 2.0).abs() < 1e-15);
        assert!(check.level_relative_error < 0.05, "{}", check.measured_level);
    }

    #[test]
    fn avg_f2_examples() {
        let sys = arctan_system(1, vec![1.0]);
        assert!((avg_f2(&sys, 1.0, 0.0) + SQRT_2 / 2.0).abs() < 1e-15);

        let sin_forced = DuffingSystem::new(2, FunctionSpec::arctan(1.0), None, FunctionSpec::trig(TAU, 0.0, vec![], vec![0.0, 1.0])).unwrap();
        assert_eq!(avg_f2(&sin_forced, 5.0, 0.0), 0.0);
    }

    #[test]
    fn avg_f2_matches_angle_quadrature() {
        let sys = full_system(2);
        for &(h, t) in &[(1.0, 0.0), (40.0, 1.1), (1e5, 4.0)] {
            let oracle = periodic_mean(|th| hamiltonian_pieces(&sys, h, th, t + th).1, TAU, Tolerance::new(0.0, 1e-14), 16, 1 << 16)
                .unwrap()
                .value;
            assert!((avg_f2(&sys, h, t) - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
        }
    }

    #[test]
    fn energy_time_trivial_and_constant() {
        let zero = DuffingSystem::new(1, FunctionSpec::zero(), None, FunctionSpec::zero()).unwrap();
        assert_eq!(solve_energy_time(&zero, 500.0, 0.0, 0.3).unwrap().r, 0.0);

        let c = 0.8;
        let n = 2u32;
        let nf = n as f64;
        let sys = DuffingSystem::new(n, FunctionSpec::constant(c), None, FunctionSpec::zero()).unwrap();
        let h = 1e4;
        let sol = solve_energy_time(&sys, h, 0.0, 0.0).unwrap();
        // bisection oracle on R − (c/n)√(2/n)√(h − R) = 0
        let phi = |r: f64| r - c / nf * (2.0 / nf).sqrt() * (h - r).sqrt();
        let (mut lo, mut hi) = (0.0, h / 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi(mid) > 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        assert!((sol.r - 0.5 * (lo + hi)).abs() < 1e-12);
    }

    #[test]
    fn energy_time_rejects_small_h() {
        let sys = full_system(1);
        let h_min = contraction_h_min(&sys);
        assert!(h_min >= H_MIN_FLOOR);
        assert!(matches!(solve_energy_time(&sys, 0.5 * h_min, 0.0, 0.0), Err(Error::HTooSmall { .. })));
    }

    #[test]
    fn energy_time_residual_and_bound() {
        let sys = full_system(1);
        let h = 1e6;
        for k in 0..12 {
            let t = 0.37 * k as f64;
            let th = 0.51 * k as f64;
            let sol = solve_energy_time(&sys, h, t, th).unwrap();
            assert!(sol.residual < 1e-10);
            assert!(sol.r.abs() <= sol.bound_c * h.sqrt());
        }
    }

    #[test]
    fn energy_time_scaling_band() {
        let sys = arctan_system(1, vec![1.0]);
        let ratios: Vec<f64> = (3..=9)
            .map(|k| {
                let h = 10f64.powi(k);
                solve_energy_time(&sys, h, 0.4, 0.2).unwrap().r / h.sqrt()
            })
            .collect();
        let c = r_bound_constant(&sys);
        assert!(ratios.iter().all(|r| r.abs() <= c));
    }

    #[test]
    fn generating_functions_close() {
        let sys = arctan_system(1, vec![1.0]);
        let h = 1e4;
        assert_eq!(generating_s2(&sys, h, 0.0).unwrap(), 0.0);
        assert!(generating_s2(&sys, h, TAU).unwrap().abs() < 1e-10 * h.sqrt());
        assert_eq!(generating_s3(&sys, h, 0.3, 0.0).unwrap(), 0.0);
        assert!(generating_s3(&sys, h, 0.3, TAU).unwrap().abs() < 1e-10 * h.sqrt());
    }

    #[test]
    fn generating_bounds() {
        let sys = arctan_system(1, vec![1.0]);
        let h = 1e4;
        let c2 = s2_bound_constant(&sys);
        let c3 = SQRT_2 / PI * PI;
        for k in 0..=24 {
            let th = TAU * k as f64 / 24.0;
            assert!(generating_s2(&sys, h, th).unwrap().abs() <= c2 * h.sqrt());
            for j in 0..6 {
                let t = TAU * j as f64 / 6.0;
                assert!(generating_s3(&sys, h, t, th).unwrap().abs() <= c3 * h.sqrt());
            }
        }
    }

    #[test]
    fn normal_form_identities_hold() {
        let check = normal_form_check(&full_system(2), 1e4, 8, &[0.0, 1.3]).unwrap();
        assert!(check.passed, "{check:?}");
    }
}
