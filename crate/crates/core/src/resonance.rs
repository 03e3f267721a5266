//! Resonance conditions: the Lazer-Leach quantities, regime classification,
//! and the critical-case exponent `d` read off the correction
//! `β(h) = [f₁](h) − (√2/π)·n^(−3/2)·Δg·√h`.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action_angle::{avg_f1, f1_leading_coefficient, radius};
use crate::error::{Error, Result};
use crate::fit::{fit_log_log, geometric_grid, DecayFit, MIN_FIT_POINTS};
use crate::quadrature::{gauss_kronrod, gauss_kronrod_breaks, Tolerance};
use crate::system::DuffingSystem;

/// Relative band inside which `A` and `B` count as equal.
pub const CRITICAL_TOL: f64 = 1e-9;
/// Half-width of the excluded band around `d = 1`.
pub const D_MARGIN: f64 = 0.05;
/// Default window and resolution for the `d` fit.
pub const D_FIT_WINDOW: (f64, f64) = (1e4, 1e9);
pub const D_FIT_POINTS: usize = 12;
/// Smallest energy accepted by [`beta_profile`].
pub const BETA_MIN_H: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    StrictlyBelow,
    StrictlyAbove,
    Critical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Prediction {
    Bounded,
    Unbounded,
    CriticalNeedsD,
    OutOfTheory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `|∫₀^{2π} p(t)e^{int} dt|`.
    #[serde(rename = "lhs_A")]
    pub lhs_a: f64,
    /// `2|g(+∞) − g(−∞)|`.
    #[serde(rename = "rhs_B")]
    pub rhs_b: f64,
    pub regime: Regime,
    /// `(A − B)/max(A, B, ε)`.
    pub relative_gap: f64,
    pub predicted: Prediction,
}

fn regime_of(a: f64, b: f64) -> Regime {
    if (a - b).abs() <= CRITICAL_TOL * a.max(b).max(1.0) {
        Regime::Critical
    } else if a < b {
        Regime::StrictlyBelow
    } else {
        Regime::StrictlyAbove
    }
}

/// `|∫₀^{2π} p(t)e^{int} dt|` by adaptive quadrature.
pub fn forcing_resonance_quadrature(sys: &DuffingSystem) -> Result<f64> {
    let n = sys.nf();
    let p = sys.p();
    let breaks: Vec<f64> = (0..=4 * sys.n()).map(|k| TAU * k as f64 / (4.0 * n)).collect();
    let tol = Tolerance::new(1e-15, 1e-13);
    let re = gauss_kronrod_breaks(|t| p.eval(t) * (n * t).cos(), &breaks, tol)?.value;
    let im = gauss_kronrod_breaks(|t| p.eval(t) * (n * t).sin(), &breaks, tol)?.value;
    Ok(re.hypot(im))
}

pub fn lazer_leach_report(sys: &DuffingSystem) -> Result<ConditionReport> {
    let (a_n, b_n) = sys.p().harmonic(sys.n() as usize);
    let lhs_a = PI * a_n.hypot(b_n);
    let rhs_b = 2.0 * sys.delta_g().abs();
    let quad = forcing_resonance_quadrature(sys)?;
    if (quad - lhs_a).abs() > 1e-10 * lhs_a.max(1.0) {
        return Err(Error::PrecisionFailure {
            context: format!("resonant forcing coefficient: closed form {lhs_a}, quadrature {quad}"),
            h: 0.0,
        });
    }
    let regime = regime_of(lhs_a, rhs_b);
    let predicted = match regime {
        Regime::StrictlyBelow => Prediction::Bounded,
        Regime::StrictlyAbove => Prediction::Unbounded,
        Regime::Critical => Prediction::CriticalNeedsD,
    };
    Ok(ConditionReport {
        lhs_a,
        rhs_b,
        regime,
        relative_gap: (lhs_a - rhs_b) / lhs_a.max(rhs_b).max(f64::MIN_POSITIVE),
        predicted,
    })
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid[0] < BETA_MIN_H || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(format!(
            "energy grid must be increasing and start at h >= {BETA_MIN_H}"
        )));
    }
    Ok(())
}

pub fn beta(sys: &DuffingSystem, h: f64) -> Result<f64> {
    Ok(avg_f1(sys, h)? - f1_leading_coefficient(sys.n()) * sys.delta_g() * h.sqrt())
}

/// `(h, β(h))` for every `h` in `grid`.
pub fn beta_profile(sys: &DuffingSystem, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_grid(grid)?;
    sys.g().limits_at_infinity()?;
    grid.par_iter().map(|&h| Ok((h, beta(sys, h)?))).collect()
}

/// `β'(h) = (√2/4π)·n^(−3/2)·h^(−1/2)·∫₀^{2π} (g − g(±∞))(R cos φ)·cos φ dφ`,
/// the derivative of `β` with the leading `√h` term removed analytically.
pub fn beta_derivative(sys: &DuffingSystem, h: f64) -> Result<f64> {
    let g = sys.g();
    g.limits_at_infinity()?;
    let r = radius(h, sys.n());
    let integrand = |phi: f64| {
        let c = phi.cos();
        g.tail_deviation(r * c).unwrap_or(f64::NAN) * c
    };
    // symmetric under φ → 2π − φ
    let half = gauss_kronrod(integrand, 0.0, FRAC_PI_2, Tolerance::new(0.0, 1e-11))
        .and_then(|l| Ok(l.value + gauss_kronrod(integrand, FRAC_PI_2, PI, Tolerance::new(0.0, 1e-11))?.value))
        .map_err(|_| Error::PrecisionFailure {
            context: "beta derivative".into(),
            h,
        })?;
    if !half.is_finite() {
        return Err(Error::PrecisionFailure {
            context: "beta derivative is not finite".into(),
            h,
        });
    }
    Ok(SQRT_2 / (4.0 * PI) * sys.nf().powf(-1.5) / h.sqrt() * 2.0 * half)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DEstimate {
    /// Power law of `|β|`: slope `(1 − d)/2`.
    pub fit: DecayFit,
    /// Fit of `|β'|` from which `fit` is integrated.
    pub derivative_fit: DecayFit,
    pub implied_d: f64,
    /// `(h, β'(h))`.
    pub samples: Vec<(f64, f64)>,
}

/// Fits `|β'(h)| ~ h^(s−1)` on a geometric grid and reports `|β| ~ h^s`,
/// `d = 1 − 2s`.
pub fn critical_d_estimate(sys: &DuffingSystem, h_min: f64, h_max: f64, points: usize) -> Result<DEstimate> {
    if points < MIN_FIT_POINTS {
        return Err(Error::InvalidInput(format!("{points} points, need at least {MIN_FIT_POINTS}")));
    }
    if !(h_min >= BETA_MIN_H && h_max / h_min >= 1e4) {
        return Err(Error::InvalidInput("d window must start at h >= 100 and span four decades".into()));
    }
    let grid = geometric_grid(h_min, h_max, points);
    let samples = grid
        .par_iter()
        .map(|&h| Ok((h, beta_derivative(sys, h)?)))
        .collect::<Result<Vec<_>>>()?;
    let first = samples[0].1.signum();
    if samples.iter().any(|&(_, v)| v == 0.0 || v.signum() != first) {
        return Err(Error::FitDegenerate("beta' changes sign inside the window".into()));
    }
    let derivative_fit = fit_log_log(&samples, MIN_FIT_POINTS)?;
    let slope = derivative_fit.slope + 1.0;
    let fit = DecayFit {
        slope,
        intercept: derivative_fit.intercept - slope.abs().ln(),
        ..derivative_fit.clone()
    };
    Ok(DEstimate {
        implied_d: 1.0 - 2.0 * slope,
        fit,
        derivative_fit,
        samples,
    })
}

/// Verdict from the regime, refined by `d` in the critical case.
pub fn classify_theorem(report: &ConditionReport, d_fit: Option<&DEstimate>) -> Prediction {
    match report.regime {
        Regime::StrictlyBelow => Prediction::Bounded,
        Regime::StrictlyAbove => Prediction::Unbounded,
        Regime::Critical => match d_fit {
            None => Prediction::CriticalNeedsD,
            Some(est) if est.implied_d < 1.0 - D_MARGIN => Prediction::Bounded,
            Some(est) if est.implied_d > 1.0 + D_MARGIN => Prediction::Unbounded,
            Some(_) => Prediction::OutOfTheory,
        },
    }
}
