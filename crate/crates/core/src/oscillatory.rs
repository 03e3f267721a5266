//! Oscillating averages over the unperturbed circle: means of
//! `cos(a·cos nθ)` and `sin(a·cos nθ)`, the angle average of `ψ`, envelope
//! decay fits, and the two-endpoint stationary-phase check on `[0, π]`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::action_angle::radius;
use crate::error::{Error, Result};
use crate::fit::{fit_log_log, DecayFit, MIN_FIT_POINTS};
use crate::quadrature::{gauss_kronrod_breaks, periodic_mean, Tolerance};
use crate::system::DuffingSystem;

/// Largest phase amplitude the trapezoid node budget covers.
pub const MAX_AMPLITUDE: f64 = 1e7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Cos,
    Sin,
}

/// One amplitude with both circle means.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillatorySample {
    pub amplitude_a: f64,
    pub value_cos: f64,
    pub value_sin: f64,
}

/// `(1/2π)∫₀^{2π} trig(a·cos nθ) dθ` by the periodic trapezoid rule.
///
/// For integer `n` the substitution `φ = nθ` leaves the mean unchanged, so
/// the rule runs in `φ` with at least `16·(1 + a)` nodes.
pub fn circle_mean(a: f64, parity: Parity, n: u32) -> Result<f64> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::InvalidInput(format!("amplitude must be >= 0, got {a}")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    if a > MAX_AMPLITUDE {
        return Err(Error::AmplitudeTooLarge(a));
    }
    let min_nodes = (16.0 * (1.0 + a)).ceil() as usize;
    let mean = match parity {
        Parity::Cos => even_trapezoid_mean(|c| (a * c).cos(), min_nodes),
        // sin(a·cos φ) is odd about φ = π/2, so its trapezoid sum cancels
        // node by node; it is still evaluated to report the rounding level
        Parity::Sin => periodic_mean(
            |phi: f64| (a * phi.cos()).sin(),
            TAU,
            Tolerance::new(1e-12, 0.0),
            min_nodes,
            min_nodes.next_power_of_two() * 8,
        )
        .map(|m| m.value),
    };
    mean.map_err(|_| Error::AmplitudeTooLarge(a))
}

/// Trapezoid mean over `φ ∈ [0, 2π)` of `F(cos φ)` with node doubling.
/// The nodes `φ` and `2π − φ` coincide in `cos φ`, so each level only
/// evaluates the upper half circle.
fn even_trapezoid_mean<F: Fn(f64) -> f64>(f: F, min_nodes: usize) -> Result<f64> {
    let mut nodes = min_nodes.max(4).next_multiple_of(2);
    let max_nodes = nodes.next_power_of_two() * 8;
    // sum over k = 0..nodes of F(cos(2πk/nodes)), using symmetry
    let mut sum = crate::quadrature::Neumaier::default();
    sum.add(f(1.0));
    sum.add(f(-1.0));
    for k in 1..nodes / 2 {
        sum.add(2.0 * f((TAU * k as f64 / nodes as f64).cos()));
    }
    let mut prev = sum.total() / nodes as f64;
    while 2 * nodes <= max_nodes {
        // midpoints of the current grid, upper half only
        for k in 0..nodes / 2 {
            sum.add(2.0 * f((TAU * (2 * k + 1) as f64 / (2 * nodes) as f64).cos()));
        }
        nodes *= 2;
        let next = sum.total() / nodes as f64;
        if (next - prev).abs() <= 1e-12 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::PrecisionFailure {
        context: "circle mean not converged".into(),
        h: f64::NAN,
    })
}

pub fn sample(a: f64, n: u32) -> Result<OscillatorySample> {
    Ok(OscillatorySample {
        amplitude_a: a,
        value_cos: circle_mean(a, Parity::Cos, n)?,
        value_sin: circle_mean(a, Parity::Sin, n)?,
    })
}

/// Phase amplitude `a_m = (2πm/T)·√(2/n)·√h` of harmonic `m` of `ψ`.
pub fn harmonic_amplitude(sys: &DuffingSystem, m: usize, h: f64) -> f64 {
    sys.psi().wavenumber(m) * radius(h, sys.n())
}

/// `[f₃](h) = (1/2πn)∫₀^{2π} ψ(√(2/n)·√h·cos nθ) dθ`, harmonic by harmonic:
/// cosine harmonics contribute `b_m·J₀(a_m)`, sine harmonics nothing.
pub fn psi_average(sys: &DuffingSystem, h: f64) -> Result<f64> {
    if !(h >= 1.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("psi_average needs h >= 1, got {h}")));
    }
    let psi = sys.psi();
    let mut acc = psi.constant;
    for m in 1..=psi.harmonics() {
        let (a, _) = psi.harmonic(m);
        if a != 0.0 {
            acc += a * circle_mean(harmonic_amplitude(sys, m, h), Parity::Cos, sys.n())?;
        }
    }
    Ok(acc / sys.nf())
}

/// Envelope fit: the samples are grouped into consecutive geometric windows
/// `[x, factor·x)`; each nonempty window contributes its point of largest
/// `|v|`, and `ln max|v|` is fitted against `ln x`.
pub fn decay_fit_envelope(samples: &[(f64, f64)], window_factor: f64) -> Result<DecayFit> {
    if !(window_factor >= 2.0) {
        return Err(Error::InvalidInput(format!("window factor must be >= 2, got {window_factor}")));
    }
    if samples.len() < MIN_FIT_POINTS {
        return Err(Error::FitDegenerate(format!("{} samples, need {MIN_FIT_POINTS}", samples.len())));
    }
    let mut sorted: Vec<(f64, f64)> = samples.to_vec();
    if sorted.iter().any(|(x, v)| !(*x > 0.0 && x.is_finite() && v.is_finite())) {
        return Err(Error::InvalidInput("samples need positive abscissae and finite values".into()));
    }
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (lo, hi) = (sorted[0].0, sorted[sorted.len() - 1].0);
    if hi / lo < 1e3 {
        return Err(Error::FitDegenerate("samples span less than three decades".into()));
    }
    let mut envelope: Vec<(f64, f64)> = Vec::new();
    let mut edge = lo;
    let mut idx = 0;
    while idx < sorted.len() {
        let upper = edge * window_factor;
        let mut best: Option<(f64, f64)> = None;
        while idx < sorted.len() && sorted[idx].0 < upper {
            let (x, v) = sorted[idx];
            if best.is_none_or(|b| v.abs() > b.1) {
                best = Some((x, v.abs()));
            }
            idx += 1;
        }
        if let Some(b) = best {
            if b.1 > 0.0 {
                envelope.push(b);
            }
        }
        edge = upper;
    }
    if envelope.len() < 4 {
        return Err(Error::FitDegenerate(format!("only {} nonempty windows", envelope.len())));
    }
    fit_log_log(&envelope, 4)
}

/// `psi_average` on `points` geometric energies from `h_min` to `h_max` and
/// its envelope fit with window factor 2.
pub fn psi_average_decay(sys: &DuffingSystem, h_min: f64, h_max: f64, points: usize) -> Result<(Vec<(f64, f64)>, DecayFit)> {
    let grid = crate::fit::geometric_grid(h_min, h_max, points);
    let samples = grid
        .into_iter()
        .map(|h| Ok((h, psi_average(sys, h)?)))
        .collect::<Result<Vec<_>>>()?;
    let fit = decay_fit_envelope(&samples, 2.0)?;
    Ok((samples, fit))
}

/// One amplitude of the endpoint check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointSample {
    pub a: f64,
    /// `|∫₀^π e^{ia cos θ} dθ|`.
    pub full_abs: f64,
    /// `|∫₀^{π/2} e^{ia cos θ} dθ|`, the part owned by the endpoint `θ = 0`.
    pub left_abs: f64,
    /// `|∫_{π/2}^π e^{ia cos θ} dθ|`, the part owned by the endpoint `θ = π`.
    pub right_abs: f64,
    /// `(left_abs + right_abs)·√a`.
    pub prefactor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointReport {
    pub samples: Vec<EndpointSample>,
    /// Fit of `left_abs + right_abs` against `a`.
    pub fit: DecayFit,
    pub prefactor_mean: f64,
    /// Coefficient of variation of the prefactor over the grid.
    pub prefactor_cv: f64,
    /// Leading two-endpoint prefactor `√(2π)`.
    pub predicted_prefactor: f64,
    /// `max_a |∫₀^{2π} − 2∫₀^π|` of the cosine part.
    pub symmetry_residual: f64,
    pub passed: bool,
}

/// Breakpoints on `[lo, hi] ⊂ [0, π]` where `a·cos θ` advances by `π`.
fn phase_breaks(a: f64, lo: f64, hi: f64) -> Vec<f64> {
    let (c_hi, c_lo) = (lo.cos(), hi.cos());
    let steps = ((a * (c_hi - c_lo)) / PI).ceil().max(1.0) as usize;
    let mut breaks: Vec<f64> = (0..=steps)
        .map(|k| {
            let c = c_hi - (c_hi - c_lo) * k as f64 / steps as f64;
            c.clamp(-1.0, 1.0).acos()
        })
        .collect();
    breaks[0] = lo;
    breaks[steps] = hi;
    breaks
}

/// `∫_lo^hi e^{ia cos θ} dθ` as `(re, im)`.
fn half_integral(a: f64, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let breaks = phase_breaks(a, lo, hi);
    let tol = Tolerance::new(1e-15, 1e-13);
    let re = gauss_kronrod_breaks(|t: f64| (a * t.cos()).cos(), &breaks, tol)?;
    let im = gauss_kronrod_breaks(|t: f64| (a * t.cos()).sin(), &breaks, tol)?;
    Ok((re.value, im.value))
}

/// Two-endpoint stationary-phase check for `∫₀^π e^{ia cos θ} dθ`.
///
/// Both endpoints are stationary points of `cos θ`. Their contributions are
/// separated by splitting at `π/2`, and the sum of the two magnitudes is
/// compared with `√(2π/a)`. The full integral itself equals `π·J₀(a)`, which
/// has zeros, so only the separated magnitudes carry a clean power law.
pub fn endpoint_expansion_check(a_grid: &[f64]) -> Result<EndpointReport> {
    if a_grid.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidInput(format!("need at least {MIN_FIT_POINTS} amplitudes")));
    }
    if a_grid.windows(2).any(|w| !(w[1] > w[0])) || a_grid[0] <= 0.0 {
        return Err(Error::InvalidInput("amplitude grid must be positive and increasing".into()));
    }
    let mut samples = Vec::with_capacity(a_grid.len());
    let mut symmetry_residual: f64 = 0.0;
    for &a in a_grid {
        let (lr, li) = half_integral(a, 0.0, FRAC_PI_2)?;
        let (rr, ri) = half_integral(a, FRAC_PI_2, PI)?;
        let left_abs = lr.hypot(li);
        let right_abs = rr.hypot(ri);
        let full_abs = (lr + rr).hypot(li + ri);
        let circle = TAU * circle_mean(a, Parity::Cos, 1)?;
        symmetry_residual = symmetry_residual.max((circle - 2.0 * (lr + rr)).abs());
        samples.push(EndpointSample {
            a,
            full_abs,
            left_abs,
            right_abs,
            prefactor: (left_abs + right_abs) * a.sqrt(),
        });
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.a, s.left_abs + s.right_abs)).collect();
    let fit = fit_log_log(&pts, MIN_FIT_POINTS)?;
    let k = samples.len() as f64;
    let prefactor_mean = samples.iter().map(|s| s.prefactor).sum::<f64>() / k;
    let var = samples.iter().map(|s| (s.prefactor - prefactor_mean).powi(2)).sum::<f64>() / k;
    let prefactor_cv = var.sqrt() / prefactor_mean;
    let passed = (fit.slope + 0.5).abs() <= 0.05 && prefactor_cv <= 0.10 && symmetry_residual <= 1e-12;
    Ok(EndpointReport {
        samples,
        fit,
        prefactor_mean,
        prefactor_cv,
        predicted_prefactor: TAU.sqrt(),
        symmetry_residual,
        passed,
    })
}
