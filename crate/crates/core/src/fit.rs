//! Log-log least-squares power-law fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of points accepted by scaling fits.
pub const MIN_FIT_POINTS: usize = 8;

/// Result of fitting `ln v = intercept + slope·ln x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in natural-log units.
    pub rms_residual: f64,
    pub n_points: usize,
    pub x_range: (f64, f64),
}

impl DecayFit {
    /// Value of the fitted power law at `x`.
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }
}

/// Ordinary least squares of `ln|v|` against `ln x`.
///
/// Needs at least `min_points` pairs with `x > 0`, `v ≠ 0` and at least two
/// distinct abscissae.
pub fn fit_log_log(points: &[(f64, f64)], min_points: usize) -> Result<DecayFit> {
    if points.len() < min_points {
        return Err(Error::FitDegenerate(format!(
            "{} points, need at least {min_points}",
            points.len()
        )));
    }
    let mut logs = Vec::with_capacity(points.len());
    for &(x, v) in points {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::FitDegenerate(format!("abscissa {x} not positive")));
        }
        if !(v != 0.0 && v.is_finite()) {
            return Err(Error::FitDegenerate(format!("value {v} at x = {x} has no logarithm")));
        }
        logs.push((x.ln(), v.abs().ln()));
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::FitDegenerate("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = logs
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let xs = points.iter().map(|p| p.0);
    let lo = xs.clone().fold(f64::INFINITY, f64::min);
    let hi = xs.fold(f64::NEG_INFINITY, f64::max);
    Ok(DecayFit {
        slope,
        intercept,
        rms_residual: (ss / n).sqrt(),
        n_points: points.len(),
        x_range: (lo, hi),
    })
}

/// `points` values spaced geometrically from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (points - 1) as f64;
    (0..points)
        .map(|k| {
            if k == points - 1 {
                hi
            } else {
                lo * (ratio * k as f64).exp()
            }
        })
        .collect()
}
