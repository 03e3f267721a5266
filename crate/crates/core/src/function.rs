//! Closed function grammar for the bounded nonlinearity `g`, the periodic
//! potential `psi` and the forcing `p`.
//!
//! Every leaf has a closed-form value, antiderivative and (for the leaves
//! that need one) derivative, so limits and potentials never go through
//! numerical differentiation or integration. A handful of variants
//! (`Linear`, `ArctanIntegral`, `PowerTail`, `Log`) exist only as results of
//! [`FunctionSpec::antiderivative`]; they are evaluable but not admissible
//! as `g`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when comparing two periods.
const PERIOD_MATCH: f64 = 1e-12;

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// `ln(1 + x²)` without overflow for large `|x|` and without cancellation
/// near the origin.
pub(crate) fn ln_1p_sq(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1.0 {
        (x * x).ln_1p()
    } else {
        2.0 * ax.ln() + (1.0 / (x * x)).ln_1p()
    }
}

/// Finite Fourier sum
/// `constant + Σ_m cos[m-1]·cos(2πm x/period) + sin[m-1]·sin(2πm x/period)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    pub period: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub constant: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cos: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sin: Vec<f64>,
}

impl TrigPoly {
    pub fn new(period: f64, constant: f64, cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        let poly = Self {
            period,
            constant,
            cos,
            sin,
        };
        poly.validate()?;
        Ok(poly)
    }

    /// The zero function with the given period.
    pub fn zero(period: f64) -> Self {
        Self {
            period,
            constant: 0.0,
            cos: Vec::new(),
            sin: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::InvalidInput(format!(
                "trig_poly period must be positive and finite, got {}",
                self.period
            )));
        }
        let finite = self.constant.is_finite()
            && self.cos.iter().chain(&self.sin).all(|c| c.is_finite());
        if !finite {
            return Err(Error::InvalidInput(
                "trig_poly coefficients must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Number of harmonics carried (the longer of the two coefficient lists).
    pub fn harmonics(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    /// Angular wavenumber `2πm/period` of harmonic `m ≥ 1`.
    pub fn wavenumber(&self, m: usize) -> f64 {
        2.0 * PI * m as f64 / self.period
    }

    /// Cosine and sine coefficients of harmonic `m ≥ 1` (zero when absent).
    pub fn harmonic(&self, m: usize) -> (f64, f64) {
        if m == 0 {
            return (self.constant, 0.0);
        }
        let a = self.cos.get(m - 1).copied().unwrap_or(0.0);
        let b = self.sin.get(m - 1).copied().unwrap_or(0.0);
        (a, b)
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.cos.iter().chain(&self.sin).all(|&c| c == 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = self.constant;
        for m in 1..=self.harmonics() {
            let (a, b) = self.harmonic(m);
            let (s, c) = (self.wavenumber(m) * x).sin_cos();
            acc += a * c + b * s;
        }
        acc
    }

    pub fn derivative(&self) -> TrigPoly {
        let k = self.harmonics();
        let mut cos = vec![0.0; k];
        let mut sin = vec![0.0; k];
        for m in 1..=k {
            let (a, b) = self.harmonic(m);
            let w = self.wavenumber(m);
            cos[m - 1] = b * w;
            sin[m - 1] = -a * w;
        }
        TrigPoly {
            period: self.period,
            constant: 0.0,
            cos,
            sin,
        }
    }

    /// Periodic part of the antiderivative, normalized to vanish at 0. The
    /// mean `constant` contributes the linear term `constant·x`, which the
    /// caller adds separately.
    fn periodic_antiderivative(&self) -> TrigPoly {
        let k = self.harmonics();
        let mut cos = vec![0.0; k];
        let mut sin = vec![0.0; k];
        let mut offset = 0.0;
        for m in 1..=k {
            let (a, b) = self.harmonic(m);
            let w = self.wavenumber(m);
            sin[m - 1] = a / w;
            cos[m - 1] = -b / w;
            offset += b / w;
        }
        TrigPoly {
            period: self.period,
            constant: offset,
            cos,
            sin,
        }
    }

    pub fn scaled(&self, k: f64) -> TrigPoly {
        TrigPoly {
            period: self.period,
            constant: k * self.constant,
            cos: self.cos.iter().map(|c| k * c).collect(),
            sin: self.sin.iter().map(|c| k * c).collect(),
        }
    }

    pub fn same_period(&self, period: f64) -> bool {
        (self.period - period).abs() <= PERIOD_MATCH * self.period.max(period)
    }

    /// Coefficient-wise sum; both operands must share the period.
    pub fn add(&self, other: &TrigPoly) -> Option<TrigPoly> {
        if !self.same_period(other.period) {
            return None;
        }
        let pad = |v: &[f64], len: usize| -> Vec<f64> {
            let mut out = v.to_vec();
            out.resize(len, 0.0);
            out
        };
        let len_c = self.cos.len().max(other.cos.len());
        let len_s = self.sin.len().max(other.sin.len());
        let cos = pad(&self.cos, len_c)
            .into_iter()
            .zip(pad(&other.cos, len_c))
            .map(|(a, b)| a + b)
            .collect();
        let sin = pad(&self.sin, len_s)
            .into_iter()
            .zip(pad(&other.sin, len_s))
            .map(|(a, b)| a + b)
            .collect();
        Some(TrigPoly {
            period: self.period,
            constant: self.constant + other.constant,
            cos,
            sin,
        })
    }

    /// Same function with the mean over one period removed.
    pub fn zero_mean(&self) -> TrigPoly {
        TrigPoly {
            constant: 0.0,
            ..self.clone()
        }
    }

    /// `Σ |coefficients|`, an upper bound for `sup |·|`.
    pub fn sup_abs(&self) -> f64 {
        self.constant.abs() + self.cos.iter().chain(&self.sin).map(|c| c.abs()).sum::<f64>()
    }
}

/// A function of one real variable built from the closed grammar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionSpec {
    /// `c`
    Constant { c: f64 },
    /// `scale·arctan(x)`
    Arctan { scale: f64 },
    /// `c·x·(1 + x²)^(−e)`, `e > 1/2`
    AlgebraicTail { c: f64, e: f64 },
    TrigPoly(TrigPoly),
    /// `c·x/(1 + x²)`
    Rational1 { c: f64 },
    Sum { terms: Vec<FunctionSpec> },
    /// `k·child(x)`
    Scaled { k: f64, child: Box<FunctionSpec> },
    /// `c·x`
    Linear { c: f64 },
    /// `scale·(x·arctan x − ½ln(1 + x²))`
    ArctanIntegral { scale: f64 },
    /// `c·((1 + x²)^p − 1)`
    PowerTail { c: f64, p: f64 },
    /// `c·ln(1 + x²)`
    Log { c: f64 },
}

impl FunctionSpec {
    pub fn constant(c: f64) -> Self {
        FunctionSpec::Constant { c }
    }

    pub fn zero() -> Self {
        FunctionSpec::Constant { c: 0.0 }
    }

    pub fn arctan(scale: f64) -> Self {
        FunctionSpec::Arctan { scale }
    }

    pub fn algebraic_tail(c: f64, e: f64) -> Self {
        FunctionSpec::AlgebraicTail { c, e }
    }

    pub fn rational1(c: f64) -> Self {
        FunctionSpec::Rational1 { c }
    }

    pub fn trig(period: f64, constant: f64, cos: Vec<f64>, sin: Vec<f64>) -> Self {
        FunctionSpec::TrigPoly(TrigPoly {
            period,
            constant,
            cos,
            sin,
        })
    }

    pub fn scaled(k: f64, child: FunctionSpec) -> Self {
        FunctionSpec::Scaled {
            k,
            child: Box::new(child),
        }
    }

    /// Sum with nested sums flattened.
    pub fn sum(terms: impl IntoIterator<Item = FunctionSpec>) -> Self {
        let mut flat = Vec::new();
        for term in terms {
            match term {
                FunctionSpec::Sum { terms } => flat.extend(terms),
                other => flat.push(other),
            }
        }
        FunctionSpec::Sum { terms: flat }
    }

    /// Checks parameters for finiteness and leaf-specific constraints.
    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{what} must be finite")))
            }
        };
        match self {
            FunctionSpec::Constant { c }
            | FunctionSpec::Rational1 { c }
            | FunctionSpec::Linear { c }
            | FunctionSpec::Log { c } => finite(*c, "coefficient"),
            FunctionSpec::Arctan { scale } | FunctionSpec::ArctanIntegral { scale } => {
                finite(*scale, "scale")
            }
            FunctionSpec::AlgebraicTail { c, e } => {
                finite(*c, "coefficient")?;
                finite(*e, "exponent")
            }
            FunctionSpec::PowerTail { c, p } => {
                finite(*c, "coefficient")?;
                finite(*p, "exponent")
            }
            FunctionSpec::TrigPoly(poly) => poly.validate(),
            FunctionSpec::Sum { terms } => terms.iter().try_for_each(FunctionSpec::validate),
            FunctionSpec::Scaled { k, child } => {
                finite(*k, "scale factor")?;
                child.validate()
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            FunctionSpec::Constant { c } => *c,
            FunctionSpec::Arctan { scale } => scale * x.atan(),
            FunctionSpec::AlgebraicTail { c, e } => {
                // (1+x²)^(-e) = hypot(1,x)^(-2e) stays finite for huge |x|
                c * x * x.hypot(1.0).powf(-2.0 * e)
            }
            FunctionSpec::TrigPoly(poly) => poly.eval(x),
            FunctionSpec::Rational1 { c } => {
                if x.abs() <= 1.0 {
                    c * x / (1.0 + x * x)
                } else {
                    c / (x + 1.0 / x)
                }
            }
            FunctionSpec::Sum { terms } => terms.iter().map(|t| t.eval(x)).sum(),
            FunctionSpec::Scaled { k, child } => k * child.eval(x),
            FunctionSpec::Linear { c } => c * x,
            FunctionSpec::ArctanIntegral { scale } => scale * (x * x.atan() - 0.5 * ln_1p_sq(x)),
            FunctionSpec::PowerTail { c, p } => c * (p * ln_1p_sq(x)).exp_m1(),
            FunctionSpec::Log { c } => c * ln_1p_sq(x),
        }
    }

    /// Structural derivative. Only the leaves that appear as potentials
    /// (trigonometric sums and antiderivative results) are supported.
    pub fn derivative(&self) -> Result<FunctionSpec> {
        Ok(match self {
            FunctionSpec::Constant { .. } => FunctionSpec::zero(),
            FunctionSpec::Linear { c } => FunctionSpec::Constant { c: *c },
            FunctionSpec::TrigPoly(poly) => FunctionSpec::TrigPoly(poly.derivative()),
            FunctionSpec::ArctanIntegral { scale } => FunctionSpec::Arctan { scale: *scale },
            FunctionSpec::PowerTail { c, p } => FunctionSpec::AlgebraicTail {
                c: 2.0 * c * p,
                e: 1.0 - p,
            },
            FunctionSpec::Log { c } => FunctionSpec::Rational1 { c: 2.0 * c },
            FunctionSpec::Sum { terms } => FunctionSpec::Sum {
                terms: terms
                    .iter()
                    .map(FunctionSpec::derivative)
                    .collect::<Result<_>>()?,
            },
            FunctionSpec::Scaled { k, child } => FunctionSpec::scaled(*k, child.derivative()?),
            FunctionSpec::Arctan { .. }
            | FunctionSpec::AlgebraicTail { .. }
            | FunctionSpec::Rational1 { .. } => {
                return Err(Error::Unsupported(format!(
                    "no structural derivative for {}",
                    self.kind_name()
                )))
            }
        })
    }

    /// Antiderivative `F` with `F(0) = 0`.
    pub fn antiderivative(&self) -> Result<FunctionSpec> {
        Ok(match self {
            FunctionSpec::Constant { c } => FunctionSpec::Linear { c: *c },
            FunctionSpec::Arctan { scale } => FunctionSpec::ArctanIntegral { scale: *scale },
            FunctionSpec::AlgebraicTail { c, e } => {
                if (e - 1.0).abs() < 1e-12 {
                    return Err(Error::UnsupportedExponent(*e));
                }
                FunctionSpec::PowerTail {
                    c: c / (2.0 * (1.0 - e)),
                    p: 1.0 - e,
                }
            }
            FunctionSpec::Rational1 { c } => FunctionSpec::Log { c: 0.5 * c },
            FunctionSpec::TrigPoly(poly) => {
                let periodic = FunctionSpec::TrigPoly(poly.periodic_antiderivative());
                if poly.constant == 0.0 {
                    periodic
                } else {
                    FunctionSpec::sum([periodic, FunctionSpec::Linear { c: poly.constant }])
                }
            }
            FunctionSpec::Sum { terms } => FunctionSpec::sum(
                terms
                    .iter()
                    .map(FunctionSpec::antiderivative)
                    .collect::<Result<Vec<_>>>()?,
            ),
            FunctionSpec::Scaled { k, child } => FunctionSpec::scaled(*k, child.antiderivative()?),
            FunctionSpec::Linear { .. }
            | FunctionSpec::ArctanIntegral { .. }
            | FunctionSpec::PowerTail { .. }
            | FunctionSpec::Log { .. } => {
                return Err(Error::Unsupported(format!(
                    "antiderivative of {} leaves the grammar",
                    self.kind_name()
                )))
            }
        })
    }

    /// Exact limits `(g(−∞), g(+∞))` for specs admissible as `g`.
    pub fn limits_at_infinity(&self) -> Result<(f64, f64)> {
        match self {
            FunctionSpec::Constant { c } => Ok((*c, *c)),
            FunctionSpec::Arctan { scale } => Ok((-scale * FRAC_PI_2, scale * FRAC_PI_2)),
            FunctionSpec::AlgebraicTail { e, .. } => {
                if *e > 0.5 {
                    Ok((0.0, 0.0))
                } else {
                    Err(Error::InadmissibleG(format!(
                        "algebraic_tail needs e > 1/2 for finite limits, got {e}"
                    )))
                }
            }
            FunctionSpec::Rational1 { .. } => Ok((0.0, 0.0)),
            FunctionSpec::Sum { terms } => terms.iter().try_fold((0.0, 0.0), |acc, t| {
                let (lo, hi) = t.limits_at_infinity()?;
                Ok((acc.0 + lo, acc.1 + hi))
            }),
            FunctionSpec::Scaled { k, child } => {
                let (lo, hi) = child.limits_at_infinity()?;
                Ok((k * lo, k * hi))
            }
            FunctionSpec::TrigPoly(_) => Err(Error::InadmissibleG(
                "trig_poly has no limit at infinity".into(),
            )),
            other => Err(Error::InadmissibleG(format!(
                "{} is unbounded",
                other.kind_name()
            ))),
        }
    }

    /// `g(x) − g(sign(x)·∞)` evaluated leaf by leaf, avoiding the
    /// cancellation of subtracting the limit from the value.
    pub fn tail_deviation(&self, x: f64) -> Result<f64> {
        Ok(match self {
            FunctionSpec::Constant { .. } => 0.0,
            // arctan x − sign(x)·π/2 = −arctan(1/x)
            FunctionSpec::Arctan { scale } => -scale * (1.0 / x).atan(),
            FunctionSpec::AlgebraicTail { .. } | FunctionSpec::Rational1 { .. } => {
                self.limits_at_infinity()?;
                self.eval(x)
            }
            FunctionSpec::Sum { terms } => terms
                .iter()
                .map(|t| t.tail_deviation(x))
                .sum::<Result<f64>>()?,
            FunctionSpec::Scaled { k, child } => k * child.tail_deviation(x)?,
            other => {
                other.limits_at_infinity()?;
                unreachable!("limits_at_infinity rejects every other leaf")
            }
        })
    }

    /// Upper bound for `sup_x |f(x)|`; infinite for unbounded leaves.
    pub fn sup_abs(&self) -> f64 {
        match self {
            FunctionSpec::Constant { c } => c.abs(),
            FunctionSpec::Arctan { scale } => scale.abs() * FRAC_PI_2,
            FunctionSpec::AlgebraicTail { c, e } => {
                if *e <= 0.5 {
                    return f64::INFINITY;
                }
                // maximum of x(1+x²)^(−e) sits at x² = 1/(2e−1)
                let x = (1.0 / (2.0 * e - 1.0)).sqrt();
                c.abs() * x * (1.0 + x * x).powf(-e)
            }
            FunctionSpec::TrigPoly(poly) => poly.sup_abs(),
            FunctionSpec::Rational1 { c } => 0.5 * c.abs(),
            FunctionSpec::Sum { terms } => terms.iter().map(FunctionSpec::sup_abs).sum(),
            FunctionSpec::Scaled { k, child } => k.abs() * child.sup_abs(),
            FunctionSpec::Linear { c } if *c == 0.0 => 0.0,
            FunctionSpec::Linear { .. }
            | FunctionSpec::ArctanIntegral { .. }
            | FunctionSpec::PowerTail { .. }
            | FunctionSpec::Log { .. } => f64::INFINITY,
        }
    }

    /// Collapses constants, trig sums of the given period, and sums/scalings
    /// of those into a single [`TrigPoly`].
    pub fn to_trig_poly(&self, period: f64) -> Result<TrigPoly> {
        match self {
            FunctionSpec::Constant { c } => Ok(TrigPoly {
                constant: *c,
                ..TrigPoly::zero(period)
            }),
            FunctionSpec::TrigPoly(poly) => {
                if poly.same_period(period) {
                    Ok(poly.clone())
                } else {
                    Err(Error::InadmissiblePsi(format!(
                        "trig_poly period {} does not match {period}",
                        poly.period
                    )))
                }
            }
            FunctionSpec::Sum { terms } => terms.iter().try_fold(TrigPoly::zero(period), |acc, t| {
                let poly = t.to_trig_poly(period)?;
                acc.add(&poly)
                    .ok_or_else(|| Error::InadmissiblePsi("period mismatch in sum".into()))
            }),
            FunctionSpec::Scaled { k, child } => Ok(child.to_trig_poly(period)?.scaled(*k)),
            other => Err(Error::InadmissiblePsi(format!(
                "{} is not periodic",
                other.kind_name()
            ))),
        }
    }

    /// The grammar key of this node.
    pub fn kind_name(&self) -> &'static str {
        match self {
            FunctionSpec::Constant { .. } => "constant",
            FunctionSpec::Arctan { .. } => "arctan",
            FunctionSpec::AlgebraicTail { .. } => "algebraic_tail",
            FunctionSpec::TrigPoly(_) => "trig_poly",
            FunctionSpec::Rational1 { .. } => "rational1",
            FunctionSpec::Sum { .. } => "sum",
            FunctionSpec::Scaled { .. } => "scaled",
            FunctionSpec::Linear { .. } => "linear",
            FunctionSpec::ArctanIntegral { .. } => "arctan_integral",
            FunctionSpec::PowerTail { .. } => "power_tail",
            FunctionSpec::Log { .. } => "log",
        }
    }
}

/// Removes the mean of a periodic `psi` over one period.
pub fn zero_mean_normalize(psi: &FunctionSpec, period: f64) -> Result<FunctionSpec> {
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::InadmissiblePsi(format!(
            "period must be positive, got {period}"
        )));
    }
    Ok(FunctionSpec::TrigPoly(psi.to_trig_poly(period)?.zero_mean()))
}
