//! One instance of `ẍ + n²x + g(x) + ψ'(x) = p(t)`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::{FunctionSpec, TrigPoly};

/// Serializable description of a system, as written in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub n: u32,
    pub g: FunctionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<FunctionSpec>,
    /// Period of `psi`; taken from the `trig_poly` itself when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_period: Option<f64>,
    pub p: FunctionSpec,
}

/// Validated system with cached potential and derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct DuffingSystem {
    n: u32,
    g: FunctionSpec,
    big_g: FunctionSpec,
    g_limits: (f64, f64),
    psi: TrigPoly,
    psi_prime: TrigPoly,
    p: TrigPoly,
}

/// Finds the period of a psi spec from its first trig_poly leaf.
fn inferred_period(spec: &FunctionSpec) -> Option<f64> {
    match spec {
        FunctionSpec::TrigPoly(poly) => Some(poly.period),
        FunctionSpec::Sum { terms } => terms.iter().find_map(inferred_period),
        FunctionSpec::Scaled { child, .. } => inferred_period(child),
        _ => None,
    }
}

impl DuffingSystem {
    /// Builds a system. `psi` is normalized to zero mean over its period;
    /// `None` means `ψ ≡ 0`.
    pub fn new(n: u32, g: FunctionSpec, psi: Option<(FunctionSpec, f64)>, p: FunctionSpec) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("resonance order n must be positive".into()));
        }
        g.validate()?;
        let g_limits = g.limits_at_infinity()?;
        let big_g = g.antiderivative()?;
        let psi = match psi {
            Some((spec, period)) => {
                spec.validate()?;
                match crate::function::zero_mean_normalize(&spec, period)? {
                    FunctionSpec::TrigPoly(poly) => poly,
                    _ => unreachable!("normalization always yields a trig_poly"),
                }
            }
            None => TrigPoly::zero(TAU),
        };
        p.validate()?;
        let p = p.to_trig_poly(TAU).map_err(|e| {
            Error::InadmissibleForcing(format!("p must be a trig_poly of period 2π ({e})"))
        })?;
        let psi_prime = psi.derivative();
        Ok(Self {
            n,
            g,
            big_g,
            g_limits,
            psi,
            psi_prime,
            p,
        })
    }

    pub fn from_spec(spec: &SystemSpec) -> Result<Self> {
        let psi = match &spec.psi {
            None => None,
            Some(psi) => {
                let period = spec
                    .psi_period
                    .or_else(|| inferred_period(psi))
                    .ok_or_else(|| Error::InadmissiblePsi("psi needs a period".into()))?;
                Some((psi.clone(), period))
            }
        };
        Self::new(spec.n, spec.g.clone(), psi, spec.p.clone())
    }

    /// Spec describing this system (with `psi` in normalized form).
    pub fn to_spec(&self) -> SystemSpec {
        let psi = (!self.psi.is_zero()).then(|| FunctionSpec::TrigPoly(self.psi.clone()));
        SystemSpec {
            n: self.n,
            g: self.g.clone(),
            psi,
            psi_period: None,
            p: FunctionSpec::TrigPoly(self.p.clone()),
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    pub fn g(&self) -> &FunctionSpec {
        &self.g
    }

    /// `G(x) = ∫₀ˣ g`.
    pub fn big_g(&self) -> &FunctionSpec {
        &self.big_g
    }

    pub fn psi(&self) -> &TrigPoly {
        &self.psi
    }

    pub fn psi_prime(&self) -> &TrigPoly {
        &self.psi_prime
    }

    pub fn p(&self) -> &TrigPoly {
        &self.p
    }

    /// `(g(−∞), g(+∞))`.
    pub fn g_limits(&self) -> (f64, f64) {
        self.g_limits
    }

    /// Signed jump `g(+∞) − g(−∞)`.
    pub fn delta_g(&self) -> f64 {
        self.g_limits.1 - self.g_limits.0
    }

    pub fn is_autonomous(&self) -> bool {
        self.p.is_zero() && self.psi.is_zero()
    }

    /// The same `n` and `g` with `p ≡ 0` and `ψ ≡ 0`.
    pub fn autonomous(&self) -> Self {
        Self {
            psi: TrigPoly::zero(self.psi.period),
            psi_prime: TrigPoly::zero(self.psi.period),
            p: TrigPoly::zero(TAU),
            ..self.clone()
        }
    }

    /// Same system with forcing `p(t + shift)`.
    pub fn time_shifted(&self, shift: f64) -> Self {
        let mut p = self.p.clone();
        let k = p.harmonics();
        p.cos.resize(k, 0.0);
        p.sin.resize(k, 0.0);
        for m in 1..=k {
            let (a, b) = (p.cos[m - 1], p.sin[m - 1]);
            let (s, c) = (m as f64 * shift).sin_cos();
            // a cos(m(t+τ)) + b sin(m(t+τ)) regrouped in cos mt, sin mt
            p.cos[m - 1] = a * c + b * s;
            p.sin[m - 1] = b * c - a * s;
        }
        Self { p, ..self.clone() }
    }

    /// Vector field in `(x, y = ẋ/n)`.
    #[inline]
    pub fn rhs(&self, t: f64, s: &[f64; 2]) -> [f64; 2] {
        let n = self.nf();
        let [x, y] = *s;
        let force = self.g.eval(x) + self.psi_prime.eval(x) - self.p.eval(t);
        [n * y, -n * x - force / n]
    }

    /// `H = ½n(x²+y²) + G(x)/n − x·p(t)/n + ψ(x)/n`.
    pub fn hamiltonian(&self, x: f64, y: f64, t: f64) -> f64 {
        let n = self.nf();
        0.5 * n * (x * x + y * y)
            + (self.big_g.eval(x) - x * self.p.eval(t) + self.psi.eval(x)) / n
    }

    /// Conserved energy `n²x²/2 + (ny)²/2 + G(x) + ψ(x)` when `p ≡ 0`.
    pub fn energy(&self, x: f64, y: f64) -> f64 {
        let n = self.nf();
        0.5 * n * n * (x * x + y * y) + self.big_g.eval(x) + self.psi.eval(x)
    }

    pub fn sup_g(&self) -> f64 {
        self.g.sup_abs()
    }

    pub fn sup_p(&self) -> f64 {
        self.p.sup_abs()
    }

    pub fn sup_psi(&self) -> f64 {
        self.psi.sup_abs()
    }

    pub fn sup_psi_prime(&self) -> f64 {
        self.psi_prime.sup_abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ding() -> DuffingSystem {
        DuffingSystem::new(
            1,
            FunctionSpec::arctan(1.0),
            None,
            FunctionSpec::trig(TAU, 0.0, vec![4.0], vec![]),
        )
        .unwrap()
    }

    #[test]
    fn builds_cached_pieces() {
        let sys = ding();
        assert_eq!(sys.big_g().eval(0.0), 0.0);
        assert_eq!(sys.delta_g(), std::f64::consts::PI);
        assert!(!sys.is_autonomous());
        assert!(sys.autonomous().is_autonomous());
    }

    #[test]
    fn rejects_bad_inputs() {
        let trig = FunctionSpec::trig(TAU, 0.0, vec![1.0], vec![]);
        assert!(matches!(
            DuffingSystem::new(1, trig.clone(), None, trig.clone()),
            Err(Error::InadmissibleG(_))
        ));
        assert!(matches!(
            DuffingSystem::new(1, FunctionSpec::arctan(1.0), None, FunctionSpec::arctan(1.0)),
            Err(Error::InadmissibleForcing(_))
        ));
        assert!(matches!(
            DuffingSystem::new(0, FunctionSpec::arctan(1.0), None, trig),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn psi_is_stored_zero_mean() {
        let psi = FunctionSpec::trig(3.0, 1.5, vec![], vec![1.0]);
        let sys = DuffingSystem::new(2, FunctionSpec::zero(), Some((psi, 3.0)), FunctionSpec::zero()).unwrap();
        assert_eq!(sys.psi().constant, 0.0);
        assert_eq!(sys.psi().sin, vec![1.0]);
    }

    #[test]
    fn spec_round_trip() {
        let json = r#"{"n":1,"g":{"kind":"arctan","scale":1.0},"psi":{"kind":"trig_poly","period":6.283185307179586,"sin":[1.0]},"p":{"kind":"trig_poly","period":6.283185307179586,"cos":[1.0]}}"#;
        let spec: SystemSpec = serde_json::from_str(json).unwrap();
        let sys = DuffingSystem::from_spec(&spec).unwrap();
        let back = serde_json::to_string(&sys.to_spec()).unwrap();
        assert_eq!(back, json);
    }

    #[test]
    fn time_shift_rotates_forcing() {
        let sys = DuffingSystem::new(
            1,
            FunctionSpec::arctan(1.0),
            None,
            FunctionSpec::trig(TAU, 0.2, vec![1.0, 0.0, 0.5], vec![0.0, -2.0]),
        )
        .unwrap();
        let tau = 0.83;
        let shifted = sys.time_shifted(tau);
        for &t in &[0.0, 0.4, 2.0, 5.5] {
            assert!((shifted.p().eval(t) - sys.p().eval(t + tau)).abs() < 1e-13);
        }
    }

    #[test]
    fn hamiltonian_generates_the_vector_field() {
        let sys = ding();
        let (x, y, t) = (1.3, -0.4, 0.7);
        let e = 1e-6;
        let dh_dy = (sys.hamiltonian(x, y + e, t) - sys.hamiltonian(x, y - e, t)) / (2.0 * e);
        let dh_dx = (sys.hamiltonian(x + e, y, t) - sys.hamiltonian(x - e, y, t)) / (2.0 * e);
        let [dx, dy] = sys.rhs(t, &[x, y]);
        assert!((dx - dh_dy).abs() < 1e-8);
        assert!((dy + dh_dx).abs() < 1e-8);
    }
}
