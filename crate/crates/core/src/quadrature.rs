//! Quadrature: globally adaptive 21-point Gauss-Kronrod on finite
//! intervals, and the periodic trapezoid rule with node doubling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Compensated (Neumaier) running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for Neumaier {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Neumaier::default();
        iter.into_iter().for_each(|v| acc.add(v));
        acc
    }
}

/// Absolute and relative accuracy request; a result is accepted when its
/// error estimate is below `max(abs, rel·|value|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// QUADPACK error scaling: the raw Gauss/Kronrod difference is pessimistic
/// for smooth integrands and is floored at the rounding level.
fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

/// One 21-point Kronrod panel: (value, error estimate, rounding floor).
fn qk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_abs = res_k.abs();
    let mut res_g = 0.0;
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let scale = half.abs();
    let err = rescale_error((res_k - res_g) * half, res_abs * scale, res_asc * scale);
    (res_k * half, err, 50.0 * f64::EPSILON * res_abs * scale)
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    floor: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Maximum number of panels before giving up.
const MAX_PANELS: usize = 2_000_000;

/// Globally adaptive Gauss-Kronrod over `[a, b]`.
pub fn gauss_kronrod<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<QuadResult> {
    gauss_kronrod_breaks(f, &[a, b], tol)
}

/// Globally adaptive Gauss-Kronrod over consecutive intervals of `breaks`
/// (increasing). Breakpoints let the caller place panel edges at known
/// kinks or oscillation nodes.
pub fn gauss_kronrod_breaks<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<QuadResult> {
    if breaks.len() < 2 || breaks.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidInput(
            "quadrature needs at least two finite breakpoints".into(),
        ));
    }
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in breaks.windows(2) {
        if w[1] == w[0] {
            continue;
        }
        heap.push(panel(&f, w[0], w[1]));
        evaluations += 21;
    }
    let (mut value, mut error, mut floor) = totals(&heap);
    loop {
        if !value.total().is_finite() {
            return Err(Error::PrecisionFailure {
                context: "non-finite integrand".into(),
                h: f64::NAN,
            });
        }
        // a request below the rounding level is met once every panel sits
        // at its floor
        let done = |v: f64, e: f64, fl: f64| e <= tol.target(v) || e <= 2.0 * fl;
        if done(value.total(), error, floor) {
            // running sums drift; confirm with exact ones
            (value, error, floor) = totals(&heap);
            if done(value.total(), error, floor) {
                return Ok(QuadResult {
                    value: value.total(),
                    error,
                    evaluations,
                });
            }
        }
        let Some(worst) = heap.pop() else {
            return Ok(QuadResult {
                value: 0.0,
                error: 0.0,
                evaluations,
            });
        };
        let mid = 0.5 * (worst.a + worst.b);
        if heap.len() + 2 > MAX_PANELS || mid <= worst.a || mid >= worst.b {
            return Err(Error::PrecisionFailure {
                context: format!("adaptive quadrature error {error:e} above target"),
                h: f64::NAN,
            });
        }
        value.add(-worst.value);
        error -= worst.error;
        floor -= worst.floor;
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let p = panel(&f, a, b);
            evaluations += 21;
            value.add(p.value);
            error += p.error;
            floor += p.floor;
            heap.push(p);
        }
    }
}

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let (value, error, floor) = qk21(f, a, b);
    Panel {
        a,
        b,
        value,
        error,
        floor,
    }
}

fn totals(heap: &BinaryHeap<Panel>) -> (Neumaier, f64, f64) {
    let value: Neumaier = heap.iter().map(|p| p.value).collect();
    let error = heap.iter().map(|p| p.error).sum();
    let floor = heap.iter().map(|p| p.floor).sum();
    (value, error, floor)
}

/// Result of a periodic trapezoid mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodicMean {
    pub value: f64,
    pub nodes: usize,
}

/// Mean of a `period`-periodic function by the trapezoid rule, starting at
/// `min_nodes` and doubling until two successive estimates differ by less
/// than `max(abs, rel·|value|)`. Fails once `max_nodes` is exceeded.
pub fn periodic_mean<F: Fn(f64) -> f64>(
    f: F,
    period: f64,
    tol: Tolerance,
    min_nodes: usize,
    max_nodes: usize,
) -> Result<PeriodicMean> {
    let mut nodes = min_nodes.max(4);
    let mut sum: Neumaier = (0..nodes)
        .map(|k| f(period * k as f64 / nodes as f64))
        .collect();
    let mut prev = sum.total() / nodes as f64;
    while 2 * nodes <= max_nodes {
        // the doubled grid reuses every old node; only midpoints are new
        for k in 0..nodes {
            sum.add(f(period * (2 * k + 1) as f64 / (2 * nodes) as f64));
        }
        nodes *= 2;
        let next = sum.total() / nodes as f64;
        if (next - prev).abs() <= tol.target(next) {
            return Ok(PeriodicMean { value: next, nodes });
        }
        prev = next;
    }
    Err(Error::PrecisionFailure {
        context: format!("periodic trapezoid not converged with {nodes} nodes"),
        h: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let r = gauss_kronrod(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, Tolerance::new(1e-14, 1e-14))
            .unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((r.value - exact).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity_converges() {
        let r = gauss_kronrod(|x: f64| x.sqrt().ln(), 0.0, 1.0, Tolerance::new(1e-12, 1e-12)).unwrap();
        assert!((r.value + 0.5).abs() < 1e-11);
    }

    #[test]
    fn breakpoints_handle_kinks() {
        let r = gauss_kronrod_breaks(|x: f64| x.abs(), &[-1.0, 0.0, 3.0], Tolerance::new(1e-14, 1e-14))
            .unwrap();
        assert!((r.value - 5.0).abs() < 1e-13);
        assert_eq!(r.evaluations, 42);
    }

    #[test]
    fn trapezoid_is_spectral_for_periodic_input() {
        let m = periodic_mean(
            |t: f64| (t.cos()).exp(),
            2.0 * PI,
            Tolerance::new(1e-15, 1e-14),
            8,
            1 << 12,
        )
        .unwrap();
        // mean of e^{cos t} is I0(1)
        assert!((m.value - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!(m.nodes <= 64);
    }

    #[test]
    fn trapezoid_budget_is_enforced() {
        let err = periodic_mean(
            |t: f64| (1e6 * t.cos()).cos(),
            2.0 * PI,
            Tolerance::new(1e-14, 0.0),
            8,
            1 << 10,
        )
        .unwrap_err();
        assert!(matches!(err, Error::PrecisionFailure { .. }));
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let vals = [1.0, 1e100, 1.0, -1e100];
        let s: Neumaier = vals.iter().copied().collect();
        assert_eq!(s.total(), 2.0);
    }
}
