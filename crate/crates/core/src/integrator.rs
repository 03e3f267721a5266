//! Explicit Runge-Kutta 8(5,3) of Dormand and Prince (Hairer's DOP853
//! coefficients) with proportional-integral step control.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest step magnitude before the integration is declared stiff.
pub const MIN_STEP: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Options {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on `|h|`.
    pub max_step: f64,
    pub max_steps: u64,
}

impl Options {
    /// Same absolute and relative tolerance.
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            max_step: f64::INFINITY,
            max_steps: 100_000_000,
        }
    }

    pub fn max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegratorStats {
    /// Accepted steps.
    pub steps: u64,
    pub rejected: u64,
    /// Largest normalized error estimate among accepted steps (≤ 1).
    pub max_error_estimate: f64,
}

impl IntegratorStats {
    pub fn merge(&mut self, other: &IntegratorStats) {
        self.steps += other.steps;
        self.rejected += other.rejected;
        self.max_error_estimate = self.max_error_estimate.max(other.max_error_estimate);
    }
}

// step control
const SAFE: f64 = 0.9;
const FAC_MIN: f64 = 0.333;
const FAC_MAX: f64 = 6.0;
const BETA: f64 = 0.04;
const EXPO1: f64 = 1.0 / 8.0 - BETA * 0.2;

#[allow(clippy::excessive_precision)]
mod tableau {
    pub const C2: f64 = 0.526001519587677318785587544488e-01;
    pub const C3: f64 = 0.789002279381515978178381316732e-01;
    pub const C4: f64 = 0.118350341907227396726757197510e+00;
    pub const C5: f64 = 0.281649658092772603273242802490e+00;
    pub const C6: f64 = 0.333333333333333333333333333333e+00;
    pub const C7: f64 = 0.25e+00;
    pub const C8: f64 = 0.307692307692307692307692307692e+00;
    pub const C9: f64 = 0.651282051282051282051282051282e+00;
    pub const C10: f64 = 0.6e+00;
    pub const C11: f64 = 0.857142857142857142857142857142e+00;

    pub const B1: f64 = 5.42937341165687622380535766363e-2;
    pub const B6: f64 = 4.45031289275240888144113950566e0;
    pub const B7: f64 = 1.89151789931450038304281599044e0;
    pub const B8: f64 = -5.8012039600105847814672114227e0;
    pub const B9: f64 = 3.1116436695781989440891606237e-1;
    pub const B10: f64 = -1.52160949662516078556178806805e-1;
    pub const B11: f64 = 2.01365400804030348374776537501e-1;
    pub const B12: f64 = 4.47106157277725905176885569043e-2;

    pub const BHH1: f64 = 0.244094488188976377952755905512e+00;
    pub const BHH2: f64 = 0.733846688281611857341361741547e+00;
    pub const BHH3: f64 = 0.220588235294117647058823529412e-01;

    pub const ER1: f64 = 0.1312004499419488073250102996e-01;
    pub const ER6: f64 = -0.1225156446376204440720569753e+01;
    pub const ER7: f64 = -0.4957589496572501915214079952e+00;
    pub const ER8: f64 = 0.1664377182454986536961530415e+01;
    pub const ER9: f64 = -0.3503288487499736816886487290e+00;
    pub const ER10: f64 = 0.3341791187130174790297318841e+00;
    pub const ER11: f64 = 0.8192320648511571246570742613e-01;
    pub const ER12: f64 = -0.2235530786388629525884427845e-01;

    pub const A21: f64 = 5.26001519587677318785587544488e-2;
    pub const A31: f64 = 1.97250569845378994544595329183e-2;
    pub const A32: f64 = 5.91751709536136983633785987549e-2;
    pub const A41: f64 = 2.95875854768068491816892993775e-2;
    pub const A43: f64 = 8.87627564304205475450678981324e-2;
    pub const A51: f64 = 2.41365134159266685502369798665e-1;
    pub const A53: f64 = -8.84549479328286085344864962717e-1;
    pub const A54: f64 = 9.24834003261792003115737966543e-1;
    pub const A61: f64 = 3.7037037037037037037037037037e-2;
    pub const A64: f64 = 1.70828608729473871279604482173e-1;
    pub const A65: f64 = 1.25467687566822425016691814123e-1;
    pub const A71: f64 = 3.7109375e-2;
    pub const A74: f64 = 1.70252211019544039314978060272e-1;
    pub const A75: f64 = 6.02165389804559606850219397283e-2;
    pub const A76: f64 = -1.7578125e-2;
    pub const A81: f64 = 3.70920001185047927108779319836e-2;
    pub const A84: f64 = 1.70383925712239993810214054705e-1;
    pub const A85: f64 = 1.07262030446373284651809199168e-1;
    pub const A86: f64 = -1.53194377486244017527936158236e-2;
    pub const A87: f64 = 8.27378916381402288758473766002e-3;
    pub const A91: f64 = 6.24110958716075717114429577812e-1;
    pub const A94: f64 = -3.36089262944694129406857109825e0;
    pub const A95: f64 = -8.68219346841726006818189891453e-1;
    pub const A96: f64 = 2.75920996994467083049415600797e1;
    pub const A97: f64 = 2.01540675504778934086186788979e1;
    pub const A98: f64 = -4.34898841810699588477366255144e1;
    pub const A101: f64 = 4.77662536438264365890433908527e-1;
    pub const A104: f64 = -2.48811461997166764192642586468e0;
    pub const A105: f64 = -5.90290826836842996371446475743e-1;
    pub const A106: f64 = 2.12300514481811942347288949897e1;
    pub const A107: f64 = 1.52792336328824235832596922938e1;
    pub const A108: f64 = -3.32882109689848629194453265587e1;
    pub const A109: f64 = -2.03312017085086261358222928593e-2;
    pub const A111: f64 = -9.3714243008598732571704021658e-1;
    pub const A114: f64 = 5.18637242884406370830023853209e0;
    pub const A115: f64 = 1.09143734899672957818500254654e0;
    pub const A116: f64 = -8.14978701074692612513997267357e0;
    pub const A117: f64 = -1.85200656599969598641566180701e1;
    pub const A118: f64 = 2.27394870993505042818970056734e1;
    pub const A119: f64 = 2.49360555267965238987089396762e0;
    pub const A1110: f64 = -3.0467644718982195003823669022e0;
    pub const A121: f64 = 2.27331014751653820792359768449e0;
    pub const A124: f64 = -1.05344954667372501984066689879e1;
    pub const A125: f64 = -2.00087205822486249909675718444e0;
    pub const A126: f64 = -1.79589318631187989172765950534e1;
    pub const A127: f64 = 2.79488845294199600508499808837e1;
    pub const A128: f64 = -2.85899827713502369474065508674e0;
    pub const A129: f64 = -8.87285693353062954433549289258e0;
    pub const A1210: f64 = 1.23605671757943030647266201528e1;
    pub const A1211: f64 = 6.43392746015763530355970484046e-1;
}

use tableau::*;

/// `y + h·Σ wᵢ·kᵢ`.
#[inline]
fn combine<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (w, k) in terms {
            acc += w * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// One DOP853 trial step: (new state, 5th-order error, 3rd-order error).
#[inline]
fn trial<const N: usize, F>(f: &mut F, t: f64, y: &[f64; N], k1: &[f64; N], h: f64) -> ([f64; N], [f64; N], [f64; N])
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let k2 = f(t + C2 * h, &combine(y, h, &[(A21, k1)]));
    let k3 = f(t + C3 * h, &combine(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(t + C4 * h, &combine(y, h, &[(A41, k1), (A43, &k3)]));
    let k5 = f(t + C5 * h, &combine(y, h, &[(A51, k1), (A53, &k3), (A54, &k4)]));
    let k6 = f(t + C6 * h, &combine(y, h, &[(A61, k1), (A64, &k4), (A65, &k5)]));
    let k7 = f(t + C7 * h, &combine(y, h, &[(A71, k1), (A74, &k4), (A75, &k5), (A76, &k6)]));
    let k8 = f(
        t + C8 * h,
        &combine(y, h, &[(A81, k1), (A84, &k4), (A85, &k5), (A86, &k6), (A87, &k7)]),
    );
    let k9 = f(
        t + C9 * h,
        &combine(y, h, &[(A91, k1), (A94, &k4), (A95, &k5), (A96, &k6), (A97, &k7), (A98, &k8)]),
    );
    let k10 = f(
        t + C10 * h,
        &combine(
            y,
            h,
            &[(A101, k1), (A104, &k4), (A105, &k5), (A106, &k6), (A107, &k7), (A108, &k8), (A109, &k9)],
        ),
    );
    let k11 = f(
        t + C11 * h,
        &combine(
            y,
            h,
            &[
                (A111, k1),
                (A114, &k4),
                (A115, &k5),
                (A116, &k6),
                (A117, &k7),
                (A118, &k8),
                (A119, &k9),
                (A1110, &k10),
            ],
        ),
    );
    let k12 = f(
        t + h,
        &combine(
            y,
            h,
            &[
                (A121, k1),
                (A124, &k4),
                (A125, &k5),
                (A126, &k6),
                (A127, &k7),
                (A128, &k8),
                (A129, &k9),
                (A1210, &k10),
                (A1211, &k11),
            ],
        ),
    );
    let mut bsum = [0.0; N];
    let mut err5 = [0.0; N];
    let mut err3 = [0.0; N];
    for i in 0..N {
        bsum[i] = B1 * k1[i]
            + B6 * k6[i]
            + B7 * k7[i]
            + B8 * k8[i]
            + B9 * k9[i]
            + B10 * k10[i]
            + B11 * k11[i]
            + B12 * k12[i];
        err3[i] = bsum[i] - BHH1 * k1[i] - BHH2 * k9[i] - BHH3 * k12[i];
        err5[i] = ER1 * k1[i]
            + ER6 * k6[i]
            + ER7 * k7[i]
            + ER8 * k8[i]
            + ER9 * k9[i]
            + ER10 * k10[i]
            + ER11 * k11[i]
            + ER12 * k12[i];
    }
    let mut y_new = *y;
    for i in 0..N {
        y_new[i] += h * bsum[i];
    }
    (y_new, err5, err3)
}

/// Hairer's normalized error: `|h|·err5·√(1/(N·(err5² + 0.01·err3²)))`.
fn error_norm<const N: usize>(y: &[f64; N], y_new: &[f64; N], err5: &[f64; N], err3: &[f64; N], h: f64, opts: &Options) -> f64 {
    let mut e5 = 0.0;
    let mut e3 = 0.0;
    for i in 0..N {
        let sk = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
        e5 += (err5[i] / sk).powi(2);
        e3 += (err3[i] / sk).powi(2);
    }
    let mut deno = e5 + 0.01 * e3;
    if deno <= 0.0 {
        deno = 1.0;
    }
    h.abs() * e5 * (1.0 / (N as f64 * deno)).sqrt()
}

/// Initial step guess (Hairer's `hinit` for an order-8 method).
fn initial_step<const N: usize, F>(f: &mut F, t: f64, y: &[f64; N], f0: &[f64; N], dir: f64, opts: &Options) -> f64
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..N {
        let sk = opts.atol + opts.rtol * y[i].abs();
        dnf += (f0[i] / sk).powi(2);
        dny += (y[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
    h = h.min(opts.max_step);
    let y1 = combine(y, dir * h, &[(1.0, f0)]);
    let f1 = f(t + dir * h, &y1);
    let mut der2 = 0.0;
    for i in 0..N {
        let sk = opts.atol + opts.rtol * y[i].abs();
        der2 += ((f1[i] - f0[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.abs().max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(1.0 / 8.0) };
    (100.0 * h).min(h1).min(opts.max_step)
}

/// Integrates `y' = f(t, y)` from `(t0, y0)` to `t1` (either direction),
/// landing exactly on `t1`. `observer` sees the state after every accepted
/// step, including the final one.
pub fn integrate<const N: usize, F, O>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    opts: &Options,
    mut observer: O,
) -> Result<([f64; N], IntegratorStats)>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    O: FnMut(f64, &[f64; N]),
{
    let mut stats = IntegratorStats::default();
    if t1 == t0 {
        return Ok((y0, stats));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::InvalidInput("tolerances must be positive".into()));
    }
    let dir = (t1 - t0).signum();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = initial_step(&mut f, t, &y, &k1, dir, opts);
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;
    loop {
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::SolverFailure(format!("state became non-finite at t = {t}")));
        }
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(Error::SolverFailure(format!("step budget exhausted at t = {t}")));
        }
        let remaining = (t1 - t) * dir;
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if h < MIN_STEP && !last {
            return Err(Error::StiffnessFailure { t, step: h });
        }
        let (y_new, err5, err3) = trial(&mut f, t, &y, &k1, dir * h);
        let err = error_norm(&y, &y_new, &err5, &err3, h, opts);
        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            // accepted
            let fac = (fac11 / fac_old.powf(BETA) / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            fac_old = err.max(1e-4);
            stats.steps += 1;
            stats.max_error_estimate = stats.max_error_estimate.max(err);
            t = if last { t1 } else { t + dir * h };
            y = y_new;
            observer(t, &y);
            if last {
                return Ok((y, stats));
            }
            k1 = f(t, &y);
            h_new = h_new.min(opts.max_step);
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new;
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h /= (fac11 / SAFE).min(1.0 / FAC_MIN);
            if h < MIN_STEP {
                return Err(Error::StiffnessFailure { t, step: h });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn exponential_decay() {
        let (y, stats) = integrate(|_, y: &[f64; 1]| [-y[0]], 0.0, [1.0], 5.0, &Options::with_tol(1e-12), |_, _| {}).unwrap();
        assert!((y[0] - (-5f64).exp()).abs() < 1e-12);
        assert!(stats.steps > 0 && stats.max_error_estimate <= 1.0);
    }

    #[test]
    fn harmonic_oscillator_closes() {
        let opts = Options::with_tol(1e-12);
        let (y, _) = integrate(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [1.0, 0.0], 10.0 * TAU, &opts, |_, _| {}).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-10 && y[1].abs() < 1e-10);
    }

    #[test]
    fn backward_direction() {
        let opts = Options::with_tol(1e-12);
        let f = |t: f64, y: &[f64; 1]| [t.cos() * y[0]];
        let (y1, _) = integrate(f, 0.0, [1.0], 3.0, &opts, |_, _| {}).unwrap();
        assert!((y1[0] - 3f64.sin().exp()).abs() < 1e-11);
        let (y0, _) = integrate(f, 3.0, y1, 0.0, &opts, |_, _| {}).unwrap();
        assert!((y0[0] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn max_step_is_respected() {
        let mut times = vec![0.0];
        let opts = Options::with_tol(1e-8).max_step(0.1);
        integrate(|_, _y: &[f64; 1]| [1.0], 0.0, [0.0], 2.0, &opts, |t, _| times.push(t)).unwrap();
        assert!(times.windows(2).all(|w| w[1] - w[0] <= 0.1 + 1e-15));
        assert_eq!(*times.last().unwrap(), 2.0);
    }

    #[test]
    fn eighth_order_convergence() {
        // error of a fixed problem falls by roughly 2^8 per halving of h
        let f = |_: f64, y: &[f64; 2]| [y[1], -y[0]];
        let run = |h: f64| {
            let mut y = [1.0, 0.0];
            let mut t = 0.0;
            let steps = (2.0 / h).round() as usize;
            for _ in 0..steps {
                let mut ff = f;
                let k1 = ff(t, &y);
                y = trial(&mut ff, t, &y, &k1, h).0;
                t += h;
            }
            (y[0] - 2f64.cos()).abs()
        };
        let ratio = run(0.4) / run(0.2);
        assert!(ratio > 150.0, "{ratio}");
    }

    #[test]
    fn blow_up_is_reported() {
        let err = integrate(|_, y: &[f64; 1]| [y[0] * y[0]], 0.0, [1.0], 2.0, &Options::with_tol(1e-10), |_, _| {}).unwrap_err();
        assert!(matches!(err, Error::StiffnessFailure { .. } | Error::SolverFailure(_)), "{err:?}");
    }
}
