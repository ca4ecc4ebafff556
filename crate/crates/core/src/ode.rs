//! Dormand–Prince 8(5,3) integrator for complex-valued systems.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step size; `None` leaves it unbounded.
    pub max_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-9,
            atol: 1e-9,
            max_step: None,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const SAFE: f64 = 0.9;
const FAC_MIN: f64 = 1.0 / 3.0;
const FAC_MAX: f64 = 6.0;

// Butcher tableau (Hairer & Wanner), stages 1..12
#[allow(clippy::excessive_precision)]
mod tableau {
    pub const C2: f64 = 0.526001519587677318785587544488E-01;
    pub const C3: f64 = 0.789002279381515978178381316732E-01;
    pub const C4: f64 = 0.118350341907227396726757197510E+00;
    pub const C5: f64 = 0.281649658092772603273242802490E+00;
    pub const C6: f64 = 0.333333333333333333333333333333E+00;
    pub const C7: f64 = 0.25E+00;
    pub const C8: f64 = 0.307692307692307692307692307692E+00;
    pub const C9: f64 = 0.651282051282051282051282051282E+00;
    pub const C10: f64 = 0.6E+00;
    pub const C11: f64 = 0.857142857142857142857142857142E+00;

    pub const A21: f64 = 5.26001519587677318785587544488E-2;
    pub const A31: f64 = 1.97250569845378994544595329183E-2;
    pub const A32: f64 = 5.91751709536136983633785987549E-2;
    pub const A41: f64 = 2.95875854768068491816892993775E-2;
    pub const A43: f64 = 8.87627564304205475450678981324E-2;
    pub const A51: f64 = 2.41365134159266685502369798665E-1;
    pub const A53: f64 = -8.84549479328286085344864962717E-1;
    pub const A54: f64 = 9.24834003261792003115737966543E-1;
    pub const A61: f64 = 3.7037037037037037037037037037E-2;
    pub const A64: f64 = 1.70828608729473871279604482173E-1;
    pub const A65: f64 = 1.25467687566822425016691814123E-1;
    pub const A71: f64 = 3.7109375E-2;
    pub const A74: f64 = 1.70252211019544039314978060272E-1;
    pub const A75: f64 = 6.02165389804559606850219397283E-2;
    pub const A76: f64 = -1.7578125E-2;
    pub const A81: f64 = 3.70920001185047927108779319836E-2;
    pub const A84: f64 = 1.70383925712239993810214054705E-1;
    pub const A85: f64 = 1.07262030446373284651809199168E-1;
    pub const A86: f64 = -1.53194377486244017527936158236E-2;
    pub const A87: f64 = 8.27378916381402288758473766002E-3;
    pub const A91: f64 = 6.24110958716075717114429577812E-1;
    pub const A94: f64 = -3.36089262944694129406857109825E0;
    pub const A95: f64 = -8.68219346841726006818189891453E-1;
    pub const A96: f64 = 2.75920996994467083049415600797E1;
    pub const A97: f64 = 2.01540675504778934086186788979E1;
    pub const A98: f64 = -4.34898841810699588477366255144E1;
    pub const A101: f64 = 4.77662536438264365890433908527E-1;
    pub const A104: f64 = -2.48811461997166764192642586468E0;
    pub const A105: f64 = -5.90290826836842996371446475743E-1;
    pub const A106: f64 = 2.12300514481811942347288949897E1;
    pub const A107: f64 = 1.52792336328824235832596922938E1;
    pub const A108: f64 = -3.32882109689848629194453265587E1;
    pub const A109: f64 = -2.03312017085086261358222928593E-2;
    pub const A111: f64 = -9.3714243008598732571704021658E-1;
    pub const A114: f64 = 5.18637242884406370830023853209E0;
    pub const A115: f64 = 1.09143734899672957818500254654E0;
    pub const A116: f64 = -8.14978701074692612513997267357E0;
    pub const A117: f64 = -1.85200656599969598641566180701E1;
    pub const A118: f64 = 2.27394870993505042818970056734E1;
    pub const A119: f64 = 2.49360555267965238987089396762E0;
    pub const A1110: f64 = -3.0467644718982195003823669022E0;
    pub const A121: f64 = 2.27331014751653820792359768449E0;
    pub const A124: f64 = -1.05344954667372501984066689879E1;
    pub const A125: f64 = -2.00087205822486249909675718444E0;
    pub const A126: f64 = -1.79589318631187989172765950534E1;
    pub const A127: f64 = 2.79488845294199600508499808837E1;
    pub const A128: f64 = -2.85899827713502369474065508674E0;
    pub const A129: f64 = -8.87285693353062954433549289258E0;
    pub const A1210: f64 = 1.23605671757943030647266201528E1;
    pub const A1211: f64 = 6.43392746015763530355970484046E-1;

    pub const B1: f64 = 5.42937341165687622380535766363E-2;
    pub const B6: f64 = 4.45031289275240888144113950566E0;
    pub const B7: f64 = 1.89151789931450038304281599044E0;
    pub const B8: f64 = -5.8012039600105847814672114227E0;
    pub const B9: f64 = 3.1116436695781989440891606237E-1;
    pub const B10: f64 = -1.52160949662516078556178806805E-1;
    pub const B11: f64 = 2.01365400804030348374776537501E-1;
    pub const B12: f64 = 4.47106157277725905176885569043E-2;

    pub const BHH1: f64 = 0.244094488188976377952755905512E+00;
    pub const BHH2: f64 = 0.733846688281611857341361741547E+00;
    pub const BHH3: f64 = 0.220588235294117647058823529412E-01;

    pub const ER1: f64 = 0.1312004499419488073250102996E-01;
    pub const ER6: f64 = -0.1225156446376204440720569753E+01;
    pub const ER7: f64 = -0.4957589496572501915214079952E+00;
    pub const ER8: f64 = 0.1664377182454986536961530415E+01;
    pub const ER9: f64 = -0.3503288487499736816886487290E+00;
    pub const ER10: f64 = 0.3341791187130174790297318841E+00;
    pub const ER11: f64 = 0.8192320648511571246570742613E-01;
    pub const ER12: f64 = -0.2235530786388629525884427845E-01;
}

use tableau::*;

/// `y_out = y + h * sum_j a_j k_j`
fn combine(y: &[Complex64], h: f64, terms: &[(f64, &[Complex64])], out: &mut [Complex64]) {
    for i in 0..y.len() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, k) in terms {
            acc += *a * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

fn error_norm(y: &[Complex64], y_new: &[Complex64], e: &[Complex64], opts: &OdeOptions) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        let sk = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
        s += (e[i].norm() / sk).powi(2);
    }
    s
}

/// Integrates `y' = f(t, y)` from `t0`, returning the state at each entry of
/// `outputs` (ascending, all `>= t0`). The integrator lands exactly on each
/// output time. `on_step` sees every accepted step.
pub fn integrate<F, O>(
    mut f: F,
    t0: f64,
    y0: &[Complex64],
    outputs: &[f64],
    opts: &OdeOptions,
    mut on_step: O,
) -> Result<(Vec<Vec<Complex64>>, OdeStats)>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
    O: FnMut(f64, &[Complex64]),
{
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::domain("integrator tolerances must be positive"));
    }
    if outputs.windows(2).any(|w| w[1] < w[0])
        || outputs.iter().any(|t| !(t.is_finite() && *t >= t0))
    {
        return Err(Error::precondition(
            "output times must be ascending and not before the start",
        ));
    }
    let n = y0.len();
    let mut stats = OdeStats::default();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut results = Vec::with_capacity(outputs.len());

    let mut k: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); n]; 13];
    let mut ytmp = vec![Complex64::new(0.0, 0.0); n];
    let mut y_new = vec![Complex64::new(0.0, 0.0); n];
    let mut err5 = vec![Complex64::new(0.0, 0.0); n];
    let mut err3 = vec![Complex64::new(0.0, 0.0); n];

    f(t, &y, &mut k[1]);
    stats.evaluations += 1;

    let t_end = outputs.last().copied().unwrap_or(t0);
    let mut h = initial_step(&mut f, t, &y, &k[1], t_end - t0, opts, &mut stats);
    let mut out_idx = 0;

    loop {
        while out_idx < outputs.len() && outputs[out_idx] <= t {
            results.push(y.clone());
            out_idx += 1;
        }
        if out_idx == outputs.len() {
            return Ok((results, stats));
        }
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::Stalled {
                t,
                last_state: y,
                reason: format!("step budget of {} exhausted", opts.max_steps),
            });
        }
        if let Some(m) = opts.max_step {
            h = h.min(m);
        }
        let target = outputs[out_idx];
        let remaining = target - t;
        let clamped = h >= remaining;
        let h_step = if clamped { remaining } else { h };
        if h_step < 1e-14 * t.abs().max(1.0) && !clamped {
            return Err(Error::Stalled {
                t,
                last_state: y,
                reason: format!("step size underflow (h = {h_step:e})"),
            });
        }

        let (k1, rest) = k.split_at_mut(2);
        let k1 = &k1[1];
        let (k2, rest) = rest.split_first_mut().unwrap();
        combine(&y, h_step, &[(A21, k1)], &mut ytmp);
        f(t + C2 * h_step, &ytmp, k2);
        let (k3, rest) = rest.split_first_mut().unwrap();
        combine(&y, h_step, &[(A31, k1), (A32, k2)], &mut ytmp);
        f(t + C3 * h_step, &ytmp, k3);
        let (k4, rest) = rest.split_first_mut().unwrap();
        combine(&y, h_step, &[(A41, k1), (A43, k3)], &mut ytmp);
        f(t + C4 * h_step, &ytmp, k4);
        let (k5, rest) = rest.split_first_mut().unwrap();
        combine(&y, h_step, &[(A51, k1), (A53, k3), (A54, k4)], &mut ytmp);
        f(t + C5 * h_step, &ytmp, k5);
        let (k6, rest) = rest.split_first_mut().unwrap();
        combine(&y, h_step, &[(A61, k1), (A64, k4), (A65, k5)], &mut ytmp);
        f(t + C6 * h_step, &ytmp, k6);
        let (k7, rest) = rest.split_first_mut().unwrap();
        combine(
            &y,
            h_step,
            &[(A71, k1), (A74, k4), (A75, k5), (A76, k6)],
            &mut ytmp,
        );
        f(t + C7 * h_step, &ytmp, k7);
        let (k8, rest) = rest.split_first_mut().unwrap();
        combine(
            &y,
            h_step,
            &[(A81, k1), (A84, k4), (A85, k5), (A86, k6), (A87, k7)],
            &mut ytmp,
        );
        f(t + C8 * h_step, &ytmp, k8);
        let (k9, rest) = rest.split_first_mut().unwrap();
        combine(
            &y,
            h_step,
            &[
                (A91, k1),
                (A94, k4),
                (A95, k5),
                (A96, k6),
                (A97, k7),
                (A98, k8),
            ],
            &mut ytmp,
        );
        f(t + C9 * h_step, &ytmp, k9);
        let (k10, rest) = rest.split_first_mut().unwrap();
        combine(
            &y,
            h_step,
            &[
                (A101, k1),
                (A104, k4),
                (A105, k5),
                (A106, k6),
                (A107, k7),
                (A108, k8),
                (A109, k9),
            ],
            &mut ytmp,
        );
        f(t + C10 * h_step, &ytmp, k10);
        let (k11, rest) = rest.split_first_mut().unwrap();
        combine(
            &y,
            h_step,
            &[
                (A111, k1),
                (A114, k4),
                (A115, k5),
                (A116, k6),
                (A117, k7),
                (A118, k8),
                (A119, k9),
                (A1110, k10),
            ],
            &mut ytmp,
        );
        f(t + C11 * h_step, &ytmp, k11);
        let (k12, _) = rest.split_first_mut().unwrap();
        combine(
            &y,
            h_step,
            &[
                (A121, k1),
                (A124, k4),
                (A125, k5),
                (A126, k6),
                (A127, k7),
                (A128, k8),
                (A129, k9),
                (A1210, k10),
                (A1211, k11),
            ],
            &mut ytmp,
        );
        let t_new = t + h_step;
        f(t_new, &ytmp, k12);
        stats.evaluations += 11;

        for i in 0..n {
            let incr = B1 * k1[i]
                + B6 * k6[i]
                + B7 * k7[i]
                + B8 * k8[i]
                + B9 * k9[i]
                + B10 * k10[i]
                + B11 * k11[i]
                + B12 * k12[i];
            y_new[i] = y[i] + h_step * incr;
            err3[i] = incr - BHH1 * k1[i] - BHH2 * k9[i] - BHH3 * k12[i];
            err5[i] = ER1 * k1[i]
                + ER6 * k6[i]
                + ER7 * k7[i]
                + ER8 * k8[i]
                + ER9 * k9[i]
                + ER10 * k10[i]
                + ER11 * k11[i]
                + ER12 * k12[i];
        }
        let e5 = error_norm(&y, &y_new, &err5, opts);
        let e3 = error_norm(&y, &y_new, &err3, opts);
        let mut deno = e5 + 0.01 * e3;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h_step.abs() * e5 * (1.0 / (deno * n.max(1) as f64)).sqrt();
        if !err.is_finite() {
            return Err(Error::Stalled {
                t,
                last_state: y,
                reason: "non-finite error estimate".into(),
            });
        }

        let fac11 = err.powf(0.125);
        let fac = (fac11 / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
        let h_new = h_step / fac;

        if err <= 1.0 {
            stats.accepted += 1;
            t = if clamped { target } else { t_new };
            std::mem::swap(&mut y, &mut y_new);
            f(t, &y, &mut k[1]);
            stats.evaluations += 1;
            on_step(t, &y);
            // keep the unclamped step after landing on an output time
            h = if clamped { h.max(h_new) } else { h_new };
        } else {
            stats.rejected += 1;
            h = h_step / (fac11 / SAFE).min(1.0 / FAC_MIN);
        }
    }
}

/// Starting step from the size of `f` and of a trial Euler step.
fn initial_step<F>(
    f: &mut F,
    t: f64,
    y: &[Complex64],
    f0: &[Complex64],
    span: f64,
    opts: &OdeOptions,
    stats: &mut OdeStats,
) -> f64
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    let n = y.len().max(1) as f64;
    let scale: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.norm()).collect();
    let dnf = f0
        .iter()
        .zip(&scale)
        .map(|(v, s)| (v.norm() / s).powi(2))
        .sum::<f64>()
        / n;
    let dny = y
        .iter()
        .zip(&scale)
        .map(|(v, s)| (v.norm() / s).powi(2))
        .sum::<f64>()
        / n;
    let hmax = opts
        .max_step
        .unwrap_or(f64::INFINITY)
        .min(span.abs().max(1e-300));
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(hmax);
    let y1: Vec<Complex64> = y.iter().zip(f0).map(|(a, b)| a + h * b).collect();
    let mut f1 = vec![Complex64::new(0.0, 0.0); y.len()];
    f(t + h, &y1, &mut f1);
    stats.evaluations += 1;
    let der2 = (f1
        .iter()
        .zip(f0)
        .zip(&scale)
        .map(|((a, b), s)| ((a - b).norm() / s).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(1.0 / 8.0)
    };
    (100.0 * h).min(h1).min(hmax)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_rotation() {
        // y' = i w y
        let w = 2.3;
        let opts = OdeOptions {
            rtol: 1e-12,
            atol: 1e-12,
            ..Default::default()
        };
        let outs = [0.5, 1.0, 10.0];
        let (ys, stats) = integrate(
            |_, y, dy| dy[0] = Complex64::new(0.0, w) * y[0],
            0.0,
            &[Complex64::new(1.0, 0.0)],
            &outs,
            &opts,
            |_, _| {},
        )
        .unwrap();
        for (t, y) in outs.iter().zip(&ys) {
            let exact = Complex64::new(0.0, w * t).exp();
            assert!((y[0] - exact).norm() < 1e-10);
        }
        assert!(stats.accepted > 0);
    }

    #[test]
    fn output_at_start_returns_initial_state() {
        let y0 = [Complex64::new(0.3, 0.1)];
        let (ys, _) = integrate(
            |_, _, dy| dy[0] = Complex64::new(1.0, 0.0),
            0.0,
            &y0,
            &[0.0, 1.0],
            &OdeOptions::default(),
            |_, _| {},
        )
        .unwrap();
        assert_eq!(ys[0], y0.to_vec());
        assert!((ys[1][0] - Complex64::new(1.3, 0.1)).norm() < 1e-12);
    }

    #[test]
    fn blow_up_stalls() {
        let r = integrate(
            |_, y, dy| dy[0] = y[0] * y[0],
            0.0,
            &[Complex64::new(1.0, 0.0)],
            &[2.0],
            &OdeOptions::default(),
            |_, _| {},
        );
        match r {
            Err(Error::Stalled { t, ref reason, .. }) => {
                assert!((t - 1.0).abs() < 1e-3, "{t} {reason}")
            }
            other => panic!("expected a stall, got {other:?}"),
        }
    }

    #[test]
    fn eighth_order_convergence() {
        // error ratio between two tolerances
        let run = |tol: f64| {
            let opts = OdeOptions {
                rtol: tol,
                atol: tol,
                ..Default::default()
            };
            let (ys, s) = integrate(
                |t, y, dy| dy[0] = Complex64::new(0.0, 1.0 + t.cos()) * y[0],
                0.0,
                &[Complex64::new(1.0, 0.0)],
                &[20.0],
                &opts,
                |_, _| {},
            )
            .unwrap();
            let exact = Complex64::new(0.0, 20.0 + 20f64.sin()).exp();
            ((ys[0][0] - exact).norm(), s.accepted)
        };
        let (e1, _) = run(1e-6);
        let (e2, _) = run(1e-9);
        assert!(e2 < e1);
        assert!(e2 < 1e-7);
    }
}
