//! Airy functions of real argument and root localisation for their linear
//! combinations.
//!
//! Values come from a precomputed table of `(Ai, Ai', Bi, Bi')` on a uniform
//! grid spanning the working range, followed by a Taylor expansion about the
//! nearest node. The Taylor coefficients obey the recurrence implied by
//! `f'' = sigma f`, so the local expansion is exact up to truncation.
//! Table nodes are filled from the closed-form values at zero (Taylor
//! stepping outward) and from the large-argument asymptotic expansions.

use std::f64::consts::{FRAC_PI_4, PI};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots;

/// Largest `|sigma|` accepted by the evaluators.
pub const WORKING_LIMIT: f64 = 30.0;

/// Default scan step for [`bracket_roots`].
pub const DEFAULT_SCAN_STEP: f64 = 0.05;

const NODE_SPACING: f64 = 0.25;
const NODE_COUNT: usize = 241;
/// Beyond this magnitude table nodes come from the asymptotic expansions.
const ASYMPTOTIC_FROM: f64 = 10.0;

#[allow(clippy::excessive_precision)]
const AI0: f64 = 0.355_028_053_887_817_239_26;
#[allow(clippy::excessive_precision)]
const AIP0: f64 = -0.258_819_403_792_806_798_41;
#[allow(clippy::excessive_precision)]
const BI0: f64 = 0.614_926_627_446_000_735_15;
#[allow(clippy::excessive_precision)]
const BIP0: f64 = 0.448_288_357_353_826_357_91;

/// `Ai`, `Bi` and their first derivatives at one argument.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AiryPair {
    pub ai: f64,
    pub ai_prime: f64,
    pub bi: f64,
    pub bi_prime: f64,
}

impl AiryPair {
    /// `Ai Bi' - Ai' Bi`, equal to `1/pi` for exact values.
    pub fn wronskian(&self) -> f64 {
        self.ai * self.bi_prime - self.ai_prime * self.bi
    }
}

/// `F(sigma) = c_ai Ai(sigma) + c_bi Bi(sigma)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AiryCombination {
    c_ai: f64,
    c_bi: f64,
}

impl AiryCombination {
    pub fn new(c_ai: f64, c_bi: f64) -> Result<Self> {
        if !(c_ai.is_finite() && c_bi.is_finite()) {
            return Err(Error::domain("Airy coefficients must be finite"));
        }
        if c_ai == 0.0 && c_bi == 0.0 {
            return Err(Error::domain("Airy coefficients must not both vanish"));
        }
        Ok(AiryCombination { c_ai, c_bi })
    }

    pub const AI: AiryCombination = AiryCombination {
        c_ai: 1.0,
        c_bi: 0.0,
    };
    pub const BI: AiryCombination = AiryCombination {
        c_ai: 0.0,
        c_bi: 1.0,
    };

    pub fn c_ai(&self) -> f64 {
        self.c_ai
    }

    pub fn c_bi(&self) -> f64 {
        self.c_bi
    }

    /// Value and derivative at `sigma`.
    pub fn eval(&self, sigma: f64) -> Result<(f64, f64)> {
        eval_combination(*self, sigma)
    }

    /// Value only.
    pub fn value(&self, sigma: f64) -> Result<f64> {
        Ok(eval_combination(*self, sigma)?.0)
    }

    fn apply(&self, p: &AiryPair) -> (f64, f64) {
        (
            self.c_ai * p.ai + self.c_bi * p.bi,
            self.c_ai * p.ai_prime + self.c_bi * p.bi_prime,
        )
    }
}

fn check_range(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma.abs() <= WORKING_LIMIT {
        Ok(())
    } else {
        Err(Error::Range {
            value: sigma,
            limit: WORKING_LIMIT,
        })
    }
}

/// Evaluates `Ai`, `Ai'`, `Bi`, `Bi'` at `sigma`, `|sigma| <= 30`.
pub fn eval_airy(sigma: f64) -> Result<AiryPair> {
    check_range(sigma)?;
    let table = table();
    let idx = ((sigma + WORKING_LIMIT) / NODE_SPACING).round() as usize;
    let idx = idx.min(NODE_COUNT - 1);
    let centre = node(idx);
    let h = sigma - centre;
    let [ai, aip, bi, bip] = table[idx];
    let (ai, ai_prime) = taylor(centre, ai, aip, h);
    let (bi, bi_prime) = taylor(centre, bi, bip, h);
    Ok(AiryPair {
        ai,
        ai_prime,
        bi,
        bi_prime,
    })
}

/// `F(sigma)` and `F'(sigma)`.
pub fn eval_combination(f: AiryCombination, sigma: f64) -> Result<(f64, f64)> {
    Ok(f.apply(&eval_airy(sigma)?))
}

/// Sign-change brackets of `F` on `[lo, hi]`, scanned with `step`, ascending.
pub fn bracket_roots(f: AiryCombination, lo: f64, hi: f64, step: f64) -> Result<Vec<(f64, f64)>> {
    if !(lo < hi) || !(step > 0.0) {
        return Err(Error::precondition(format!(
            "bracket scan needs lo < hi and step > 0 (lo = {lo}, hi = {hi}, step = {step})"
        )));
    }
    check_range(lo)?;
    check_range(hi)?;
    Ok(roots::scan_sign_changes(
        |s| eval_combination(f, s).map(|v| v.0).unwrap_or(f64::NAN),
        lo,
        hi,
        step,
    ))
}

/// Locates the zero of `F` inside `bracket` with Brent's method.
pub fn refine_root(f: AiryCombination, bracket: (f64, f64)) -> Result<f64> {
    check_range(bracket.0)?;
    check_range(bracket.1)?;
    roots::brent(
        |s| eval_combination(f, s).map(|v| v.0).unwrap_or(f64::NAN),
        bracket.0,
        bracket.1,
    )
}

/// Large-argument expansions, valid for `|sigma| >= 10` where the truncated
/// series is accurate to a few ulps.
pub fn asymptotic(sigma: f64) -> Result<AiryPair> {
    check_range(sigma)?;
    if sigma.abs() < ASYMPTOTIC_FROM {
        return Err(Error::domain(format!(
            "asymptotic expansion requested at |sigma| = {} < {ASYMPTOTIC_FROM}",
            sigma.abs()
        )));
    }
    Ok(asymptotic_unchecked(sigma))
}

/// Leading-order asymptotic forms, without correction terms.
pub fn leading_asymptotic(sigma: f64) -> AiryPair {
    let x = sigma.abs();
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let q = x.powf(0.25);
    let rp = PI.sqrt();
    if sigma < 0.0 {
        let (s, c) = (zeta + FRAC_PI_4).sin_cos();
        AiryPair {
            ai: s / (rp * q),
            ai_prime: -q * c / rp,
            bi: c / (rp * q),
            bi_prime: q * s / rp,
        }
    } else {
        let d = (-zeta).exp();
        let g = zeta.exp();
        AiryPair {
            ai: d / (2.0 * rp * q),
            ai_prime: -q * d / (2.0 * rp),
            bi: g / (rp * q),
            bi_prime: q * g / rp,
        }
    }
}

fn node(i: usize) -> f64 {
    -WORKING_LIMIT + NODE_SPACING * i as f64
}

fn table() -> &'static [[f64; 4]] {
    static TABLE: OnceLock<Vec<[f64; 4]>> = OnceLock::new();
    TABLE.get_or_init(build_table)
}

fn build_table() -> Vec<[f64; 4]> {
    let mut t = vec![[0.0; 4]; NODE_COUNT];
    let zero = ((0.0 + WORKING_LIMIT) / NODE_SPACING).round() as usize;
    let steps = (ASYMPTOTIC_FROM / NODE_SPACING).round() as usize;

    for (i, row) in t.iter_mut().enumerate() {
        let s = node(i);
        if s.abs() >= ASYMPTOTIC_FROM - 1e-12 {
            let p = asymptotic_unchecked(s);
            *row = [p.ai, p.ai_prime, p.bi, p.bi_prime];
        }
    }
    t[zero] = [AI0, AIP0, BI0, BIP0];

    // Oscillatory side: both solutions are bounded, step outward from zero.
    for i in (zero - steps + 1..zero).rev() {
        let c = node(i + 1);
        let (ai, aip) = taylor(c, t[i + 1][0], t[i + 1][1], -NODE_SPACING);
        let (bi, bip) = taylor(c, t[i + 1][2], t[i + 1][3], -NODE_SPACING);
        t[i] = [ai, aip, bi, bip];
    }
    // Bi is dominant going right, Ai is dominant going left.
    for i in zero + 1..zero + steps {
        let c = node(i - 1);
        let (bi, bip) = taylor(c, t[i - 1][2], t[i - 1][3], NODE_SPACING);
        t[i][2] = bi;
        t[i][3] = bip;
    }
    for i in (zero + 1..zero + steps).rev() {
        let c = node(i + 1);
        let (ai, aip) = taylor(c, t[i + 1][0], t[i + 1][1], -NODE_SPACING);
        t[i][0] = ai;
        t[i][1] = aip;
    }
    t
}

/// Sums the Taylor series of the solution of `f'' = sigma f` with
/// `f(c) = f0`, `f'(c) = f1`, evaluated at `c + h`.
fn taylor(c: f64, f0: f64, f1: f64, h: f64) -> (f64, f64) {
    // a[j] are Taylor coefficients; (j+2)(j+1) a[j+2] = c a[j] + a[j-1].
    let (mut am1, mut a0, mut a1) = (0.0, f0, f1);
    let mut value = f0 + f1 * h;
    let mut deriv = f1;
    let mut hp = h; // h^(j+1) for the a[j+2] term's derivative contribution
    let scale_v = f0.abs() + (f1 * h).abs();
    let scale_d = f1.abs() + (f0 * h).abs() * c.abs().max(1.0);
    let mut j = 0usize;
    loop {
        let a2 = (c * a0 + am1) / (((j + 2) * (j + 1)) as f64);
        let dterm = (j + 2) as f64 * a2 * hp;
        hp *= h;
        let vterm = a2 * hp;
        value += vterm;
        deriv += dterm;
        am1 = a0;
        a0 = a1;
        a1 = a2;
        j += 1;
        if j > 3
            && vterm.abs() <= 1e-18 * (value.abs() + scale_v)
            && dterm.abs() <= 1e-18 * (deriv.abs() + scale_d)
            && (a0 * hp / h).abs() <= 1e-17 * (value.abs() + scale_v)
        {
            break;
        }
        if j > 80 {
            break;
        }
    }
    (value, deriv)
}

fn asymptotic_unchecked(sigma: f64) -> AiryPair {
    let x = sigma.abs();
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let q = x.powf(0.25);
    let rp = PI.sqrt();

    // u_k / zeta^k and v_k / zeta^k, truncated at the smallest term
    let mut u = vec![1.0];
    let mut v = vec![1.0];
    let mut uk = 1.0;
    let mut zk = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        uk *= (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0)
            / ((2.0 * kf - 1.0) * 216.0 * kf);
        zk *= zeta;
        let tu = uk / zk;
        let tv = -(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * tu;
        if tv.abs() > last || tv.abs() < 1e-20 {
            break;
        }
        last = tv.abs();
        u.push(tu);
        v.push(tv);
    }

    if sigma > 0.0 {
        let alt = |w: &[f64]| {
            w.iter()
                .enumerate()
                .map(|(k, t)| if k % 2 == 0 { *t } else { -*t })
                .sum::<f64>()
        };
        let d = (-zeta).exp();
        let g = zeta.exp();
        AiryPair {
            ai: d / (2.0 * rp * q) * alt(&u),
            ai_prime: -q * d / (2.0 * rp) * alt(&v),
            bi: g / (rp * q) * u.iter().sum::<f64>(),
            bi_prime: q * g / rp * v.iter().sum::<f64>(),
        }
    } else {
        // even and odd parts with alternating signs
        let split = |w: &[f64]| {
            let mut even = 0.0;
            let mut odd = 0.0;
            for (k, t) in w.iter().enumerate() {
                let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
                if k % 2 == 0 {
                    even += sign * t;
                } else {
                    odd += sign * t;
                }
            }
            (even, odd)
        };
        let (ue, uo) = split(&u);
        let (ve, vo) = split(&v);
        let (s, c) = (zeta - FRAC_PI_4).sin_cos();
        AiryPair {
            ai: (c * ue + s * uo) / (rp * q),
            ai_prime: q * (s * ve - c * vo) / rp,
            bi: (-s * ue + c * uo) / (rp * q),
            bi_prime: q * (c * ve + s * vo) / rp,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[allow(clippy::excessive_precision)]
    const REFERENCE: [(f64, [f64; 4]); 23] = [
        (
            -30.0,
            [
                -8.7968188456842163e-2,
                1.2286206026374851,
                -2.2444694220056632e-1,
                -4.8369472582768149e-1,
            ],
        ),
        (
            -25.5,
            [
                -2.4407246181912133e-1,
                -2.9955061147614896e-1,
                5.8845474441487237e-2,
                -1.2319402446764797,
            ],
        ),
        (
            -20.0,
            [
                -1.7640612707798469e-1,
                8.9286285673647124e-1,
                -2.0013930932265135e-1,
                -7.9142903383953648e-1,
            ],
        ),
        (
            -12.3,
            [
                -2.8747208025644136e-1,
                3.1007878814201665e-1,
                -9.0071313508555152e-2,
                -1.010117859743674,
            ],
        ),
        (
            -10.0,
            [
                4.0241238486443191e-2,
                9.9626504413279006e-1,
                -3.1467982964383863e-1,
                1.1941411339990924e-1,
            ],
        ),
        (
            -7.77,
            [
                1.5849025949016672e-1,
                8.3711601067282424e-1,
                -2.9838921376421913e-1,
                4.3235147794012171e-1,
            ],
        ),
        (
            -5.2,
            [
                2.5258033810474473e-1,
                6.3990516690128384e-1,
                -2.7502704418964077e-1,
                5.6345897957517368e-1,
            ],
        ),
        (
            -3.3,
            [
                -4.1718093737455013e-1,
                -7.0963617177836129e-2,
                2.1967999989777454e-2,
                -7.5926517504794455e-1,
            ],
        ),
        (
            -2.5,
            [
                -1.1232506769296609e-1,
                6.7885273426479436e-1,
                -4.3242247184070529e-1,
                -2.2042015487462959e-1,
            ],
        ),
        (
            -1.0,
            [
                5.3556088329235212e-1,
                -1.0160567116645209e-2,
                1.0399738949694461e-1,
                5.9237562642279235e-1,
            ],
        ),
        (
            -0.3,
            [
                4.3090309528558086e-1,
                -2.4054512725815461e-1,
                4.7797784010989295e-1,
                4.7188021630064792e-1,
            ],
        ),
        (
            0.0,
            [
                3.5502805388781724e-1,
                -2.588194037928068e-1,
                6.1492662744600074e-1,
                4.4828835735382636e-1,
            ],
        ),
        (
            0.4,
            [
                2.5474235429567635e-1,
                -2.3583203441920822e-1,
                8.0177300001359724e-1,
                5.0728167605062244e-1,
            ],
        ),
        (
            1.0,
            [
                1.3529241631288142e-1,
                -1.5914744129679321e-1,
                1.2074235949528713,
                9.3243593339277563e-1,
            ],
        ),
        (
            2.2,
            [
                2.561040442177322e-2,
                -4.0497263244453135e-2,
                4.2670365817666447,
                5.6815417695852522,
            ],
        ),
        (
            3.7,
            [
                1.7455720006099791e-3,
                -3.4669407490276282e-3,
                4.7560747499589443e+1,
                8.7890727262833411e+1,
            ],
        ),
        (
            5.5,
            [
                3.3685311908599814e-5,
                -8.0463391305565143e-5,
                2.0165800386595314e+3,
                4.6325537331390424e+3,
            ],
        ),
        (
            8.0,
            [
                4.6922076160992316e-8,
                -1.3414392979067866e-7,
                1.1995860041244599e+6,
                3.3543423127445389e+6,
            ],
        ),
        (
            10.0,
            [
                1.1047532552898686e-10,
                -3.5206336767389236e-10,
                4.5564115354822514e+8,
                1.4292361344828658e+9,
            ],
        ),
        (
            14.1,
            [
                6.8072056878493414e-17,
                -2.568034378040277e-16,
                6.2268146675227724e+14,
                2.3269921922250179e+15,
            ],
        ),
        (
            20.0,
            [
                1.6916728686705403e-27,
                -7.586391625748355e-27,
                2.1037650496511038e+25,
                9.3818393361339643e+25,
            ],
        ),
        (
            25.0,
            [
                8.1160268246913867e-38,
                -4.066089337243281e-37,
                3.9220307780413818e+35,
                1.9570735083233309e+36,
            ],
        ),
        (
            30.0,
            [
                3.2082175915504956e-49,
                -1.759876581432726e-48,
                9.057288512151307e+46,
                4.953304512891299e+47,
            ],
        ),
    ];

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn matches_reference_values() {
        for (s, want) in REFERENCE {
            let p = eval_airy(s).unwrap();
            let got = [p.ai, p.ai_prime, p.bi, p.bi_prime];
            for (g, w) in got.iter().zip(want) {
                assert!(rel(*g, w) < 1e-12, "sigma = {s}: {g:e} vs {w:e}");
            }
        }
    }

    #[test]
    fn value_at_zero() {
        let p = eval_airy(0.0).unwrap();
        assert_eq!(p.ai, AI0);
        assert!((p.ai - 0.355_028_053_9).abs() < 1e-10);
    }

    #[test]
    fn wronskian_at_3_7() {
        let w = eval_airy(3.7).unwrap().wronskian();
        assert!(rel(w, 1.0 / PI) < 1e-12);
    }

    #[test]
    fn out_of_range_is_rejected() {
        for s in [30.5, -31.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(eval_airy(s), Err(Error::Range { .. })));
        }
        assert!(eval_airy(30.0).is_ok());
        assert!(eval_airy(-30.0).is_ok());
    }

    #[test]
    fn asymptotic_agrees_with_table_stepping() {
        // -10 and 10 are asymptotic nodes, the neighbours come from stepping
        for s in [-9.75, -9.9, 9.9, 9.75] {
            let p = eval_airy(s).unwrap();
            let q = asymptotic_unchecked(s);
            assert!(rel(p.ai, q.ai) < 1e-11, "{s}");
            assert!(rel(p.bi, q.bi) < 1e-11, "{s}");
            assert!(rel(p.ai_prime, q.ai_prime) < 1e-11, "{s}");
            assert!(rel(p.bi_prime, q.bi_prime) < 1e-11, "{s}");
        }
    }

    #[test]
    fn leading_asymptotics_within_first_correction() {
        // leading forms differ from the true values by O(1/zeta)
        for s in [-20.0f64, 20.0] {
            let p = eval_airy(s).unwrap();
            let l = leading_asymptotic(s);
            let zeta = 2.0 / 3.0 * s.abs().powf(1.5);
            let bound = 0.15 / zeta;
            let amp = 1.0 / (PI.sqrt() * s.abs().powf(0.25));
            let ampd = s.abs().powf(0.25) / PI.sqrt();
            if s < 0.0 {
                assert!((p.ai - l.ai).abs() < bound * amp);
                assert!((p.bi - l.bi).abs() < bound * amp);
                assert!((p.ai_prime - l.ai_prime).abs() < bound * ampd);
                assert!((p.bi_prime - l.bi_prime).abs() < bound * ampd);
            } else {
                for (a, b) in [
                    (p.ai, l.ai),
                    (p.bi, l.bi),
                    (p.ai_prime, l.ai_prime),
                    (p.bi_prime, l.bi_prime),
                ] {
                    assert!(rel(b, a) < bound);
                }
            }
        }
    }

    #[test]
    fn combination_is_linear() {
        let f = AiryCombination::new(1.0, 1.0).unwrap();
        let p = eval_airy(1.0).unwrap();
        let (v, d) = f.eval(1.0).unwrap();
        assert_eq!(v, p.ai + p.bi);
        assert_eq!(d, p.ai_prime + p.bi_prime);
        assert_eq!(AiryCombination::AI.value(0.0).unwrap(), p_ai0());
        assert!(AiryCombination::new(0.0, 0.0).is_err());
    }

    fn p_ai0() -> f64 {
        eval_airy(0.0).unwrap().ai
    }

    #[test]
    fn finite_difference_second_derivative() {
        let f = AiryCombination::new(0.7, -0.2).unwrap();
        let h = 1e-3;
        for s in [-6.3, -1.1, 0.4, 2.9] {
            let fd = (f.value(s + h).unwrap() - 2.0 * f.value(s).unwrap()
                + f.value(s - h).unwrap())
                / (h * h);
            assert!((fd - s * f.value(s).unwrap()).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn bracket_counts() {
        assert_eq!(
            bracket_roots(AiryCombination::AI, -5.0, 0.0, 0.1)
                .unwrap()
                .len(),
            2
        );
        assert!(bracket_roots(AiryCombination::AI, 1.0, 5.0, 0.1)
            .unwrap()
            .is_empty());
        assert_eq!(
            bracket_roots(AiryCombination::BI, -3.0, 0.0, 0.1)
                .unwrap()
                .len(),
            1
        );
        assert!(bracket_roots(AiryCombination::AI, 0.0, -1.0, 0.1).is_err());
    }

    #[test]
    fn known_zeros() {
        #[allow(clippy::excessive_precision)]
        let ai_zeros = [
            -2.338_107_410_459_767_038_5,
            -4.087_949_444_130_970_616_6,
            -5.520_559_828_095_551_059_1,
            -6.786_708_090_071_758_998_8,
            -7.944_133_587_120_853_123_1,
            -9.022_650_853_340_980_380_2,
        ];
        let br = bracket_roots(AiryCombination::AI, -9.5, 0.0, DEFAULT_SCAN_STEP).unwrap();
        assert_eq!(br.len(), 6);
        // brackets ascend, zeros are listed descending
        for (b, z) in br.iter().rev().zip(ai_zeros) {
            let r = refine_root(AiryCombination::AI, *b).unwrap();
            assert!((r - z).abs() < 1e-12, "{r} vs {z}");
        }
        let b = bracket_roots(AiryCombination::BI, -3.0, 0.0, DEFAULT_SCAN_STEP).unwrap();
        let r = refine_root(AiryCombination::BI, b[0]).unwrap();
        assert!((r + 1.173_713_222_709_127_9).abs() < 1e-12);
    }

    #[test]
    fn refine_without_sign_change_fails() {
        assert!(matches!(
            refine_root(AiryCombination::AI, (0.0, 1.0)),
            Err(Error::Precondition(_))
        ));
    }
}
