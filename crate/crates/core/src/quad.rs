//! Adaptive Gauss–Kronrod (10/21 point) quadrature.
//!
//! Used as the independent oracle for the closed-form Airy integrals, so it
//! is deliberately simple: global bisection of the worst interval with the
//! plain `|K21 - G10|` difference as error estimate.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Hard cap on integrand evaluations for a single call.
pub const MAX_EVALUATIONS: usize = 100_000;

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

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-13,
            rel: 1e-13,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    /// Below this the error estimate is dominated by rounding.
    noise: f64,
}

impl Segment {
    fn refinable(&self) -> f64 {
        if self.error <= self.noise {
            0.0
        } else {
            self.error
        }
    }
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.refinable() == other.refinable()
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.refinable().total_cmp(&other.refinable())
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut gauss = 0.0;
    let mut kron = fc * WGK[10];
    let mut abs_sum = fc.abs() * WGK[10];
    for (j, (&x, &w)) in XGK[..10].iter().zip(&WGK[..10]).enumerate() {
        let dx = half * x;
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        kron += w * (f1 + f2);
        abs_sum += w * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kron * half;
    Segment {
        a,
        b,
        value,
        error: ((kron - gauss) * half).abs(),
        noise: 50.0 * f64::EPSILON * abs_sum * half.abs(),
    }
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<QuadResult>
where
    F: Fn(f64) -> f64,
{
    integrate_with_breaks(f, &[a, b], tol)
}

/// Integrates `f` over consecutive segments of `points`, which must be sorted.
/// Supplying break points where the integrand changes character helps the
/// adaptive scheme but is not required.
pub fn integrate_with_breaks<F>(f: F, points: &[f64], tol: Tolerance) -> Result<QuadResult>
where
    F: Fn(f64) -> f64,
{
    if points.len() < 2 {
        return Err(Error::precondition("need at least two integration points"));
    }
    if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::precondition(
            "integration limits must be finite and ascending",
        ));
    }

    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in points.windows(2) {
        if w[0] < w[1] {
            heap.push(kronrod(&f, w[0], w[1]));
            evaluations += 21;
        }
    }

    loop {
        let (value, error) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if !(value.is_finite() && error.is_finite()) {
            return Err(Error::numerical("integrand produced a non-finite value"));
        }
        let target = tol.abs.max(tol.rel * value.abs());
        let worst = match heap.peek() {
            None => {
                return Ok(QuadResult {
                    value: 0.0,
                    error: 0.0,
                    evaluations,
                })
            }
            Some(s) => s,
        };
        if error <= target || worst.refinable() == 0.0 {
            return Ok(QuadResult {
                value,
                error,
                evaluations,
            });
        }
        if evaluations + 42 > MAX_EVALUATIONS {
            return Err(Error::numerical(format!(
                "quadrature did not converge within {MAX_EVALUATIONS} evaluations \
                 (estimate {value:.6e}, error {error:.3e}, target {target:.3e}, \
                 worst interval [{:.6e}, {:.6e}])",
                worst.a, worst.b
            )));
        }
        let s = heap.pop().expect("non-empty");
        let mid = 0.5 * (s.a + s.b);
        if !(mid > s.a && mid < s.b) {
            return Err(Error::numerical(format!(
                "interval [{:e}, {:e}] cannot be bisected further",
                s.a, s.b
            )));
        }
        heap.push(kronrod(&f, s.a, mid));
        heap.push(kronrod(&f, mid, s.b));
        evaluations += 42;
    }
}
