//! Bracketing root finder (Brent's method).

use crate::error::{Error, Result};

/// Scans `[lo, hi]` in steps of `step` and returns every sub-interval on
/// which `f` changes sign, in ascending order.
pub fn scan_sign_changes<F>(f: F, lo: f64, hi: f64, step: f64) -> Vec<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let mut brackets = Vec::new();
    if !(lo < hi) || !(step > 0.0) {
        return brackets;
    }
    let n = ((hi - lo) / step).ceil() as usize;
    let mut x0 = lo;
    let mut f0 = f(x0);
    for i in 1..=n {
        let x1 = if i == n { hi } else { lo + i as f64 * step };
        let f1 = f(x1);
        if f0 == 0.0 {
            // exact hit on a grid point: report a degenerate-free bracket around it
            brackets.push((x0, x1));
        } else if f0 * f1 < 0.0 {
            brackets.push((x0, x1));
        }
        x0 = x1;
        f0 = f1;
    }
    brackets
}

/// Brent's method on `[a, b]`, requires `f(a)` and `f(b)` of opposite sign
/// (or one of them zero). Converges to within a few ulps of the root.
pub fn brent<F>(f: F, a: f64, b: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa * fb > 0.0 {
        return Err(Error::precondition(format!(
            "no sign change on [{a}, {b}] (f = {fa:e}, {fb:e})"
        )));
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 1e-300;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Err(Error::numerical(format!(
        "Brent iteration did not converge near {b}"
    )))
}
