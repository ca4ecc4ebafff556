//! Closed-form integrals of products of Airy combinations, and the matrix
//! elements of `z`, `d/dz` and `z d/dz` between stationary states.
//!
//! All generic integrals run over `[sigma_a, sigma_b]` where `F` vanishes at
//! both limits. The shifted integrals are `int F(s) O G(s - lambda) ds`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::airy::AiryCombination;
use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};
use crate::spectrum::{self, EigenState, MirrorGeometry};
use crate::units::PhysicalScales;

/// Below this `|lambda|` the shifted formulas are summed as a power series.
pub const LAMBDA_SERIES: f64 = 0.05;
/// Number of derivatives of `G` used by the series branch.
const SERIES_ORDER: usize = 32;
/// Lowest power of `lambda` appearing in the shifted formulas.
const MIN_POWER: i32 = -4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    /// Multiplication by the coordinate.
    Position,
    /// `d/dz`.
    Derivative,
    /// `z d/dz`.
    PositionDerivative,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 3] = [
        OperatorKind::Position,
        OperatorKind::Derivative,
        OperatorKind::PositionDerivative,
    ];
}

/// Integrand selector for the generic Airy integrals: plain overlap or one
/// of the operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Integrand {
    Overlap,
    Operator(OperatorKind),
}

/// Evaluation branch for the shifted integrals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Branch {
    /// Series below [`LAMBDA_SERIES`], closed form above, diagonal formula at zero.
    #[default]
    Auto,
    /// Closed form in `1/lambda` regardless of `lambda`.
    Closed,
    /// Power series in `lambda` regardless of `lambda`.
    Series,
}

/// `int F G` between arbitrary limits, valid for any two combinations.
pub fn integral_same(
    f: AiryCombination,
    g: AiryCombination,
    sigma_a: f64,
    sigma_b: f64,
) -> Result<f64> {
    let (fa, fpa) = f.eval(sigma_a)?;
    let (fb, fpb) = f.eval(sigma_b)?;
    let (ga, gpa) = g.eval(sigma_a)?;
    let (gb, gpb) = g.eval(sigma_b)?;
    Ok(sigma_b * fb * gb - sigma_a * fa * ga - fpb * gpb + fpa * gpa)
}

/// `F'` at both limits, after checking that `F` vanishes there.
fn boundary_slopes(f: AiryCombination, sigma_a: f64, sigma_b: f64) -> Result<[(f64, f64); 2]> {
    let (fa, fpa) = f.eval(sigma_a)?;
    let (fb, fpb) = f.eval(sigma_b)?;
    for (s, v, d) in [(sigma_a, fa, fpa), (sigma_b, fb, fpb)] {
        if v.abs() > 1e-10 * d.abs().max(1.0) {
            return Err(Error::precondition(format!(
                "F must vanish at the integration limits, F({s}) = {v:e}"
            )));
        }
    }
    Ok([(sigma_a, fpa), (sigma_b, fpb)])
}

/// Sign of each limit in the boundary sums: `+` at the upper, `-` at the lower.
fn with_signs(slopes: [(f64, f64); 2]) -> [(f64, f64, f64); 2] {
    [
        (-1.0, slopes[0].0, slopes[0].1),
        (1.0, slopes[1].0, slopes[1].1),
    ]
}

/// `int F(s) G(s - lambda) ds`, `F` vanishing at both limits.
pub fn integral_shifted(
    f: AiryCombination,
    g: AiryCombination,
    sigma_a: f64,
    sigma_b: f64,
    lambda: f64,
) -> Result<f64> {
    integral_shifted_with(
        Integrand::Overlap,
        f,
        g,
        sigma_a,
        sigma_b,
        lambda,
        Branch::Auto,
    )
}

/// `int F(s) O G(s - lambda) ds`, `F` vanishing at both limits.
pub fn integral_shifted_op(
    kind: OperatorKind,
    f: AiryCombination,
    g: AiryCombination,
    sigma_a: f64,
    sigma_b: f64,
    lambda: f64,
) -> Result<f64> {
    integral_shifted_with(
        Integrand::Operator(kind),
        f,
        g,
        sigma_a,
        sigma_b,
        lambda,
        Branch::Auto,
    )
}

/// Shifted integral with explicit branch selection.
pub fn integral_shifted_with(
    integrand: Integrand,
    f: AiryCombination,
    g: AiryCombination,
    sigma_a: f64,
    sigma_b: f64,
    lambda: f64,
    branch: Branch,
) -> Result<f64> {
    if !lambda.is_finite() {
        return Err(Error::domain("shift must be finite"));
    }
    let ends = with_signs(boundary_slopes(f, sigma_a, sigma_b)?);
    let branch = match branch {
        Branch::Auto if lambda == 0.0 => return diagonal(integrand, f, g, sigma_a, sigma_b),
        Branch::Auto if lambda.abs() < LAMBDA_SERIES => Branch::Series,
        Branch::Auto => Branch::Closed,
        b => b,
    };
    let mut total = 0.0;
    for (sign, sigma, fp) in ends {
        let bracket = match branch {
            Branch::Closed => {
                if lambda == 0.0 {
                    return Err(Error::domain(
                        "closed shifted formula needs a non-zero shift",
                    ));
                }
                closed_bracket(integrand, g, sigma, lambda)?
            }
            _ => {
                let coeffs = laurent_coefficients(integrand, g, sigma)?;
                sum_regular_part(&coeffs, lambda)
            }
        };
        total += sign * fp * bracket;
    }
    Ok(total)
}

/// The endpoint bracket of the shifted closed forms, to be weighted by
/// `+F'(sigma_b)` and `-F'(sigma_a)`.
fn closed_bracket(
    integrand: Integrand,
    g: AiryCombination,
    sigma: f64,
    lambda: f64,
) -> Result<f64> {
    let (gs, gps) = g.eval(sigma - lambda)?;
    let (g0, _) = g.eval(sigma)?;
    let l = lambda;
    Ok(match integrand {
        Integrand::Overlap => (gs - g0) / l,
        Integrand::Operator(OperatorKind::Derivative) => (gs - g0) / (l * l) + gps / l,
        Integrand::Operator(OperatorKind::Position) => {
            (2.0 + l * l * sigma) / (l * l * l) * gs + 2.0 / (l * l) * gps
                - (2.0 + l * l * l) / (l * l * l) * g0
        }
        Integrand::Operator(OperatorKind::PositionDerivative) => {
            let l4 = l * l * l * l;
            (6.0 + 3.0 * l * l * sigma - 2.0 * l * l * l) / l4 * gs
                + (6.0 + l * l * sigma) / (l * l * l) * gps
                - 6.0 / l4 * g0
        }
    })
}

/// Derivatives `G^(j)(sigma)`, `j = 0..n`, from `G'' = sigma G`.
pub fn derivatives(g: AiryCombination, sigma: f64, n: usize) -> Result<Vec<f64>> {
    let (g0, g1) = g.eval(sigma)?;
    let mut d = vec![0.0; n.max(2)];
    d[0] = g0;
    d[1] = g1;
    for j in 0..n.saturating_sub(2) {
        let prev = if j == 0 { 0.0 } else { j as f64 * d[j - 1] };
        d[j + 2] = sigma * d[j] + prev;
    }
    d.truncate(n);
    Ok(d)
}

/// Laurent coefficients in `lambda` of one endpoint bracket, indexed from
/// power `-4` upwards. The negative powers cancel analytically; they are
/// returned so that the cancellation can be inspected.
pub fn laurent_coefficients(
    integrand: Integrand,
    g: AiryCombination,
    sigma: f64,
) -> Result<Vec<f64>> {
    let d = derivatives(g, sigma, SERIES_ORDER + 1)?;
    // G(s - l) = sum t[j] l^j,  G'(s - l) = sum u[j] l^j
    let mut fact = 1.0;
    let mut t = Vec::with_capacity(SERIES_ORDER);
    let mut u = Vec::with_capacity(SERIES_ORDER);
    for j in 0..SERIES_ORDER {
        if j > 0 {
            fact *= j as f64;
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        t.push(sign * d[j] / fact);
        u.push(sign * d[j + 1] / fact);
    }
    let g0 = d[0];

    // (power of lambda, coefficient, series) terms; None means the constant G(sigma)
    let terms: Vec<(i32, f64, Option<&[f64]>)> = match integrand {
        Integrand::Overlap => vec![(-1, 1.0, Some(&t)), (-1, -1.0, None)],
        Integrand::Operator(OperatorKind::Derivative) => {
            vec![(-2, 1.0, Some(&t)), (-2, -1.0, None), (-1, 1.0, Some(&u))]
        }
        Integrand::Operator(OperatorKind::Position) => vec![
            (-3, 2.0, Some(&t)),
            (-1, sigma, Some(&t)),
            (-2, 2.0, Some(&u)),
            (-3, -2.0, None),
            (0, -1.0, None),
        ],
        Integrand::Operator(OperatorKind::PositionDerivative) => vec![
            (-4, 6.0, Some(&t)),
            (-2, 3.0 * sigma, Some(&t)),
            (-1, -2.0, Some(&t)),
            (-3, 6.0, Some(&u)),
            (-1, sigma, Some(&u)),
            (-4, -6.0, None),
        ],
    };

    let len = SERIES_ORDER - 4;
    let mut c = vec![0.0; len];
    for (power, coef, series) in terms {
        match series {
            None => c[(power - MIN_POWER) as usize] += coef * g0,
            Some(s) => {
                for (j, v) in s.iter().enumerate() {
                    let idx = power + j as i32 - MIN_POWER;
                    if (0..len as i32).contains(&idx) {
                        c[idx as usize] += coef * v;
                    }
                }
            }
        }
    }
    Ok(c)
}

fn sum_regular_part(coeffs: &[f64], lambda: f64) -> f64 {
    let start = (-MIN_POWER) as usize;
    coeffs[start..]
        .iter()
        .rev()
        .fold(0.0, |acc, c| acc * lambda + c)
}

fn diagonal(
    integrand: Integrand,
    f: AiryCombination,
    g: AiryCombination,
    sigma_a: f64,
    sigma_b: f64,
) -> Result<f64> {
    match integrand {
        Integrand::Overlap => integral_same(f, g, sigma_a, sigma_b),
        Integrand::Operator(kind) => integral_diag_op(kind, f, g, sigma_a, sigma_b),
    }
}

/// `int F O G` over the same argument, `F` vanishing at both limits.
pub fn integral_diag_op(
    kind: OperatorKind,
    f: AiryCombination,
    g: AiryCombination,
    sigma_a: f64,
    sigma_b: f64,
) -> Result<f64> {
    let ends = with_signs(boundary_slopes(f, sigma_a, sigma_b)?);
    let mut total = 0.0;
    for (sign, s, fp) in ends {
        let (gv, gp) = g.eval(s)?;
        let term = match kind {
            OperatorKind::Derivative => -0.5 * s * fp * gv,
            OperatorKind::Position => -(s * fp * gp + fp * gv) / 3.0,
            OperatorKind::PositionDerivative => -0.25 * s * s * fp * gv + 0.5 * fp * gp,
        };
        total += sign * term;
    }
    Ok(total)
}

/// Independent quadrature of `int F(s) O G(s - lambda) ds`.
pub fn quadrature_integral(
    integrand: Integrand,
    f: AiryCombination,
    g: AiryCombination,
    sigma_a: f64,
    sigma_b: f64,
    lambda: f64,
) -> Result<f64> {
    let h = |s: f64| -> f64 {
        let fv = match f.eval(s) {
            Ok(v) => v.0,
            Err(_) => return f64::NAN,
        };
        let (gv, gp) = match g.eval(s - lambda) {
            Ok(v) => v,
            Err(_) => return f64::NAN,
        };
        fv * match integrand {
            Integrand::Overlap => gv,
            Integrand::Operator(OperatorKind::Position) => s * gv,
            Integrand::Operator(OperatorKind::Derivative) => gp,
            Integrand::Operator(OperatorKind::PositionDerivative) => s * gp,
        }
    };
    let (lo, hi) = if sigma_a <= sigma_b {
        (sigma_a, sigma_b)
    } else {
        (sigma_b, sigma_a)
    };
    let r = quad::integrate(h, lo, hi, Tolerance::default())?;
    Ok(if sigma_a <= sigma_b {
        r.value
    } else {
        -r.value
    })
}

fn check_pair(m: &EigenState, k: &EigenState) -> Result<()> {
    spectrum::same_basis(&[m.clone(), k.clone()])
}

/// Matrix element in reduced units: `<m|z|k>` in `z0`, `<m|d/dz|k>` in
/// `1/z0`, `<m|z d/dz|k>` dimensionless.
pub fn reduced_matrix_element(kind: OperatorKind, m: &EigenState, k: &EigenState) -> Result<f64> {
    check_pair(m, k)?;
    let eps_m = m.reduced_energy();
    let norm = (m.norm_denominator() * k.norm_denominator()).sqrt();
    if m.n() == k.n() {
        let upper = match m.reduced_separation() {
            Some(_) => m.sigma_upper() * m.fprime_upper() * m.fprime_upper(),
            None => 0.0,
        };
        return Ok(match kind {
            OperatorKind::Position => {
                let lower = m.sigma_lower() * m.fprime_lower() * m.fprime_lower();
                eps_m + (lower - upper) / (3.0 * m.norm_denominator())
            }
            OperatorKind::Derivative => 0.0,
            OperatorKind::PositionDerivative => -0.5,
        });
    }
    let lambda = k.reduced_energy() - eps_m;
    let pa = m.fprime_lower() * k.fprime_lower();
    let pb = m.fprime_upper() * k.fprime_upper();
    let sa = m.sigma_lower();
    let sb = match m.reduced_separation() {
        Some(_) => m.sigma_upper(),
        None => 0.0,
    };
    Ok(match kind {
        OperatorKind::Position => 2.0 / (lambda * lambda) * (pb - pa) / norm,
        OperatorKind::Derivative => (pb - pa) / (lambda * norm),
        OperatorKind::PositionDerivative => {
            let l2 = lambda * lambda;
            eps_m * (pb - pa) / (lambda * norm)
                + ((6.0 + l2 * sb) * pb - (6.0 + l2 * sa) * pa) / (l2 * lambda * norm)
        }
    })
}

fn to_si(kind: OperatorKind, value: f64, scales: &PhysicalScales) -> f64 {
    match kind {
        OperatorKind::Position => value * scales.length(),
        OperatorKind::Derivative => value / scales.length(),
        OperatorKind::PositionDerivative => value,
    }
}

fn check_scales(m: &EigenState, scales: &PhysicalScales) -> Result<()> {
    if m.scales() != scales {
        return Err(Error::precondition(
            "states were computed with different physical constants",
        ));
    }
    Ok(())
}

/// `<m|O|k>` in SI units (m, 1/m, dimensionless).
pub fn matrix_element(
    kind: OperatorKind,
    m: &EigenState,
    k: &EigenState,
    scales: &PhysicalScales,
) -> Result<f64> {
    check_scales(m, scales)?;
    Ok(to_si(kind, reduced_matrix_element(kind, m, k)?, scales))
}

/// Reduced-unit `<m|O|k>` by adaptive quadrature of the wave functions.
pub fn reduced_quadrature_element(
    kind: OperatorKind,
    m: &EigenState,
    k: &EigenState,
) -> Result<f64> {
    check_pair(m, k)?;
    let upper = m.reduced_extent().max(k.reduced_extent());
    let mut points = vec![
        0.0,
        m.reduced_energy().min(upper),
        k.reduced_energy().min(upper),
        upper,
    ];
    points.sort_by(f64::total_cmp);
    let h = |x: f64| -> f64 {
        let (a, _) = match m.reduced_eval(x) {
            Ok(v) => v,
            Err(_) => return f64::NAN,
        };
        let (b, bp) = match k.reduced_eval(x) {
            Ok(v) => v,
            Err(_) => return f64::NAN,
        };
        a * match kind {
            OperatorKind::Position => x * b,
            OperatorKind::Derivative => bp,
            OperatorKind::PositionDerivative => x * bp,
        }
    };
    let r = quad::integrate_with_breaks(
        h,
        &points,
        Tolerance {
            abs: 1e-13,
            rel: 1e-13,
        },
    )?;
    Ok(r.value)
}

/// Quadrature oracle for [`matrix_element`], SI units.
pub fn quadrature_matrix_element(
    kind: OperatorKind,
    m: &EigenState,
    k: &EigenState,
    scales: &PhysicalScales,
) -> Result<f64> {
    check_scales(m, scales)?;
    Ok(to_si(kind, reduced_quadrature_element(kind, m, k)?, scales))
}

/// Dense operator matrices over a truncated basis, stored in reduced units.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorTables {
    geometry: MirrorGeometry,
    scales: PhysicalScales,
    z: Array2<f64>,
    d: Array2<f64>,
    zd: Array2<f64>,
}

impl OperatorTables {
    /// Assembles tables from reduced matrices, checking their invariants.
    pub fn from_reduced(
        geometry: MirrorGeometry,
        scales: PhysicalScales,
        z: Array2<f64>,
        d: Array2<f64>,
        zd: Array2<f64>,
    ) -> Result<Self> {
        let n = z.nrows();
        for a in [&z, &d, &zd] {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::precondition(
                    "operator tables must be square and equal in size",
                ));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::numerical(
                    "operator table contains non-finite entries",
                ));
            }
        }
        for i in 0..n {
            if d[[i, i]] != 0.0 || zd[[i, i]] != -0.5 {
                return Err(Error::precondition(
                    "diagonal of d/dz must vanish and that of z d/dz must equal -1/2",
                ));
            }
        }
        Ok(OperatorTables {
            geometry,
            scales,
            z,
            d,
            zd,
        })
    }

    pub fn basis_size(&self) -> usize {
        self.z.nrows()
    }

    pub fn geometry(&self) -> MirrorGeometry {
        self.geometry
    }

    pub fn scales(&self) -> &PhysicalScales {
        &self.scales
    }

    /// Reduced matrix for one operator.
    pub fn reduced(&self, kind: OperatorKind) -> &Array2<f64> {
        match kind {
            OperatorKind::Position => &self.z,
            OperatorKind::Derivative => &self.d,
            OperatorKind::PositionDerivative => &self.zd,
        }
    }

    /// Matrix for one operator in SI units.
    pub fn si(&self, kind: OperatorKind) -> Array2<f64> {
        self.reduced(kind).mapv(|v| to_si(kind, v, &self.scales))
    }

    /// Largest departure from the symmetry of `z` and antisymmetry of `d/dz`
    /// and from `<m|z d/dz|k> + <k|z d/dz|m> = -delta_mk`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.basis_size();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let delta = if i == j { 1.0 } else { 0.0 };
                worst = worst
                    .max((self.z[[i, j]] - self.z[[j, i]]).abs())
                    .max((self.d[[i, j]] + self.d[[j, i]]).abs())
                    .max((self.zd[[i, j]] + self.zd[[j, i]] + delta).abs());
            }
        }
        worst
    }
}

/// Builds the three operator tables over `states`.
pub fn build_tables(states: &[EigenState], scales: &PhysicalScales) -> Result<OperatorTables> {
    if states.len() < 2 {
        return Err(Error::precondition(
            "operator tables need at least two states",
        ));
    }
    spectrum::same_basis(states)?;
    check_scales(&states[0], scales)?;
    let n = states.len();
    let mut mats = [
        Array2::zeros((n, n)),
        Array2::zeros((n, n)),
        Array2::zeros((n, n)),
    ];
    for (mat, kind) in mats.iter_mut().zip(OperatorKind::ALL) {
        for i in 0..n {
            for j in 0..n {
                mat[[i, j]] = reduced_matrix_element(kind, &states[i], &states[j])?;
            }
        }
    }
    let [z, d, zd] = mats;
    OperatorTables::from_reduced(states[0].geometry(), *scales, z, d, zd)
}
