//! Stationary states above one mirror or between two mirrors.

use serde::{Deserialize, Serialize};

use crate::airy::{self, AiryCombination, WORKING_LIMIT};
use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};
use crate::roots;
use crate::units::PhysicalScales;

/// Largest supported basis.
pub const MAX_STATES: usize = 50;
/// Largest supported reduced mirror separation `L / z0`.
pub const MAX_REDUCED_SEPARATION: f64 = 25.0;
/// Energy scan step (in units of `E0`) for the two-mirror determinant.
pub const ENERGY_SCAN_STEP: f64 = 0.05;
/// One-mirror states are integrated up to this many `z0` above the highest
/// turning point involved; `Ai` has fallen below `1e-9` of its peak there.
pub const TAIL_EXTENT: f64 = 15.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum MirrorGeometry {
    OneMirror,
    /// Two mirrors a distance `separation` (m) apart.
    TwoMirror {
        separation: f64,
    },
}

impl MirrorGeometry {
    pub fn two_mirror(separation: f64) -> Result<Self> {
        if !(separation.is_finite() && separation > 0.0) {
            return Err(Error::domain(format!(
                "mirror separation must be positive, got {separation}"
            )));
        }
        Ok(MirrorGeometry::TwoMirror { separation })
    }

    pub fn separation(&self) -> Option<f64> {
        match self {
            MirrorGeometry::OneMirror => None,
            MirrorGeometry::TwoMirror { separation } => Some(*separation),
        }
    }

    /// `L / z0`, checked against the supported range.
    pub fn reduced_separation(&self, scales: &PhysicalScales) -> Result<Option<f64>> {
        match self {
            MirrorGeometry::OneMirror => Ok(None),
            MirrorGeometry::TwoMirror { separation } => {
                let ell = scales.reduce_length(*separation);
                if !(ell.is_finite() && ell > 0.0) {
                    return Err(Error::domain(format!(
                        "mirror separation must be positive, got {separation}"
                    )));
                }
                if ell > MAX_REDUCED_SEPARATION {
                    return Err(Error::Range {
                        value: ell,
                        limit: MAX_REDUCED_SEPARATION,
                    });
                }
                Ok(Some(ell))
            }
        }
    }
}

/// A normalised stationary state. Lengths are kept internally in units of
/// `z0` and energies in units of `E0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenState {
    n: usize,
    eps: f64,
    ell: Option<f64>,
    combo: AiryCombination,
    fprime_lower: f64,
    fprime_upper: f64,
    geometry: MirrorGeometry,
    scales: PhysicalScales,
}

impl EigenState {
    /// Rebuilds a state from its reduced energy `E / E0`. No eigenvalue check
    /// is made beyond the boundary conditions at the mirrors.
    pub fn from_reduced_energy(
        n: usize,
        eps: f64,
        geometry: MirrorGeometry,
        scales: PhysicalScales,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("quantum numbers start at 1"));
        }
        if !(eps.is_finite() && eps > 0.0 && eps <= WORKING_LIMIT) {
            return Err(Error::Range {
                value: eps,
                limit: WORKING_LIMIT,
            });
        }
        let ell = geometry.reduced_separation(&scales)?;
        let p = airy::eval_airy(-eps)?;
        let (combo, fprime_lower, fprime_upper) = match ell {
            None => {
                let c = AiryCombination::new(p.ai_prime.signum(), 0.0)?;
                (c, p.ai_prime.abs(), 0.0)
            }
            Some(ell) => {
                let c = AiryCombination::new(p.bi, -p.ai)?;
                let lower = c.eval(-eps)?.1;
                let upper = c.eval(ell - eps)?.1;
                (c, lower, upper)
            }
        };
        let state = EigenState {
            n,
            eps,
            ell,
            combo,
            fprime_lower,
            fprime_upper,
            geometry,
            scales,
        };
        let tol = 1e-10 * (1.0 + fprime_lower.abs());
        let (fa, _) = combo.eval(state.sigma_lower())?;
        let fb = match ell {
            Some(_) => combo.eval(state.sigma_upper())?.0,
            None => 0.0,
        };
        if fa.abs() > tol || fb.abs() > tol {
            return Err(Error::precondition(format!(
                "reduced energy {eps} does not satisfy the mirror boundary conditions \
                 (F = {fa:e} at the lower, {fb:e} at the upper mirror)"
            )));
        }
        if state.norm_denominator() <= 0.0 {
            return Err(Error::numerical(format!(
                "non-positive normalisation for state {n}"
            )));
        }
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Energy in joules.
    pub fn energy(&self) -> f64 {
        self.scales.restore_energy(self.eps)
    }

    pub fn energy_pev(&self) -> f64 {
        self.eps * self.scales.energy_pev()
    }

    /// Classical turning point `E / (m g)` in metres.
    pub fn turning_point(&self) -> f64 {
        self.scales.restore_length(self.eps)
    }

    /// `E / E0`, equal to the turning point in units of `z0`.
    pub fn reduced_energy(&self) -> f64 {
        self.eps
    }

    pub fn reduced_separation(&self) -> Option<f64> {
        self.ell
    }

    pub fn combination(&self) -> AiryCombination {
        self.combo
    }

    /// `F'` at the lower mirror.
    pub fn fprime_lower(&self) -> f64 {
        self.fprime_lower
    }

    /// `F'` at the upper mirror, zero for a single mirror.
    pub fn fprime_upper(&self) -> f64 {
        self.fprime_upper
    }

    pub fn geometry(&self) -> MirrorGeometry {
        self.geometry
    }

    pub fn scales(&self) -> &PhysicalScales {
        &self.scales
    }

    /// Airy argument at the lower mirror, `-z_n / z0`.
    pub fn sigma_lower(&self) -> f64 {
        -self.eps
    }

    /// Airy argument at the upper mirror, `(L - z_n) / z0`. For a single
    /// mirror this is the truncation point used by quadratures.
    pub fn sigma_upper(&self) -> f64 {
        match self.ell {
            Some(ell) => ell - self.eps,
            None => TAIL_EXTENT,
        }
    }

    /// `F'(sigma_A)^2 - F'(sigma_B)^2`, the squared norm of `F` on the domain.
    pub fn norm_denominator(&self) -> f64 {
        self.fprime_lower * self.fprime_lower - self.fprime_upper * self.fprime_upper
    }

    /// Wave function and its derivative at reduced height `x = z / z0`, in
    /// units of `z0^(-1/2)` and `z0^(-3/2)`.
    pub fn reduced_eval(&self, x: f64) -> Result<(f64, f64)> {
        let upper = self.ell.unwrap_or(f64::INFINITY);
        let slack = 1e-12 * (1.0 + x.abs());
        if !(x >= -slack && x <= upper + slack) {
            return Err(Error::domain(format!(
                "height {x} z0 lies outside the confinement region"
            )));
        }
        let sigma = (x - self.eps).min(if self.ell.is_some() {
            upper - self.eps
        } else {
            f64::INFINITY
        });
        let sigma = sigma.max(-self.eps);
        if sigma > WORKING_LIMIT && self.ell.is_none() {
            return Ok((0.0, 0.0));
        }
        let (f, fp) = self.combo.eval(sigma)?;
        let norm = self.norm_denominator().sqrt();
        Ok((f / norm, fp / norm))
    }

    /// Upper integration limit in units of `z0`.
    pub fn reduced_extent(&self) -> f64 {
        match self.ell {
            Some(ell) => ell,
            None => self.eps + TAIL_EXTENT,
        }
    }
}

/// Two-mirror determinant `Bi(-e) Ai(l - e) - Ai(-e) Bi(l - e)`.
pub fn two_mirror_determinant(eps: f64, ell: f64) -> Result<f64> {
    let a = airy::eval_airy(-eps)?;
    let b = airy::eval_airy(ell - eps)?;
    Ok(a.bi * b.ai - a.ai * b.bi)
}

/// The lowest `n_max` states of the given geometry.
pub fn solve_spectrum(
    geometry: MirrorGeometry,
    n_max: usize,
    scales: &PhysicalScales,
) -> Result<Vec<EigenState>> {
    if n_max == 0 || n_max > MAX_STATES {
        return Err(Error::domain(format!(
            "number of states must lie in 1..={MAX_STATES}, got {n_max}"
        )));
    }
    let energies = match geometry.reduced_separation(scales)? {
        None => {
            let brackets = airy::bracket_roots(
                AiryCombination::AI,
                -WORKING_LIMIT,
                0.0,
                airy::DEFAULT_SCAN_STEP,
            )?;
            if brackets.len() < n_max {
                return Err(Error::Range {
                    value: n_max as f64,
                    limit: brackets.len() as f64,
                });
            }
            brackets
                .iter()
                .rev()
                .take(n_max)
                .map(|b| airy::refine_root(AiryCombination::AI, *b).map(|r| -r))
                .collect::<Result<Vec<_>>>()?
        }
        Some(ell) => {
            let d = |e: f64| two_mirror_determinant(e, ell).unwrap_or(f64::NAN);
            let mut out = Vec::with_capacity(n_max);
            for (lo, hi) in roots::scan_sign_changes(d, 0.0, WORKING_LIMIT, ENERGY_SCAN_STEP) {
                out.push(roots::brent(d, lo, hi)?);
                if out.len() == n_max {
                    break;
                }
            }
            if out.len() < n_max {
                return Err(Error::Range {
                    value: n_max as f64,
                    limit: out.len() as f64,
                });
            }
            out
        }
    };

    let states = energies
        .into_iter()
        .enumerate()
        .map(|(i, e)| EigenState::from_reduced_energy(i + 1, e, geometry, *scales))
        .collect::<Result<Vec<_>>>()?;
    for s in &states {
        let nodes = count_nodes(s)?;
        if nodes != s.n - 1 {
            return Err(Error::numerical(format!(
                "state {} has {nodes} interior nodes, expected {}",
                s.n,
                s.n - 1
            )));
        }
    }
    Ok(states)
}

/// Interior sign changes of the wave function.
pub fn count_nodes(state: &EigenState) -> Result<usize> {
    let lo = 0.0;
    let hi = match state.ell {
        Some(ell) => ell,
        None => state.eps + 5.0,
    };
    let samples = 2000 + 400 * state.n;
    let mut values = Vec::with_capacity(samples);
    for i in 1..samples {
        let x = lo + (hi - lo) * i as f64 / samples as f64;
        values.push(state.reduced_eval(x)?.0);
    }
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut count = 0;
    let mut last = 0.0;
    for v in values.into_iter().filter(|v| v.abs() > 1e-9 * peak) {
        if last != 0.0 && v.signum() != last {
            count += 1;
        }
        last = v.signum();
    }
    Ok(count)
}

/// Normalised wave function at height `z` (m), in m^(-1/2).
pub fn eval_wavefunction(state: &EigenState, z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::domain("height must be finite"));
    }
    let x = state.scales.reduce_length(z);
    let (psi, _) = state.reduced_eval(x)?;
    Ok(psi / state.scales.length().sqrt())
}

pub(crate) fn same_basis(states: &[EigenState]) -> Result<()> {
    if let Some(first) = states.first() {
        for s in states {
            if s.geometry != first.geometry || s.scales != first.scales {
                return Err(Error::precondition(
                    "states belong to different geometries or constants",
                ));
            }
        }
    }
    Ok(())
}

/// Reduced-unit overlap `<m|k>` by adaptive quadrature.
pub fn quadrature_overlap(m: &EigenState, k: &EigenState) -> Result<f64> {
    same_basis(&[m.clone(), k.clone()])?;
    let upper = m.reduced_extent().max(k.reduced_extent());
    let mut points = vec![0.0, m.eps.min(upper), k.eps.min(upper), upper];
    points.sort_by(f64::total_cmp);
    let r = quad::integrate_with_breaks(
        |x| {
            let a = m.reduced_eval(x).map(|v| v.0).unwrap_or(f64::NAN);
            let b = k.reduced_eval(x).map(|v| v.0).unwrap_or(f64::NAN);
            a * b
        },
        &points,
        Tolerance::default(),
    )?;
    Ok(r.value)
}

/// Largest deviation of the quadrature Gram matrix from the identity.
pub fn orthonormality_check(states: &[EigenState]) -> Result<f64> {
    same_basis(states)?;
    let mut worst = 0.0f64;
    for (i, m) in states.iter().enumerate() {
        for k in &states[i..] {
            let target = if m.n == k.n { 1.0 } else { 0.0 };
            worst = worst.max((quadrature_overlap(m, k)? - target).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::MICROMETRE_M;

    const TABLE_ONE: [f64; 6] = [1.40672, 2.45951, 3.32144, 4.08321, 4.77958, 5.42846];

    fn scales() -> PhysicalScales {
        PhysicalScales::neutron()
    }

    fn two(l_um: f64) -> MirrorGeometry {
        MirrorGeometry::two_mirror(l_um * MICROMETRE_M).unwrap()
    }

    #[test]
    fn one_mirror_energies() {
        let s = solve_spectrum(MirrorGeometry::OneMirror, 6, &scales()).unwrap();
        for (st, want) in s.iter().zip(TABLE_ONE) {
            assert!((st.energy_pev() - want).abs() < 5e-5);
        }
    }

    #[test]
    fn two_mirror_is_above_one_mirror() {
        let one = solve_spectrum(MirrorGeometry::OneMirror, 6, &scales()).unwrap();
        let two = solve_spectrum(two(28.0), 6, &scales()).unwrap();
        for (a, b) in one.iter().zip(&two) {
            assert!(b.energy() > a.energy());
        }
        assert!(two.windows(2).all(|w| w[0].energy() < w[1].energy()));
    }

    #[test]
    fn wide_gap_decouples() {
        let one = solve_spectrum(MirrorGeometry::OneMirror, 1, &scales()).unwrap();
        let two = solve_spectrum(two(60.0), 1, &scales()).unwrap();
        assert!((one[0].energy_pev() - two[0].energy_pev()).abs() < 1e-6);
    }

    #[test]
    fn determinant_residual() {
        let st = solve_spectrum(two(28.0), 6, &scales()).unwrap();
        for s in &st {
            let d = two_mirror_determinant(s.reduced_energy(), s.reduced_separation().unwrap())
                .unwrap();
            assert!(d.abs() < 1e-12, "{d:e}");
        }
    }

    #[test]
    fn boundary_values_and_derivatives() {
        let h = 1e-5;
        for geom in [MirrorGeometry::OneMirror, two(28.0)] {
            for s in solve_spectrum(geom, 6, &scales()).unwrap() {
                let f = s.combination();
                let sa = s.sigma_lower();
                assert!(f.value(sa).unwrap().abs() < 1e-10);
                let fd = (f.value(sa + h).unwrap() - f.value(sa - h).unwrap()) / (2.0 * h);
                assert!((fd - s.fprime_lower()).abs() < 1e-8);
                if s.reduced_separation().is_some() {
                    let sb = s.sigma_upper();
                    assert!(f.value(sb).unwrap().abs() < 1e-10);
                    let fd = (f.value(sb + h).unwrap() - f.value(sb - h).unwrap()) / (2.0 * h);
                    assert!((fd - s.fprime_upper()).abs() < 1e-8);
                } else {
                    assert_eq!(s.fprime_upper(), 0.0);
                }
                assert!(s.norm_denominator() > 0.0);
            }
        }
    }

    #[test]
    fn one_mirror_ratio_form() {
        let sc = scales();
        let st = solve_spectrum(MirrorGeometry::OneMirror, 3, &sc).unwrap();
        for s in &st {
            let an = s.sigma_lower();
            let aip = airy::eval_airy(an).unwrap().ai_prime;
            for x in [0.0, 0.7, 2.5, 4.1, 9.0] {
                let z = sc.restore_length(x);
                let lhs = eval_wavefunction(s, z).unwrap() * sc.length().sqrt() * aip;
                let rhs = airy::eval_airy(x + an).unwrap().ai;
                assert!((lhs - rhs).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn wavefunction_vanishes_at_mirrors() {
        let sc = scales();
        for s in solve_spectrum(two(28.0), 6, &sc).unwrap() {
            assert!((eval_wavefunction(&s, 0.0).unwrap() * sc.length().sqrt()).abs() < 1e-9);
            let l = 28.0 * MICROMETRE_M;
            assert!((eval_wavefunction(&s, l).unwrap() * sc.length().sqrt()).abs() < 1e-9);
            assert!(eval_wavefunction(&s, 1.01 * l).is_err());
            assert!(eval_wavefunction(&s, -1e-7).is_err());
        }
    }

    #[test]
    fn orthonormal_bases() {
        let sc = scales();
        let one = solve_spectrum(MirrorGeometry::OneMirror, 6, &sc).unwrap();
        assert!(orthonormality_check(&one).unwrap() < 1e-8);
        assert!(orthonormality_check(&one[..1]).unwrap() < 1e-8);
        let two_m = solve_spectrum(two(28.0), 6, &sc).unwrap();
        assert!(orthonormality_check(&two_m).unwrap() < 1e-8);
        let mixed = vec![one[0].clone(), two_m[1].clone()];
        assert!(matches!(
            orthonormality_check(&mixed),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn node_counts() {
        let st = solve_spectrum(two(28.0), 6, &scales()).unwrap();
        assert_eq!(count_nodes(&st[2]).unwrap(), 2);
    }

    #[test]
    fn invalid_requests() {
        let sc = scales();
        assert!(matches!(
            solve_spectrum(MirrorGeometry::OneMirror, 0, &sc),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            solve_spectrum(MirrorGeometry::OneMirror, 51, &sc),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            solve_spectrum(MirrorGeometry::OneMirror, 45, &sc),
            Err(Error::Range { .. })
        ));
        assert!(matches!(
            solve_spectrum(two(200.0), 3, &sc),
            Err(Error::Range { .. })
        ));
        assert!(MirrorGeometry::two_mirror(-1.0).is_err());
        assert!(EigenState::from_reduced_energy(1, 2.0, MirrorGeometry::OneMirror, sc).is_err());
    }

    #[test]
    fn rebuild_from_energy() {
        let sc = scales();
        let st = solve_spectrum(two(28.0), 4, &sc).unwrap();
        for s in &st {
            let r = EigenState::from_reduced_energy(s.n(), s.reduced_energy(), s.geometry(), sc)
                .unwrap();
            assert_eq!(&r, s);
        }
    }
}
