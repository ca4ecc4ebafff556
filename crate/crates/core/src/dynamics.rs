//! Potential operators for two independently vibrating mirrors and the
//! interaction-picture amplitude equations they induce.
//!
//! Both models are expressed in the transformed time `t` in which the mirrors
//! are static at separation `L`. The exact model needs the laboratory time
//! `t~` as well; it is advanced together with the amplitudes through
//! `dt~/dt = chi~(t~)^2`.

use std::f64::consts::TAU;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matel::{OperatorKind, OperatorTables};
use crate::ode::{self, OdeOptions};
use crate::quad::{self, Tolerance};
use crate::roots;
use crate::spectrum::{EigenState, MirrorGeometry};
use crate::units::PhysicalScales;

/// Default bound on `a/L` and `A/L`.
pub const DEFAULT_VALIDITY_LIMIT: f64 = 0.2;
/// Default integrator tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Leakage into the top two basis states above which a warning is issued.
pub const LEAKAGE_WARNING: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    #[default]
    Perturbative,
    Exact,
}

/// Mirror motion. Lower mirror at `a sin(omega t)`, upper mirror at
/// `L + A sin(Omega t + phi)`. SI units throughout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    /// `a` (m).
    pub lower_amplitude: f64,
    /// `omega` (rad/s).
    pub lower_omega: f64,
    /// `A` (m).
    pub upper_amplitude: f64,
    /// `Omega` (rad/s).
    pub upper_omega: f64,
    /// `phi` (rad).
    pub phase: f64,
    /// Mean mirror separation `L` (m).
    pub separation: f64,
    pub model: Model,
    /// Largest accepted `a/L` and `A/L`.
    pub validity_limit: f64,
}

impl DriveConfig {
    /// Static mirrors a distance `separation` apart.
    pub fn at_rest(separation: f64) -> Self {
        DriveConfig {
            lower_amplitude: 0.0,
            lower_omega: 0.0,
            upper_amplitude: 0.0,
            upper_omega: 0.0,
            phase: 0.0,
            separation,
            model: Model::Perturbative,
            validity_limit: DEFAULT_VALIDITY_LIMIT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("lower amplitude", self.lower_amplitude),
            ("lower frequency", self.lower_omega),
            ("upper amplitude", self.upper_amplitude),
            ("upper frequency", self.upper_omega),
            ("phase", self.phase),
            ("separation", self.separation),
            ("validity limit", self.validity_limit),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::domain(format!("{name} must be finite")));
            }
        }
        if self.separation <= 0.0 {
            return Err(Error::domain("mirror separation must be positive"));
        }
        if self.lower_amplitude < 0.0 || self.upper_amplitude < 0.0 {
            return Err(Error::domain("vibration amplitudes must be non-negative"));
        }
        if self.lower_omega < 0.0 || self.upper_omega < 0.0 {
            return Err(Error::domain("vibration frequencies must be non-negative"));
        }
        if self.lower_amplitude > 0.0 && self.lower_omega == 0.0 {
            return Err(Error::domain("a vibrating lower mirror needs omega > 0"));
        }
        if self.upper_amplitude > 0.0 && self.upper_omega == 0.0 {
            return Err(Error::domain("a vibrating upper mirror needs Omega > 0"));
        }
        for (name, amp) in [("a/L", self.lower_amplitude), ("A/L", self.upper_amplitude)] {
            let r = amp / self.separation;
            if r >= self.validity_limit {
                return Err(Error::domain(format!(
                    "{name} = {r} exceeds the validity limit {}",
                    self.validity_limit
                )));
            }
        }
        Ok(())
    }

    /// Period of the lower mirror, or of the upper one if the lower is at rest.
    pub fn drive_period(&self) -> Option<f64> {
        if self.lower_amplitude > 0.0 {
            Some(TAU / self.lower_omega)
        } else if self.upper_amplitude > 0.0 {
            Some(TAU / self.upper_omega)
        } else {
            None
        }
    }

    fn reduced(&self, scales: &PhysicalScales) -> ReducedDrive {
        ReducedDrive {
            al: self.lower_amplitude / self.separation,
            au: self.upper_amplitude / self.separation,
            a_z0: scales.reduce_length(self.lower_amplitude),
            w: scales.reduce_frequency(self.lower_omega),
            ww: scales.reduce_frequency(self.upper_omega),
            phi: self.phase,
            model: self.model,
        }
    }
}

/// Drive in reduced units: amplitudes over `L`, frequencies times `t0`.
#[derive(Clone, Copy, Debug)]
struct ReducedDrive {
    al: f64,
    au: f64,
    a_z0: f64,
    w: f64,
    ww: f64,
    phi: f64,
    model: Model,
}

impl ReducedDrive {
    /// `chi~` and its derivative at laboratory time `tt`.
    fn chi_tilde(&self, tt: f64) -> (f64, f64) {
        let (su, cu) = (self.ww * tt + self.phi).sin_cos();
        let (sl, cl) = (self.w * tt).sin_cos();
        (
            1.0 + self.au * su - self.al * sl,
            self.au * self.ww * cu - self.al * self.w * cl,
        )
    }

    /// Oscillatory corrections of the perturbative map `t~ -> t`.
    fn map_correction(&self, s: f64) -> f64 {
        let mut c = 0.0;
        if self.au > 0.0 {
            c += 2.0 * self.au / self.ww * ((self.ww * s + self.phi).cos() - self.phi.cos());
        }
        if self.al > 0.0 {
            c -= 2.0 * self.al / self.w * ((self.w * s).cos() - 1.0);
        }
        c
    }

    fn coefficients(&self, tau: f64, t_tilde: f64) -> ReducedCoefficients {
        match self.model {
            Model::Perturbative => {
                let (su, cu) = (self.ww * tau + self.phi).sin_cos();
                let (sl, cl) = (self.w * tau).sin_cos();
                let cphi = self.phi.cos();
                let ratio = if self.au > 0.0 { self.w / self.ww } else { 0.0 };
                let c_z = 3.0 * self.au * su - 3.0 * self.al * sl;
                let c_d = self.a_z0
                    * self.w
                    * (cl
                        + (self.au * cl * su - self.al * cl * sl)
                        + (2.0 * self.au * ratio * sl * (cu - cphi)
                            - 2.0 * self.al * sl * (cl - 1.0)));
                let c_zd = self.au * self.ww * cu - self.al * self.w * cl;
                let v_r = self.a_z0
                    * (sl
                        + (2.0 * self.au * sl * su - 2.0 * self.al * sl * sl)
                        + (2.0 * self.al * cl * (cl - 1.0)
                            - 2.0 * self.au * ratio * cl * (cu - cphi)));
                ReducedCoefficients {
                    c_z,
                    c_d,
                    c_zd,
                    v_r,
                }
            }
            Model::Exact => {
                let (ch, chp) = self.chi_tilde(t_tilde);
                let (s, c) = (self.w * t_tilde).sin_cos();
                ReducedCoefficients {
                    c_z: ch * ch * ch - 1.0,
                    c_d: self.a_z0 * self.w * ch * c,
                    c_zd: ch * chp,
                    v_r: self.a_z0 * ch * ch * s,
                }
            }
        }
    }
}

/// Coefficients of the potential operator
/// `c_z z + i c_d d/dz + i c_zd (z d/dz + 1/2) + v_r`, reduced units
/// (energies in `E0`, lengths in `z0`).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ReducedCoefficients {
    pub c_z: f64,
    pub c_d: f64,
    pub c_zd: f64,
    pub v_r: f64,
}

impl ReducedCoefficients {
    pub fn to_si(&self, scales: &PhysicalScales) -> PotentialCoefficients {
        let e0 = scales.energy();
        let z0 = scales.length();
        PotentialCoefficients {
            c_z: self.c_z * e0 / z0,
            c_d: self.c_d * e0 * z0,
            c_zd: self.c_zd * e0,
            v_r: self.v_r * e0,
        }
    }
}

/// The same coefficients in SI: `c_z` in J/m, `c_d` in J m, `c_zd` and
/// `v_r` in J.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct PotentialCoefficients {
    pub c_z: f64,
    pub c_d: f64,
    pub c_zd: f64,
    pub v_r: f64,
}

/// `1 + (A/L) sin(Omega t + phi) - (a/L) sin(omega t)`.
pub fn chi_perturbative(t: f64, cfg: &DriveConfig) -> f64 {
    let mut chi = 1.0;
    if cfg.upper_amplitude > 0.0 {
        chi += cfg.upper_amplitude / cfg.separation * (cfg.upper_omega * t + cfg.phase).sin();
    }
    if cfg.lower_amplitude > 0.0 {
        chi -= cfg.lower_amplitude / cfg.separation * (cfg.lower_omega * t).sin();
    }
    chi
}

/// Maps laboratory time `t~` to transformed time `t` (seconds).
pub fn time_map(t_tilde: f64, cfg: &DriveConfig, scales: &PhysicalScales) -> Result<f64> {
    cfg.validate()?;
    let d = cfg.reduced(scales);
    let s = scales.reduce_time(t_tilde);
    let t = match cfg.model {
        Model::Perturbative => s + d.map_correction(s),
        Model::Exact => exact_forward(&d, s)?,
    };
    Ok(scales.restore_time(t))
}

/// Maps transformed time `t` back to laboratory time `t~` (seconds).
pub fn time_map_inverse(t: f64, cfg: &DriveConfig, scales: &PhysicalScales) -> Result<f64> {
    cfg.validate()?;
    let d = cfg.reduced(scales);
    let tau = scales.reduce_time(t);
    let s = match cfg.model {
        Model::Perturbative => tau - d.map_correction(tau),
        Model::Exact => exact_inverse(&d, tau)?,
    };
    Ok(scales.restore_time(s))
}

/// Bound on `|time_map(time_map_inverse(t)) - t|` for the perturbative maps,
/// in seconds.
pub fn perturbative_round_trip_bound(cfg: &DriveConfig, scales: &PhysicalScales) -> f64 {
    let d = cfg.reduced(scales);
    let ratio = d.al.max(d.au);
    let mut amp = 0.0;
    if d.au > 0.0 {
        amp += 2.0 * d.au / d.ww;
    }
    if d.al > 0.0 {
        amp += 2.0 * d.al / d.w;
    }
    scales.restore_time(8.0 * ratio * amp)
}

fn shortest_period(d: &ReducedDrive) -> f64 {
    let mut p = f64::INFINITY;
    if d.al > 0.0 {
        p = p.min(TAU / d.w);
    }
    if d.au > 0.0 {
        p = p.min(TAU / d.ww);
    }
    p
}

/// `int_0^s dt / chi~(t)^2` by quadrature, one drive period at a time.
fn exact_forward(d: &ReducedDrive, s: f64) -> Result<f64> {
    if s == 0.0 {
        return Ok(0.0);
    }
    let period = shortest_period(d);
    if !period.is_finite() {
        return Ok(s);
    }
    let (lo, hi, sign) = if s > 0.0 {
        (0.0, s, 1.0)
    } else {
        (s, 0.0, -1.0)
    };
    let chunks = ((hi - lo) / period).ceil().max(1.0) as usize;
    let step = (hi - lo) / chunks as f64;
    let mut total = 0.0;
    for i in 0..chunks {
        let a = lo + i as f64 * step;
        let b = if i + 1 == chunks { hi } else { a + step };
        let r = quad::integrate(
            |x| {
                let c = d.chi_tilde(x).0;
                1.0 / (c * c)
            },
            a,
            b,
            Tolerance {
                abs: 1e-15 * period,
                rel: 1e-14,
            },
        )?;
        total += r.value;
    }
    Ok(sign * total)
}

fn exact_inverse(d: &ReducedDrive, tau: f64) -> Result<f64> {
    if tau == 0.0 || !shortest_period(d).is_finite() {
        return Ok(tau);
    }
    let s = d.al + d.au;
    let (lo, hi) = {
        let a = tau * (1.0 - s).powi(2);
        let b = tau * (1.0 + s).powi(2);
        let pad = 1e-9 * tau.abs() + 1e-12;
        (a.min(b) - pad, a.max(b) + pad)
    };
    let f = |x: f64| exact_forward(d, x).map(|v| v - tau).unwrap_or(f64::NAN);
    roots::brent(f, lo, hi).map_err(|e| match e {
        Error::Precondition(m) | Error::Numerical(m) => {
            Error::numerical(format!("inverse time map did not converge: {m}"))
        }
        other => other,
    })
}

/// Potential coefficients at transformed time `t` (seconds), SI units.
pub fn potential_coefficients(
    t: f64,
    cfg: &DriveConfig,
    scales: &PhysicalScales,
) -> Result<PotentialCoefficients> {
    Ok(reduced_coefficients(t, cfg, scales)?.to_si(scales))
}

/// Potential coefficients at transformed time `t` (seconds), reduced units.
pub fn reduced_coefficients(
    t: f64,
    cfg: &DriveConfig,
    scales: &PhysicalScales,
) -> Result<ReducedCoefficients> {
    cfg.validate()?;
    let d = cfg.reduced(scales);
    let tau = scales.reduce_time(t);
    let tt = match cfg.model {
        Model::Perturbative => tau,
        Model::Exact => exact_inverse(&d, tau)?,
    };
    Ok(d.coefficients(tau, tt))
}

/// Real operator matrices in reduced units plus the reduced energies.
struct Basis {
    eps: Vec<f64>,
    z: Array2<f64>,
    d: Array2<f64>,
    /// `<m|z d/dz|k> + delta_mk / 2`
    zdh: Array2<f64>,
}

impl Basis {
    fn new(
        tables: &OperatorTables,
        states: &[EigenState],
        scales: &PhysicalScales,
    ) -> Result<Self> {
        let n = tables.basis_size();
        if states.len() != n {
            return Err(Error::precondition(format!(
                "{} states supplied for {n}x{n} operator tables",
                states.len()
            )));
        }
        if tables.scales() != scales || states.iter().any(|s| s.scales() != scales) {
            return Err(Error::precondition(
                "tables, states and scales use different physical constants",
            ));
        }
        if states.iter().any(|s| s.geometry() != tables.geometry()) {
            return Err(Error::precondition(
                "states and tables belong to different geometries",
            ));
        }
        let mut zdh = tables.reduced(OperatorKind::PositionDerivative).clone();
        for i in 0..n {
            zdh[[i, i]] += 0.5;
        }
        Ok(Basis {
            eps: states.iter().map(EigenState::reduced_energy).collect(),
            z: tables.reduced(OperatorKind::Position).clone(),
            d: tables.reduced(OperatorKind::Derivative).clone(),
            zdh,
        })
    }

    fn len(&self) -> usize {
        self.eps.len()
    }

    /// `M_mk = e^{i(e_m - e_k) tau} [c_z Z + i c_d D + i c_zd (ZD + 1/2) + v_r]`.
    fn fill(&self, tau: f64, c: &ReducedCoefficients, out: &mut Array2<Complex64>) {
        let n = self.len();
        let phases: Vec<Complex64> = self
            .eps
            .iter()
            .map(|e| Complex64::from_polar(1.0, e * tau))
            .collect();
        for m in 0..n {
            for k in 0..n {
                let re = c.c_z * self.z[[m, k]] + if m == k { c.v_r } else { 0.0 };
                let im = c.c_d * self.d[[m, k]] + c.c_zd * self.zdh[[m, k]];
                out[[m, k]] = phases[m] * phases[k].conj() * Complex64::new(re, im);
            }
        }
    }
}

fn check_geometry(cfg: &DriveConfig, tables: &OperatorTables) -> Result<()> {
    match tables.geometry() {
        MirrorGeometry::TwoMirror { separation } => {
            if (separation - cfg.separation).abs() > 1e-12 * separation {
                return Err(Error::precondition(format!(
                    "tables were built for L = {separation} m but the drive uses L = {} m",
                    cfg.separation
                )));
            }
            Ok(())
        }
        MirrorGeometry::OneMirror => Err(Error::precondition(
            "two-mirror drives need tables built for the two-mirror geometry",
        )),
    }
}

/// Coupling matrix of the amplitude equations at transformed time `t` (s),
/// in joules: `i hbar da/dt = M a`.
pub fn coupling_matrix(
    t: f64,
    cfg: &DriveConfig,
    tables: &OperatorTables,
    states: &[EigenState],
    scales: &PhysicalScales,
) -> Result<Array2<Complex64>> {
    check_geometry(cfg, tables)?;
    let basis = Basis::new(tables, states, scales)?;
    let c = reduced_coefficients(t, cfg, scales)?;
    let n = basis.len();
    let mut m = Array2::zeros((n, n));
    basis.fill(scales.reduce_time(t), &c, &mut m);
    Ok(m.mapv(|v| v * scales.energy()))
}

/// Coupling matrix of a single lower mirror vibrating as `a sin(omega t)`,
/// assembled directly from `m g a sin(omega t) + i hbar a omega cos(omega t) d/dz`.
pub fn single_mirror_coupling(
    t: f64,
    amplitude: f64,
    omega: f64,
    tables: &OperatorTables,
    states: &[EigenState],
    scales: &PhysicalScales,
) -> Result<Array2<Complex64>> {
    let basis = Basis::new(tables, states, scales)?;
    let n = basis.len();
    let mut m = Array2::zeros((n, n));
    single_mirror_fill(
        &basis,
        scales.reduce_time(t),
        amplitude,
        omega,
        scales,
        &mut m,
    );
    Ok(m.mapv(|v| v * scales.energy()))
}

fn single_mirror_fill(
    basis: &Basis,
    tau: f64,
    amplitude: f64,
    omega: f64,
    scales: &PhysicalScales,
    out: &mut Array2<Complex64>,
) {
    let mass = scales.mass();
    let g = scales.g();
    let hbar = scales.hbar();
    let e0 = scales.energy();
    let z0 = scales.length();
    let t = scales.restore_time(tau);
    let scalar = mass * g * amplitude * (omega * t).sin() / e0;
    // hbar a omega cos(omega t) d/dz, with d/dz = D / z0
    let deriv = hbar * amplitude * omega * (omega * t).cos() / (z0 * e0);
    let n = basis.len();
    for m in 0..n {
        for k in 0..n {
            let phase = Complex64::from_polar(1.0, (basis.eps[m] - basis.eps[k]) * tau);
            let v = Complex64::new(if m == k { scalar } else { 0.0 }, deriv * basis.d[[m, k]]);
            out[[m, k]] = phase * v;
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    /// Relative and absolute integrator tolerance, in `[1e-12, 1e-4]`.
    pub tol: f64,
    /// Output times (s). When empty, `samples` equally spaced times are used.
    pub output_times: Vec<f64>,
    pub samples: usize,
    /// Keep the scalar `v_r` term. It only contributes a global phase.
    pub include_vr: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            tol: DEFAULT_TOLERANCE,
            output_times: Vec::new(),
            samples: 201,
            include_vr: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AmplitudeTrajectory {
    /// Transformed times (s).
    pub times: Vec<f64>,
    /// One row per output time.
    pub amplitudes: Array2<Complex64>,
    pub norms: Vec<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Largest `|sum |a_k|^2 - 1|` over every accepted step.
    pub max_norm_drift: f64,
    /// Largest population of the top two basis states over every accepted
    /// step; `None` for bases of fewer than three states.
    pub max_leakage: Option<f64>,
    pub warnings: Vec<String>,
}

impl AmplitudeTrajectory {
    /// `|a_k|^2` for every output time.
    pub fn populations(&self) -> Array2<f64> {
        self.amplitudes.mapv(|a| a.norm_sqr())
    }

    pub fn final_populations(&self) -> Vec<f64> {
        let last = self.amplitudes.nrows() - 1;
        self.amplitudes
            .row(last)
            .iter()
            .map(|a| a.norm_sqr())
            .collect()
    }
}

fn check_initial(initial: &[Complex64], n: usize) -> Result<()> {
    if initial.len() != n {
        return Err(Error::precondition(format!(
            "initial state has {} components, basis has {n}",
            initial.len()
        )));
    }
    let norm: f64 = initial.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::precondition(format!(
            "initial state must be normalised, norm = {norm}"
        )));
    }
    Ok(())
}

fn output_grid(t_span: (f64, f64), opts: &EvolveOptions) -> Result<Vec<f64>> {
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite() && t1 >= t0) {
        return Err(Error::domain("time span must be finite and ordered"));
    }
    if !(opts.tol >= 1e-12 && opts.tol <= 1e-4) {
        return Err(Error::domain(format!(
            "integrator tolerance {} outside [1e-12, 1e-4]",
            opts.tol
        )));
    }
    if opts.output_times.is_empty() {
        let n = opts.samples.max(2);
        Ok((0..n)
            .map(|i| {
                if i + 1 == n {
                    t1
                } else {
                    t0 + (t1 - t0) * i as f64 / (n - 1) as f64
                }
            })
            .collect())
    } else {
        let ts = opts.output_times.clone();
        if ts.windows(2).any(|w| w[1] < w[0]) || ts.iter().any(|t| *t < t0 || *t > t1) {
            return Err(Error::domain(
                "output times must be ascending and inside the time span",
            ));
        }
        Ok(ts)
    }
}

/// Integrates `i da/dtau = M(tau) a` with the given matrix builder, which
/// receives the reduced time and the current auxiliary laboratory time.
fn run<B>(
    initial: &[Complex64],
    n: usize,
    t_span: (f64, f64),
    opts: &EvolveOptions,
    scales: &PhysicalScales,
    aux: Option<(f64, ReducedDrive)>,
    build: B,
) -> Result<AmplitudeTrajectory>
where
    B: Fn(f64, f64, &mut Array2<Complex64>),
{
    check_initial(initial, n)?;
    let outputs = output_grid(t_span, opts)?;
    let tau0 = scales.reduce_time(t_span.0);
    let reduced_out: Vec<f64> = outputs.iter().map(|t| scales.reduce_time(*t)).collect();

    let mut y0 = initial.to_vec();
    if let Some((tt0, _)) = aux {
        y0.push(Complex64::new(tt0, 0.0));
    }
    let mut m = Array2::<Complex64>::zeros((n, n));
    let rhs = |tau: f64, y: &[Complex64], dy: &mut [Complex64]| {
        let tt = if aux.is_some() { y[n].re } else { tau };
        build(tau, tt, &mut m);
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                acc += m[[i, k]] * y[k];
            }
            dy[i] = Complex64::new(acc.im, -acc.re); // -i * acc
        }
        if let Some((_, d)) = &aux {
            let c = d.chi_tilde(tt).0;
            dy[n] = Complex64::new(c * c, 0.0);
        }
    };

    let mut drift = 0.0f64;
    let mut leak: Option<f64> = if n > 2 { Some(0.0) } else { None };
    let observe = |_: f64, y: &[Complex64]| {
        let norm: f64 = y[..n].iter().map(|a| a.norm_sqr()).sum();
        drift = drift.max((norm - 1.0).abs());
        if let Some(l) = leak.as_mut() {
            *l = l.max(y[n - 2].norm_sqr() + y[n - 1].norm_sqr());
        }
    };
    let ode_opts = OdeOptions {
        rtol: opts.tol,
        atol: opts.tol,
        ..Default::default()
    };
    let (states, stats) = ode::integrate(rhs, tau0, &y0, &reduced_out, &ode_opts, observe)?;

    let mut amplitudes = Array2::zeros((outputs.len(), n));
    let mut norms = Vec::with_capacity(outputs.len());
    for (row, y) in states.iter().enumerate() {
        for k in 0..n {
            amplitudes[[row, k]] = y[k];
        }
        let norm: f64 = y[..n].iter().map(|a| a.norm_sqr()).sum();
        norms.push(norm);
        drift = drift.max((norm - 1.0).abs());
    }
    let mut warnings = Vec::new();
    if drift > 100.0 * opts.tol {
        warnings.push(format!(
            "norm drift {drift:.3e} exceeds 100 x tolerance ({:.1e})",
            100.0 * opts.tol
        ));
    }
    if let Some(l) = leak {
        if l > LEAKAGE_WARNING {
            warnings.push(format!(
                "population of the top two basis states reached {l:.3e}; the basis may be too small"
            ));
        }
    }
    Ok(AmplitudeTrajectory {
        times: outputs,
        amplitudes,
        norms,
        accepted_steps: stats.accepted,
        rejected_steps: stats.rejected,
        max_norm_drift: drift,
        max_leakage: leak,
        warnings,
    })
}

/// Evolves the amplitudes under the two-mirror drive over `t_span` (s, in
/// transformed time).
pub fn evolve(
    initial: &[Complex64],
    t_span: (f64, f64),
    cfg: &DriveConfig,
    tables: &OperatorTables,
    states: &[EigenState],
    scales: &PhysicalScales,
    opts: &EvolveOptions,
) -> Result<AmplitudeTrajectory> {
    cfg.validate()?;
    check_geometry(cfg, tables)?;
    let basis = Basis::new(tables, states, scales)?;
    let d = cfg.reduced(scales);
    let aux = match cfg.model {
        Model::Perturbative => None,
        Model::Exact => Some((exact_inverse(&d, scales.reduce_time(t_span.0))?, d)),
    };
    let include_vr = opts.include_vr;
    run(
        initial,
        basis.len(),
        t_span,
        opts,
        scales,
        aux,
        |tau, tt, m| {
            let mut c = d.coefficients(tau, tt);
            if !include_vr {
                c.v_r = 0.0;
            }
            basis.fill(tau, &c, m);
        },
    )
}

/// Evolves the amplitudes under a single vibrating lower mirror, using the
/// directly assembled single-mirror potential.
#[allow(clippy::too_many_arguments)]
pub fn evolve_single_mirror(
    initial: &[Complex64],
    t_span: (f64, f64),
    amplitude: f64,
    omega: f64,
    tables: &OperatorTables,
    states: &[EigenState],
    scales: &PhysicalScales,
    opts: &EvolveOptions,
) -> Result<AmplitudeTrajectory> {
    if !(amplitude >= 0.0 && omega >= 0.0 && amplitude.is_finite() && omega.is_finite()) {
        return Err(Error::domain(
            "amplitude and frequency must be finite and non-negative",
        ));
    }
    let basis = Basis::new(tables, states, scales)?;
    run(
        initial,
        basis.len(),
        t_span,
        opts,
        scales,
        None,
        |tau, _, m| single_mirror_fill(&basis, tau, amplitude, omega, scales, m),
    )
}

/// Quantity recorded at the end of each scan run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    /// Population left in the ground state.
    Survival,
    /// Population of state `k` (1-based).
    Transfer(usize),
}

/// Which mirror's frequency is scanned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScanTarget {
    #[default]
    Lower,
    Upper,
}

/// Runs one evolution per frequency from the ground state and records the
/// observable after `duration` seconds. Grid points are processed in parallel.
#[allow(clippy::too_many_arguments)]
pub fn frequency_scan(
    template: &DriveConfig,
    omega_grid: &[f64],
    duration: f64,
    observable: Observable,
    target: ScanTarget,
    tables: &OperatorTables,
    states: &[EigenState],
    scales: &PhysicalScales,
    tol: f64,
) -> Result<Vec<(f64, f64)>> {
    if omega_grid.is_empty() {
        return Err(Error::domain("frequency grid is empty"));
    }
    if omega_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::precondition(
            "frequency grid must be strictly ascending",
        ));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::domain("scan duration must be positive"));
    }
    let n = states.len();
    let index = match observable {
        Observable::Survival => 0,
        Observable::Transfer(k) if k >= 1 && k <= n => k - 1,
        Observable::Transfer(k) => {
            return Err(Error::domain(format!(
                "state {k} is not in the {n}-state basis"
            )))
        }
    };
    let mut initial = vec![Complex64::new(0.0, 0.0); n];
    initial[0] = Complex64::new(1.0, 0.0);
    let opts = EvolveOptions {
        tol,
        output_times: vec![0.0, duration],
        ..Default::default()
    };
    omega_grid
        .par_iter()
        .map(|&w| {
            let mut cfg = *template;
            match target {
                ScanTarget::Lower => cfg.lower_omega = w,
                ScanTarget::Upper => cfg.upper_omega = w,
            }
            let tr = evolve(
                &initial,
                (0.0, duration),
                &cfg,
                tables,
                states,
                scales,
                &opts,
            )?;
            Ok((w, tr.final_populations()[index]))
        })
        .collect()
}

/// Rotating-wave two-level prediction for a lower-mirror drive resonant with
/// the `m -> k` transition (0-based indices), to first order in `a/L`.
#[derive(Clone, Copy, Debug)]
pub struct RabiPrediction {
    /// Effective coupling in reduced units (`E0`).
    pub coupling: Complex64,
    /// Full Rabi frequency `2 |g|` (rad/s).
    pub rabi_frequency: f64,
    /// Time of the first population maximum (s).
    pub peak_time: f64,
    /// Bohr frequency of the transition (rad/s).
    pub bohr_frequency: f64,
}

pub fn rabi_prediction(
    amplitude: f64,
    separation: f64,
    tables: &OperatorTables,
    states: &[EigenState],
    scales: &PhysicalScales,
    m: usize,
    k: usize,
) -> Result<RabiPrediction> {
    let n = tables.basis_size();
    if m >= n || k >= n || m == k || states.len() != n {
        return Err(Error::precondition("transition indices outside the basis"));
    }
    let w = states[k].reduced_energy() - states[m].reduced_energy();
    let al = amplitude / separation;
    let a_z0 = scales.reduce_length(amplitude);
    let z = tables.reduced(OperatorKind::Position)[[m, k]];
    let d = tables.reduced(OperatorKind::Derivative)[[m, k]];
    let zd = tables.reduced(OperatorKind::PositionDerivative)[[m, k]];
    // co-rotating parts of -3(a/L) sin, (a/z0) w cos and -(a/L) w cos
    let g = Complex64::new(0.0, 1.5 * al * z)
        + Complex64::new(0.0, 0.5 * a_z0 * w * d)
        + Complex64::new(0.0, -0.5 * al * w * zd);
    let rabi = 2.0 * g.norm();
    Ok(RabiPrediction {
        coupling: g,
        rabi_frequency: scales.restore_frequency(rabi),
        peak_time: scales.restore_time(std::f64::consts::PI / rabi),
        bohr_frequency: scales.restore_frequency(w.abs()),
    })
}
