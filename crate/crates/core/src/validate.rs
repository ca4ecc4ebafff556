//! Reproducible acceptance checks: published spectra, closed forms against
//! quadrature, and dynamics against analytic limits.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::airy::{self, AiryCombination};
use crate::dynamics::{self, DriveConfig, EvolveOptions, Model, Observable, ScanTarget};
use crate::error::Result;
use crate::matel::{self, Branch, Integrand, OperatorKind, OperatorTables, LAMBDA_SERIES};
use crate::spectrum::{solve_spectrum, EigenState, MirrorGeometry};
use crate::units::{PhysicalScales, MICROMETRE_M};

/// One-mirror energies E1..E6 (peV).
pub const TABLE1_PEV: [f64; 6] = [1.40672, 2.45951, 3.32144, 4.08321, 4.77958, 5.42846];
/// Two-mirror energies E1..E6 at L = 28 um (peV).
pub const TABLE2_PEV: [f64; 6] = [1.40789, 2.52995, 3.84063, 5.64543, 7.98135, 10.8436];
pub const TABLE2_SEPARATION_M: f64 = 28.0 * MICROMETRE_M;
/// Energy scale the tables were computed with (peV).
pub const REFERENCE_E0_PEV: f64 = 0.60165;

pub const CRITERIA: [(u8, &str); 10] = [
    (1, "one-mirror spectrum"),
    (2, "two-mirror spectrum at L = 28 um"),
    (3, "Airy integral identities vs quadrature"),
    (4, "matrix elements vs quadrature"),
    (5, "continuity across the small-shift switch"),
    (6, "hermiticity and norm conservation"),
    (7, "single-mirror reduction"),
    (8, "resonant Rabi transfer"),
    (9, "resonance location in a frequency scan"),
    (10, "exact vs perturbative model"),
];

#[derive(Clone, Copy, Debug)]
pub struct ValidationOptions {
    pub scales: PhysicalScales,
    /// Skip the criteria that integrate the amplitude equations.
    pub quick: bool,
    pub seed: u64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            scales: PhysicalScales::neutron(),
            quick: false,
            seed: 20_140_416,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: String,
    pub status: Status,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn passed(&self) -> bool {
        !matches!(self.status, Status::Fail)
    }

    pub fn line(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        format!(
            "{tag} criterion {:>2} ({}): {} [{:.2} s]",
            self.id, self.name, self.detail, self.seconds
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub criteria: Vec<CriterionReport>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(CriterionReport::passed)
    }
}

pub fn run_all(opts: &ValidationOptions) -> ValidationReport {
    ValidationReport {
        criteria: CRITERIA
            .iter()
            .map(|(id, _)| run_criterion(*id, opts))
            .collect(),
    }
}

fn is_dynamical(id: u8) -> bool {
    id >= 6
}

/// Runs a single criterion (1..=10). Numerical errors count as failures.
pub fn run_criterion(id: u8, opts: &ValidationOptions) -> CriterionReport {
    let name = CRITERIA
        .iter()
        .find(|(i, _)| *i == id)
        .map(|(_, n)| n.to_string())
        .unwrap_or_else(|| format!("unknown criterion {id}"));
    if opts.quick && is_dynamical(id) {
        return CriterionReport {
            id,
            name,
            status: Status::Skipped,
            detail: "skipped in quick mode".into(),
            seconds: 0.0,
        };
    }
    let start = Instant::now();
    let outcome = match id {
        1 => table1(opts),
        2 => table2(opts),
        3 => identities(opts),
        4 => matrix_elements(opts),
        5 => continuity(opts),
        6 => hermiticity_and_norm(opts),
        7 => single_mirror(opts),
        8 => rabi(opts),
        9 => resonance(opts),
        10 => model_consistency(opts),
        _ => Ok((false, "no such criterion".into())),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionReport {
        id,
        name,
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
        seconds,
    }
}

type Outcome = Result<(bool, String)>;

fn compare_table(
    geometry: MirrorGeometry,
    reference: &[f64; 6],
    tolerances: &[f64; 6],
    scales: &PhysicalScales,
    start: Instant,
) -> Outcome {
    let e0_dev = (scales.energy_pev() - REFERENCE_E0_PEV).abs() / REFERENCE_E0_PEV;
    let states = solve_spectrum(geometry, 6, scales)?;
    let mut ok = e0_dev < 1e-4;
    let mut worst: Vec<String> = Vec::new();
    let mut max_dev = 0.0f64;
    for (i, s) in states.iter().enumerate() {
        let dev = (s.energy_pev() - reference[i]).abs();
        max_dev = max_dev.max(dev);
        if dev >= tolerances[i] {
            ok = false;
            worst.push(format!(
                "E{} = {:.6} (|d| = {dev:.1e})",
                i + 1,
                s.energy_pev()
            ));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 1.0;
    let mut detail = format!("E0 off by {e0_dev:.1e} rel, max |dE| = {max_dev:.2e} peV");
    if !worst.is_empty() {
        detail.push_str(&format!("; out of tolerance: {}", worst.join(", ")));
    }
    Ok((ok, detail))
}

fn table1(opts: &ValidationOptions) -> Outcome {
    compare_table(
        MirrorGeometry::OneMirror,
        &TABLE1_PEV,
        &[5e-5; 6],
        &opts.scales,
        Instant::now(),
    )
}

fn table2(opts: &ValidationOptions) -> Outcome {
    let tol = [5e-5, 5e-5, 5e-5, 5e-5, 5e-5, 5e-4];
    compare_table(
        MirrorGeometry::two_mirror(TABLE2_SEPARATION_M)?,
        &TABLE2_PEV,
        &tol,
        &opts.scales,
        Instant::now(),
    )
}

/// A combination vanishing at a random `sigma_a` and at one of its zeros
/// further right, mimicking an eigenfunction between two mirrors. It is
/// normalised to unit square integral between the two zeros.
pub fn eigen_style_instance(rng: &mut impl Rng) -> Result<(AiryCombination, f64, f64)> {
    loop {
        let sa: f64 = rng.gen_range(-12.0..-1.0);
        let p = airy::eval_airy(sa)?;
        let f = AiryCombination::new(p.bi, -p.ai)?;
        let hi = (sa + 14.0).min(4.0);
        let brackets = airy::bracket_roots(f, sa + 0.3, hi, airy::DEFAULT_SCAN_STEP)?;
        if brackets.is_empty() {
            continue;
        }
        let pick = brackets[rng.gen_range(0..brackets.len())];
        let sb = airy::refine_root(f, pick)?;
        let norm = matel::integral_same(f, f, sa, sb)?.sqrt();
        let f = AiryCombination::new(p.bi / norm, -p.ai / norm)?;
        return Ok((f, sa, sb));
    }
}

/// Random combination with unit coefficient vector.
fn random_combination(rng: &mut impl Rng) -> Result<AiryCombination> {
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    AiryCombination::new(angle.cos(), angle.sin())
}

fn random_shift(rng: &mut impl Rng, i: usize) -> f64 {
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let mag = if i.is_multiple_of(3) {
        rng.gen_range(1e-4..LAMBDA_SERIES)
    } else {
        rng.gen_range(LAMBDA_SERIES..3.0)
    };
    sign * mag
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Relative error, or the absolute error mapped onto the same budget
/// (1e-12 absolute counts as 1e-8) when the reference is below 1e-4.
fn normalised_error(value: f64, reference: f64) -> f64 {
    if reference.abs() < 1e-4 {
        (value - reference).abs() * 1e4
    } else {
        relative(value, reference)
    }
}

fn identities(opts: &ValidationOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    const INSTANCES: usize = 60;
    let mut worst = 0.0f64;
    let mut worst_label = String::new();
    let mut checks = 0usize;
    let mut record = |label: String, closed: f64, quad: f64| {
        let r = normalised_error(closed, quad);
        checks += 1;
        if r > worst {
            worst = r;
            worst_label = label;
        }
    };
    for i in 0..INSTANCES {
        let (f, sa, sb) = eigen_style_instance(&mut rng)?;
        let g = random_combination(&mut rng)?;
        let lambda = random_shift(&mut rng, i);
        record(
            format!("same-argument overlap #{i}"),
            matel::integral_same(f, g, sa, sb)?,
            matel::quadrature_integral(Integrand::Overlap, f, g, sa, sb, 0.0)?,
        );
        record(
            format!("shifted overlap #{i}, lambda = {lambda:.3e}"),
            matel::integral_shifted(f, g, sa, sb, lambda)?,
            matel::quadrature_integral(Integrand::Overlap, f, g, sa, sb, lambda)?,
        );
        for kind in OperatorKind::ALL {
            record(
                format!("diagonal {kind:?} #{i}"),
                matel::integral_diag_op(kind, f, f, sa, sb)?,
                matel::quadrature_integral(Integrand::Operator(kind), f, f, sa, sb, 0.0)?,
            );
            record(
                format!("shifted {kind:?} #{i}, lambda = {lambda:.3e}"),
                matel::integral_shifted_op(kind, f, g, sa, sb, lambda)?,
                matel::quadrature_integral(Integrand::Operator(kind), f, g, sa, sb, lambda)?,
            );
        }
    }
    Ok((
        worst < 1e-8,
        format!(
            "{checks} identities on {INSTANCES} instances, max rel err {worst:.2e} ({worst_label})"
        ),
    ))
}

fn matrix_elements(opts: &ValidationOptions) -> Outcome {
    let sc = &opts.scales;
    let mut worst = 0.0f64;
    let mut worst_label = String::new();
    let mut diag_ok = true;
    for geometry in [
        MirrorGeometry::OneMirror,
        MirrorGeometry::two_mirror(TABLE2_SEPARATION_M)?,
    ] {
        let states = solve_spectrum(geometry, 6, sc)?;
        for kind in OperatorKind::ALL {
            for m in &states {
                for k in &states {
                    let closed = matel::reduced_matrix_element(kind, m, k)?;
                    let quad = matel::reduced_quadrature_element(kind, m, k)?;
                    let err = normalised_error(closed, quad);
                    if err > worst {
                        worst = err;
                        worst_label = format!("{kind:?} <{}|{}> {geometry:?}", m.n(), k.n());
                    }
                    if m.n() == k.n() {
                        match kind {
                            OperatorKind::Derivative => diag_ok &= closed == 0.0,
                            OperatorKind::PositionDerivative => diag_ok &= closed == -0.5,
                            OperatorKind::Position => {}
                        }
                    }
                }
            }
        }
    }
    Ok((
        worst < 1e-8 && diag_ok,
        format!(
            "216 elements, worst normalised deviation {worst:.2e} ({worst_label}); exact diagonals {}",
            if diag_ok { "hold" } else { "violated" }
        ),
    ))
}

fn continuity(opts: &ValidationOptions) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let integrands = [
        Integrand::Overlap,
        Integrand::Operator(OperatorKind::Position),
        Integrand::Operator(OperatorKind::Derivative),
        Integrand::Operator(OperatorKind::PositionDerivative),
    ];
    let mut worst = 0.0f64;
    let mut worst_rel = 0.0f64;
    for _ in 0..25 {
        let (f, sa, sb) = eigen_style_instance(&mut rng)?;
        let g = random_combination(&mut rng)?;
        for integrand in integrands {
            for lambda in [LAMBDA_SERIES, -LAMBDA_SERIES] {
                let eval =
                    |l: f64, b: Branch| matel::integral_shifted_with(integrand, f, g, sa, sb, l, b);
                let closed = eval(lambda, Branch::Closed)?;
                let series = eval(lambda, Branch::Series)?;
                let below = eval(lambda * (1.0 - 1e-12), Branch::Auto)?;
                let above = eval(lambda * (1.0 + 1e-12), Branch::Auto)?;
                let gap = (closed - series).abs().max((below - above).abs());
                worst = worst.max(gap);
                worst_rel = worst_rel.max(gap / series.abs().max(f64::MIN_POSITIVE));
            }
        }
    }
    Ok((
        worst < 1e-8,
        format!(
            "max disagreement {worst:.2e} on unit-normalised instances (relative {worst_rel:.2e}), 25 instances"
        ),
    ))
}

/// Two-mirror basis at L = 28 um.
fn basis(scales: &PhysicalScales, n: usize) -> Result<(Vec<EigenState>, OperatorTables)> {
    let states = solve_spectrum(MirrorGeometry::two_mirror(TABLE2_SEPARATION_M)?, n, scales)?;
    let tables = matel::build_tables(&states, scales)?;
    Ok((states, tables))
}

fn ground(n: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    v[0] = Complex64::new(1.0, 0.0);
    v
}

fn bohr(states: &[EigenState], scales: &PhysicalScales, m: usize, k: usize) -> f64 {
    scales.restore_frequency(states[k].reduced_energy() - states[m].reduced_energy())
}

fn random_drive(rng: &mut impl Rng, scales: &PhysicalScales, model: Model) -> DriveConfig {
    let l = TABLE2_SEPARATION_M;
    DriveConfig {
        lower_amplitude: rng.gen_range(0.0..0.15) * l,
        lower_omega: scales.restore_frequency(rng.gen_range(0.2..6.0)),
        upper_amplitude: rng.gen_range(0.0..0.15) * l,
        upper_omega: scales.restore_frequency(rng.gen_range(0.2..6.0)),
        phase: rng.gen_range(0.0..std::f64::consts::TAU),
        separation: l,
        model,
        validity_limit: dynamics::DEFAULT_VALIDITY_LIMIT,
    }
}

fn hermiticity_and_norm(opts: &ValidationOptions) -> Outcome {
    let sc = &opts.scales;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xbeef);
    let (states, tables) = basis(sc, 6)?;
    let mut worst = 0.0f64;
    for i in 0..10 {
        let model = if i % 2 == 0 {
            Model::Perturbative
        } else {
            Model::Exact
        };
        let cfg = random_drive(&mut rng, sc, model);
        for _ in 0..100 {
            let t = sc.restore_time(rng.gen_range(0.0..200.0));
            let m = dynamics::coupling_matrix(t, &cfg, &tables, &states, sc)?;
            let scale = m.iter().fold(0.0f64, |s, v| s.max(v.norm()));
            for a in 0..6 {
                for b in 0..6 {
                    worst = worst
                        .max((m[[a, b]] - m[[b, a]].conj()).norm() / scale.max(f64::MIN_POSITIVE));
                }
            }
        }
    }
    let mut drift = 0.0f64;
    for model in [Model::Perturbative, Model::Exact] {
        let cfg = DriveConfig {
            lower_amplitude: 0.5 * MICROMETRE_M,
            lower_omega: 0.9 * bohr(&states, sc, 0, 1),
            upper_amplitude: 0.4 * MICROMETRE_M,
            upper_omega: 1.3 * bohr(&states, sc, 0, 1),
            phase: 0.7,
            separation: TABLE2_SEPARATION_M,
            model,
            validity_limit: dynamics::DEFAULT_VALIDITY_LIMIT,
        };
        let span = 50.0 * cfg.drive_period().unwrap_or(1.0);
        let tr = dynamics::evolve(
            &ground(6),
            (0.0, span),
            &cfg,
            &tables,
            &states,
            sc,
            &EvolveOptions {
                tol: 1e-9,
                samples: 11,
                ..Default::default()
            },
        )?;
        drift = drift.max(tr.max_norm_drift);
    }
    Ok((
        worst < 1e-12 && drift < 1e-7,
        format!(
            "hermiticity defect {worst:.2e} (1000 samples), norm drift {drift:.2e} over 50 periods"
        ),
    ))
}

fn single_mirror(opts: &ValidationOptions) -> Outcome {
    let sc = &opts.scales;
    let (states, tables) = basis(sc, 6)?;
    let a = 0.5 * MICROMETRE_M;
    let w = 0.8 * bohr(&states, sc, 0, 1);
    let cfg = DriveConfig {
        lower_amplitude: a,
        lower_omega: w,
        upper_amplitude: a,
        upper_omega: w,
        phase: 0.0,
        separation: TABLE2_SEPARATION_M,
        model: Model::Perturbative,
        validity_limit: dynamics::DEFAULT_VALIDITY_LIMIT,
    };
    // single-mirror coefficients in reduced units: (a/z0) w cos(w tau), (a/z0) sin(w tau)
    let a_z0 = sc.reduce_length(a);
    let w_red = sc.reduce_frequency(w);
    let mut coeff = 0.0f64;
    for i in 0..200 {
        let tau = 0.37 * i as f64 / w_red;
        let p = dynamics::reduced_coefficients(sc.restore_time(tau), &cfg, sc)?;
        let tau = sc.reduce_time(sc.restore_time(tau));
        let (s, c) = (w_red * tau).sin_cos();
        coeff = coeff
            .max(p.c_z.abs())
            .max(p.c_zd.abs() / w_red)
            .max((p.c_d - a_z0 * w_red * c).abs() / (a_z0 * w_red))
            .max((p.v_r - a_z0 * s).abs() / a_z0);
    }
    let tol = 1e-9;
    let eo = EvolveOptions {
        tol,
        samples: 101,
        ..Default::default()
    };
    let span = (0.0, 10.0 * std::f64::consts::TAU / w);
    let two = dynamics::evolve(&ground(6), span, &cfg, &tables, &states, sc, &eo)?;
    let one = dynamics::evolve_single_mirror(&ground(6), span, a, w, &tables, &states, sc, &eo)?;
    let traj = two
        .amplitudes
        .iter()
        .zip(one.amplitudes.iter())
        .fold(0.0f64, |s, (x, y)| s.max((x - y).norm()));
    Ok((
        coeff < 1e-14 && traj < 10.0 * tol,
        format!("coefficient mismatch {coeff:.2e}, trajectory mismatch {traj:.2e}"),
    ))
}

/// First local maximum of a sampled curve, refined by a parabola through
/// the neighbouring samples.
fn first_peak(times: &[f64], values: &[f64]) -> Option<(f64, f64)> {
    for i in 1..values.len() - 1 {
        if values[i] >= values[i - 1] && values[i] > values[i + 1] {
            let (y0, y1, y2) = (values[i - 1], values[i], values[i + 1]);
            let h = times[i + 1] - times[i];
            let denom = y0 - 2.0 * y1 + y2;
            let shift = if denom != 0.0 {
                0.5 * (y0 - y2) / denom
            } else {
                0.0
            };
            return Some((times[i] + shift * h, y1));
        }
    }
    None
}

fn rabi(opts: &ValidationOptions) -> Outcome {
    let start = Instant::now();
    let sc = &opts.scales;
    let (states, tables) = basis(sc, 6)?;
    let a = 0.3 * MICROMETRE_M;
    let oracle = dynamics::rabi_prediction(a, TABLE2_SEPARATION_M, &tables, &states, sc, 0, 1)?;
    let mut cfg = DriveConfig::at_rest(TABLE2_SEPARATION_M);
    cfg.lower_amplitude = a;
    cfg.lower_omega = oracle.bohr_frequency;
    let span = 1.5 * oracle.peak_time;
    let tr = dynamics::evolve(
        &ground(6),
        (0.0, span),
        &cfg,
        &tables,
        &states,
        sc,
        &EvolveOptions {
            samples: 3001,
            ..Default::default()
        },
    )?;
    let pops = tr.populations();
    let p2: Vec<f64> = pops.column(1).to_vec();
    let leak = pops
        .rows()
        .into_iter()
        .map(|r| r.iter().skip(2).sum::<f64>())
        .fold(0.0f64, f64::max);
    let Some((t_peak, p_peak)) = first_peak(&tr.times, &p2) else {
        return Ok((false, "no population maximum found".into()));
    };
    let dev = (t_peak - oracle.peak_time).abs() / oracle.peak_time;
    let elapsed = start.elapsed().as_secs_f64();
    Ok((
        dev < 0.05 && leak < 0.02 && elapsed < 60.0,
        format!(
            "peak {:.4} ms vs oracle {:.4} ms ({:.2}%), peak population {p_peak:.4}, leakage {:.2}%",
            1e3 * t_peak,
            1e3 * oracle.peak_time,
            100.0 * dev,
            100.0 * leak
        ),
    ))
}

fn resonance(opts: &ValidationOptions) -> Outcome {
    let sc = &opts.scales;
    let (states, tables) = basis(sc, 6)?;
    let target = (TABLE2_PEV[1] - TABLE2_PEV[0]) * crate::units::PEV_J / sc.hbar();
    let a = 0.3 * MICROMETRE_M;
    let oracle = dynamics::rabi_prediction(a, TABLE2_SEPARATION_M, &tables, &states, sc, 0, 1)?;
    let step = 0.005 * target;
    let grid: Vec<f64> = (-16..=16).map(|i| target + i as f64 * step).collect();
    let mut cfg = DriveConfig::at_rest(TABLE2_SEPARATION_M);
    cfg.lower_amplitude = a;
    cfg.lower_omega = target;
    let scan = dynamics::frequency_scan(
        &cfg,
        &grid,
        oracle.peak_time,
        Observable::Survival,
        ScanTarget::Lower,
        &tables,
        &states,
        sc,
        dynamics::DEFAULT_TOLERANCE,
    )?;
    let (w_dip, p_dip) = scan
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |best, p| {
            if p.1 < best.1 {
                p
            } else {
                best
            }
        });
    let off = (w_dip - target).abs() / step;
    Ok((
        off <= 1.0,
        format!(
            "dip at {:.6} Hz (survival {p_dip:.3}), Bohr frequency {:.6} Hz, {off:.2} grid steps apart",
            w_dip / std::f64::consts::TAU,
            target / std::f64::consts::TAU
        ),
    ))
}

fn model_consistency(opts: &ValidationOptions) -> Outcome {
    let sc = &opts.scales;
    let (states, tables) = basis(sc, 6)?;
    let w12 = bohr(&states, sc, 0, 1);
    let mut cfg = DriveConfig {
        lower_amplitude: 0.01 * TABLE2_SEPARATION_M,
        lower_omega: w12,
        upper_amplitude: 0.008 * TABLE2_SEPARATION_M,
        upper_omega: 1.4 * w12,
        phase: 0.3,
        separation: TABLE2_SEPARATION_M,
        model: Model::Perturbative,
        validity_limit: dynamics::DEFAULT_VALIDITY_LIMIT,
    };
    let span = (0.0, 10.0 * cfg.drive_period().unwrap_or(1.0));
    let eo = EvolveOptions {
        samples: 401,
        ..Default::default()
    };
    let pert = dynamics::evolve(&ground(6), span, &cfg, &tables, &states, sc, &eo)?;
    cfg.model = Model::Exact;
    let exact = dynamics::evolve(&ground(6), span, &cfg, &tables, &states, sc, &eo)?;
    let diff = pert
        .populations()
        .iter()
        .zip(exact.populations().iter())
        .fold(0.0f64, |s, (x, y)| s.max((x - y).abs()));
    let moved = 1.0 - pert.final_populations()[0];
    Ok((
        diff < 1e-3,
        format!("max population difference {diff:.2e} over 10 periods (transferred {moved:.3})"),
    ))
}
