use num_complex::Complex64;
use qbounce::dynamics::{self, DriveConfig, EvolveOptions, Model, Observable, ScanTarget};
use qbounce::matel::{build_tables, OperatorTables};
use qbounce::spectrum::{solve_spectrum, EigenState, MirrorGeometry};
use qbounce::units::{PhysicalScales, MICROMETRE_M};
use qbounce::Error;

const L: f64 = 28.0 * MICROMETRE_M;

fn basis(n: usize) -> (PhysicalScales, Vec<EigenState>, OperatorTables) {
    let sc = PhysicalScales::neutron();
    let states = solve_spectrum(MirrorGeometry::two_mirror(L).unwrap(), n, &sc).unwrap();
    let tables = build_tables(&states, &sc).unwrap();
    (sc, states, tables)
}

fn ground(n: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    v[0] = Complex64::new(1.0, 0.0);
    v
}

fn lower_drive(a: f64, omega: f64) -> DriveConfig {
    let mut c = DriveConfig::at_rest(L);
    c.lower_amplitude = a;
    c.lower_omega = omega;
    c
}

fn bohr(sc: &PhysicalScales, s: &[EigenState], m: usize, k: usize) -> f64 {
    sc.restore_frequency(s[k].reduced_energy() - s[m].reduced_energy())
}

#[test]
fn scalar_term_only_changes_phase() {
    let (sc, states, tables) = basis(5);
    let mut cfg = lower_drive(0.4 * MICROMETRE_M, 0.9 * bohr(&sc, &states, 0, 1));
    cfg.upper_amplitude = 0.3 * MICROMETRE_M;
    cfg.upper_omega = 1.2 * cfg.lower_omega;
    cfg.phase = 1.1;
    let span = (0.0, 8.0 * cfg.drive_period().unwrap());
    let with = EvolveOptions {
        samples: 41,
        ..Default::default()
    };
    let without = EvolveOptions {
        include_vr: false,
        ..with.clone()
    };
    let a = dynamics::evolve(&ground(5), span, &cfg, &tables, &states, &sc, &with).unwrap();
    let b = dynamics::evolve(&ground(5), span, &cfg, &tables, &states, &sc, &without).unwrap();
    let diff = a
        .populations()
        .iter()
        .zip(b.populations().iter())
        .fold(0.0f64, |s, (x, y)| s.max((x - y).abs()));
    assert!(diff < 1e-7, "population difference {diff}");
}

#[test]
fn error_shrinks_with_tolerance() {
    let (sc, states, tables) = basis(4);
    let cfg = lower_drive(0.5 * MICROMETRE_M, bohr(&sc, &states, 0, 1));
    let span = (0.0, 5.0 * cfg.drive_period().unwrap());
    let run = |tol: f64| {
        let o = EvolveOptions {
            tol,
            output_times: vec![span.1],
            ..Default::default()
        };
        dynamics::evolve(&ground(4), span, &cfg, &tables, &states, &sc, &o)
            .unwrap()
            .amplitudes
            .row(0)
            .to_vec()
    };
    let reference = run(1e-12);
    let err = |tol: f64| {
        run(tol)
            .iter()
            .zip(&reference)
            .fold(0.0f64, |s, (x, y)| s.max((x - y).norm()))
    };
    let coarse = err(1e-5);
    let fine = err(1e-7);
    assert!(
        fine < coarse / 10.0,
        "tol 1e-5 -> {coarse:e}, tol 1e-7 -> {fine:e}"
    );
    assert!(coarse < 1e-3);
}

#[test]
fn detuned_drive_transfers_little() {
    let (sc, states, tables) = basis(6);
    let a = 0.3 * MICROMETRE_M;
    let oracle = dynamics::rabi_prediction(a, L, &tables, &states, &sc, 0, 1).unwrap();
    let detuned = oracle.bohr_frequency + 10.0 * oracle.rabi_frequency;
    let cfg = lower_drive(a, detuned);
    let o = EvolveOptions {
        samples: 801,
        ..Default::default()
    };
    let tr = dynamics::evolve(
        &ground(6),
        (0.0, 3.0 * oracle.peak_time),
        &cfg,
        &tables,
        &states,
        &sc,
        &o,
    )
    .unwrap();
    let peak = tr
        .populations()
        .column(1)
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    assert!(peak < 0.05, "peak population {peak}");
}

#[test]
fn longer_scans_give_narrower_lines() {
    let (sc, states, tables) = basis(4);
    let a = 0.2 * MICROMETRE_M;
    let w12 = bohr(&sc, &states, 0, 1);
    let oracle = dynamics::rabi_prediction(a, L, &tables, &states, &sc, 0, 1).unwrap();
    let grid: Vec<f64> = (-30..=30).map(|i| w12 * (1.0 + 0.002 * i as f64)).collect();
    let width = |duration: f64| {
        let scan = dynamics::frequency_scan(
            &lower_drive(a, w12),
            &grid,
            duration,
            Observable::Transfer(2),
            ScanTarget::Lower,
            &tables,
            &states,
            &sc,
            1e-8,
        )
        .unwrap();
        let max = scan.iter().map(|p| p.1).fold(0.0, f64::max);
        scan.iter().filter(|p| p.1 > 0.5 * max).count()
    };
    let short = width(0.5 * oracle.peak_time);
    let long = width(1.0 * oracle.peak_time);
    assert!(
        long < short,
        "half-maximum widths {short} vs {long} grid points"
    );
}

#[test]
fn scan_finds_both_transitions_from_the_ground_state() {
    let (sc, states, tables) = basis(5);
    let a = 0.4 * MICROMETRE_M;
    let w12 = bohr(&sc, &states, 0, 1);
    let w13 = bohr(&sc, &states, 0, 2);
    let lo = 0.9 * w12;
    let hi = 1.1 * w13;
    let grid: Vec<f64> = (0..=240)
        .map(|i| lo + (hi - lo) * i as f64 / 240.0)
        .collect();
    let step = grid[1] - grid[0];
    let oracle = dynamics::rabi_prediction(a, L, &tables, &states, &sc, 0, 1).unwrap();
    let scan = dynamics::frequency_scan(
        &lower_drive(a, w12),
        &grid,
        oracle.peak_time,
        Observable::Survival,
        ScanTarget::Lower,
        &tables,
        &states,
        &sc,
        1e-8,
    )
    .unwrap();
    let dip_near = |target: f64| {
        scan.iter()
            .filter(|p| (p.0 - target).abs() < 0.05 * target)
            .cloned()
            .fold((0.0, f64::INFINITY), |b, p| if p.1 < b.1 { p } else { b })
    };
    let (f12, s12) = dip_near(w12);
    let (f13, s13) = dip_near(w13);
    assert!((f12 - w12).abs() <= 2.0 * step && s12 < 0.5);
    assert!((f13 - w13).abs() <= 2.0 * step && s13 < 0.99);
}

#[test]
fn upper_mirror_scan_is_supported() {
    let (sc, states, tables) = basis(4);
    let mut cfg = DriveConfig::at_rest(L);
    cfg.upper_amplitude = 0.3 * MICROMETRE_M;
    cfg.upper_omega = bohr(&sc, &states, 0, 1);
    let grid = [
        0.95 * cfg.upper_omega,
        cfg.upper_omega,
        1.05 * cfg.upper_omega,
    ];
    let scan = dynamics::frequency_scan(
        &cfg,
        &grid,
        2e-2,
        Observable::Survival,
        ScanTarget::Upper,
        &tables,
        &states,
        &sc,
        1e-8,
    )
    .unwrap();
    assert_eq!(scan.len(), 3);
    assert!(scan.iter().all(|p| (0.0..=1.0 + 1e-6).contains(&p.1)));
}

#[test]
fn scan_rejects_unsorted_grid() {
    let (sc, states, tables) = basis(3);
    let cfg = lower_drive(0.3 * MICROMETRE_M, 1e3);
    let r = dynamics::frequency_scan(
        &cfg,
        &[2e3, 1e3],
        1e-3,
        Observable::Survival,
        ScanTarget::Lower,
        &tables,
        &states,
        &sc,
        1e-8,
    );
    assert!(matches!(r, Err(Error::Precondition(_))));
    let r = dynamics::frequency_scan(
        &cfg,
        &[],
        1e-3,
        Observable::Survival,
        ScanTarget::Lower,
        &tables,
        &states,
        &sc,
        1e-8,
    );
    assert!(r.is_err());
}

#[test]
fn exact_and_perturbative_agree_to_first_order_at_start() {
    let sc = PhysicalScales::neutron();
    let mut cfg = lower_drive(0.5 * MICROMETRE_M, 1.5e3);
    cfg.upper_amplitude = 0.7 * MICROMETRE_M;
    cfg.upper_omega = 2.1e3;
    cfg.phase = 0.9;
    let ratio: f64 = 0.7 / 28.0;
    let p = dynamics::potential_coefficients(0.0, &cfg, &sc).unwrap();
    cfg.model = Model::Exact;
    let e = dynamics::potential_coefficients(0.0, &cfg, &sc).unwrap();
    let mg = sc.mass() * sc.g();
    assert!((p.c_z - e.c_z).abs() < 10.0 * ratio * ratio * mg);
    assert!((p.c_zd - e.c_zd).abs() < 10.0 * ratio * ratio * sc.hbar() * 2.1e3);
    assert!((p.c_d - e.c_d).abs() < 10.0 * ratio * ratio * sc.hbar() * 0.5 * MICROMETRE_M * 1.5e3);
}

#[test]
fn leakage_warning_for_small_basis() {
    let (sc, states, tables) = basis(3);
    let cfg = lower_drive(2.0 * MICROMETRE_M, bohr(&sc, &states, 0, 2));
    let o = EvolveOptions {
        samples: 21,
        ..Default::default()
    };
    let tr = dynamics::evolve(&ground(3), (0.0, 0.05), &cfg, &tables, &states, &sc, &o).unwrap();
    assert!(tr.max_leakage.unwrap() > dynamics::LEAKAGE_WARNING);
    assert!(tr.warnings.iter().any(|w| w.contains("top two")));
}
