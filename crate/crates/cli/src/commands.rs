use std::f64::consts::TAU;
use std::path::Path;

use num_complex::Complex64;
use qbounce::dynamics::{self, EvolveOptions, Observable};
use qbounce::matel::{self, OperatorKind};
use qbounce::spectrum::MirrorGeometry;
use qbounce::validate::{self, ValidationOptions};

use crate::cache;
use crate::config::RunConfig;
use crate::csv::{Cell, Table};
use crate::CliError;

/// Rounds to six significant figures for display.
pub fn six_figures(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = 5 - x.abs().log10().floor() as i32;
    if digits >= 0 {
        format!("{x:.*}", digits as usize)
    } else {
        format!("{:.5e}", x)
    }
}

pub fn spectrum(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let scales = cfg.scales()?;
    let geometry = cfg.mirror_geometry()?;
    let (states, _) = cache::basis(&scales, geometry, cfg.basis_size)?;
    let mut table = Table::new(
        &cfg.hash(),
        ["n", "E_peV", "z_n_um", "fprime_lower", "fprime_upper"]
            .map(String::from)
            .to_vec(),
    );
    println!("{:>3}  {:>12}  {:>12}", "n", "E (peV)", "z_n (um)");
    for s in &states {
        let z_um = s.turning_point() * 1e6;
        table.push(vec![
            s.n().into(),
            s.energy_pev().into(),
            z_um.into(),
            s.fprime_lower().into(),
            s.fprime_upper().into(),
        ]);
        println!(
            "{:>3}  {:>12}  {:>12}",
            s.n(),
            six_figures(s.energy_pev()),
            six_figures(z_um)
        );
    }
    let path = out.join("spectrum.csv");
    table.write(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn matelem(cfg: &RunConfig, out: &Path, oracle: bool) -> Result<(), CliError> {
    let scales = cfg.scales()?;
    let geometry = cfg.mirror_geometry()?;
    let (states, tables) = cache::basis(&scales, geometry, cfg.basis_size)?;
    let mut worst = 0.0f64;
    for (kind, name) in [
        (OperatorKind::Position, "Z"),
        (OperatorKind::Derivative, "D"),
        (OperatorKind::PositionDerivative, "ZD"),
    ] {
        let mut header: Vec<String> = ["m", "k", "value_si", "value_reduced"]
            .map(String::from)
            .to_vec();
        if oracle {
            header.push("quadrature_reduced".into());
            header.push("deviation".into());
        }
        let mut table = Table::new(&cfg.hash(), header);
        let si = tables.si(kind);
        let reduced = tables.reduced(kind);
        for (i, m) in states.iter().enumerate() {
            for (j, k) in states.iter().enumerate() {
                let mut row: Vec<Cell> = vec![
                    (i + 1).into(),
                    (j + 1).into(),
                    si[[i, j]].into(),
                    reduced[[i, j]].into(),
                ];
                if oracle {
                    let q = matel::reduced_quadrature_element(kind, m, k)?;
                    let v = reduced[[i, j]];
                    let dev = if q.abs() < 1e-4 {
                        (v - q).abs()
                    } else {
                        (v - q).abs() / q.abs()
                    };
                    worst = worst.max(dev);
                    row.push(q.into());
                    row.push(dev.into());
                }
                table.push(row);
            }
        }
        let path = out.join(format!("matelem_{name}.csv"));
        table.write(&path)?;
        println!("wrote {}", path.display());
    }
    println!(
        "symmetry defect of the tables: {:.3e}",
        tables.symmetry_defect()
    );
    if oracle {
        println!("max deviation from quadrature: {worst:.3e}");
    }
    Ok(())
}

pub fn evolve(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let scales = cfg.scales()?;
    let geometry = cfg.mirror_geometry()?;
    let n = cfg.basis_size;
    let (states, tables) = cache::basis(&scales, geometry, n)?;
    let block = &cfg.evolve;
    let t_final = block
        .t_final_s
        .ok_or_else(|| CliError::Config("the evolve command needs evolve.t_final_s".into()))?;
    let mut initial = vec![Complex64::new(0.0, 0.0); n];
    initial[block.initial_state - 1] = Complex64::new(1.0, 0.0);
    let opts = EvolveOptions {
        tol: block.tol,
        output_times: block.output_times_s.clone().unwrap_or_default(),
        samples: block.samples,
        include_vr: block.include_vr,
    };
    let drive = cfg.drive_config()?;
    let tr = match geometry {
        MirrorGeometry::TwoMirror { .. } => dynamics::evolve(
            &initial,
            (0.0, t_final),
            &drive,
            &tables,
            &states,
            &scales,
            &opts,
        )?,
        MirrorGeometry::OneMirror => {
            if drive.upper_amplitude != 0.0 {
                return Err(CliError::Config(
                    "one_mirror geometry has no upper mirror; set A_um = 0".into(),
                ));
            }
            if drive.lower_amplitude > 0.0 && drive.lower_omega <= 0.0 {
                return Err(CliError::Config(
                    "a vibrating mirror needs omega_Hz > 0".into(),
                ));
            }
            dynamics::evolve_single_mirror(
                &initial,
                (0.0, t_final),
                drive.lower_amplitude,
                drive.lower_omega,
                &tables,
                &states,
                &scales,
                &opts,
            )?
        }
    };

    let mut header = vec!["t_s".to_string()];
    for k in 1..=n {
        header.push(format!("re_a{k}"));
        header.push(format!("im_a{k}"));
    }
    header.extend((1..=n).map(|k| format!("pop_{k}")));
    header.push("norm".into());
    let mut table = Table::new(&cfg.hash(), header);
    for (row, t) in tr.times.iter().enumerate() {
        let a = tr.amplitudes.row(row);
        let mut cells: Vec<Cell> = vec![(*t).into()];
        for v in a.iter() {
            cells.push(v.re.into());
            cells.push(v.im.into());
        }
        cells.extend(a.iter().map(|v| Cell::from(v.norm_sqr())));
        cells.push(tr.norms[row].into());
        table.push(cells);
    }
    let path = out.join("trajectory.csv");
    table.write(&path)?;

    println!("final populations:");
    for (k, p) in tr.final_populations().iter().enumerate() {
        println!("  state {:>2}: {p:.6}", k + 1);
    }
    println!("max norm drift: {:.3e}", tr.max_norm_drift);
    match tr.max_leakage {
        Some(l) => println!("max population of the top two states: {l:.3e}"),
        None => println!("max population of the top two states: n/a (basis of {n})"),
    }
    println!(
        "steps: {} accepted, {} rejected",
        tr.accepted_steps, tr.rejected_steps
    );

    let pops = tr.populations();
    let start = block.initial_state - 1;
    if let Some((k, (i, p))) = (0..n)
        .filter(|k| *k != start)
        .map(|k| {
            let col = pops.column(k);
            let best =
                col.iter().enumerate().fold(
                    (0usize, 0.0f64),
                    |b, (i, v)| if *v > b.1 { (i, *v) } else { b },
                );
            (k, best)
        })
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
    {
        println!(
            "largest transfer: state {} reaches {p:.4} at t = {:.6e} s",
            k + 1,
            tr.times[i]
        );
        if let (MirrorGeometry::TwoMirror { separation }, true) = (
            geometry,
            drive.upper_amplitude == 0.0 && drive.lower_amplitude > 0.0,
        ) {
            let rabi = dynamics::rabi_prediction(
                drive.lower_amplitude,
                separation,
                &tables,
                &states,
                &scales,
                start,
                k,
            )?;
            let detuning = (drive.lower_omega - rabi.bohr_frequency).abs();
            if detuning < rabi.rabi_frequency {
                println!(
                    "two-level rotating-wave estimate: first maximum at t = {:.6e} s (detuning {:.3e} rad/s)",
                    rabi.peak_time, detuning
                );
            }
        }
    }
    for w in &tr.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn scan(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let scales = cfg.scales()?;
    let geometry = cfg.mirror_geometry()?;
    if geometry.separation().is_none() {
        return Err(CliError::Config(
            "frequency scans need the two_mirror geometry".into(),
        ));
    }
    let (states, tables) = cache::basis(&scales, geometry, cfg.basis_size)?;
    let (grid, block) = cfg.scan_grid()?;
    let observable = RunConfig::scan_observable(block);
    let result = dynamics::frequency_scan(
        &cfg.drive_config()?,
        &grid,
        block.duration_s,
        observable,
        block.target,
        &tables,
        &states,
        &scales,
        block.tol,
    )?;
    let mut table = Table::new(&cfg.hash(), vec!["omega_rad_s".into(), "observable".into()]);
    for (w, v) in &result {
        table.push(vec![(*w).into(), (*v).into()]);
    }
    let path = out.join("scan.csv");
    table.write(&path)?;

    // dips of the survival probability, peaks of a transfer probability
    let signal: Vec<f64> = match observable {
        Observable::Survival => result.iter().map(|p| 1.0 - p.1).collect(),
        Observable::Transfer(_) => result.iter().map(|p| p.1).collect(),
    };
    let kind = match observable {
        Observable::Survival => "dip",
        Observable::Transfer(_) => "peak",
    };
    let fmt = |i: usize| {
        format!(
            "{:.6} Hz ({:.6e} rad/s), observable {:.6}",
            result[i].0 / TAU,
            result[i].0,
            result[i].1
        )
    };
    let best = (0..signal.len()).fold(0, |b, i| if signal[i] > signal[b] { i } else { b });
    if signal[best] > 0.0 {
        println!("strongest {kind} at {}", fmt(best));
        for i in 0..signal.len() {
            let left = if i == 0 {
                f64::NEG_INFINITY
            } else {
                signal[i - 1]
            };
            let right = signal.get(i + 1).copied().unwrap_or(f64::NEG_INFINITY);
            if i != best && signal[i] > left && signal[i] >= right && signal[i] > 0.1 * signal[best]
            {
                println!("local {kind} at {}", fmt(i));
            }
        }
    } else {
        println!("no {kind} found on the grid");
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn validate(cfg: Option<&RunConfig>, out: &Path, quick: bool) -> Result<bool, CliError> {
    let mut opts = ValidationOptions {
        quick,
        ..Default::default()
    };
    if let Some(cfg) = cfg {
        opts.scales = cfg.scales()?;
    }
    let report = validate::run_all(&opts);
    for c in &report.criteria {
        println!("{}", c.line());
    }
    let path = out.join("validation.json");
    let json = serde_json::to_string_pretty(&report).expect("report serialises");
    std::fs::write(&path, json)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(report.all_passed())
}
