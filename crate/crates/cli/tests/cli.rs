use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Sandbox {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, config: Option<&Path>, out: &str, args: &[&str]) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_qbounce"));
        cmd.env("QBOUNCE_CACHE_DIR", self.path("cache"));
        if let Some(c) = config {
            cmd.arg("--config").arg(c);
        }
        cmd.arg("--out").arg(self.path(out));
        cmd.args(args);
        cmd.output().unwrap()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Data rows of a CSV file as floats, after the comment and header lines.
fn rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let data = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    (header, data)
}

const ONE: &str = "basis_size = 6\n[geometry]\nkind = \"one_mirror\"\n";
const TWO: &str = "basis_size = 6\n[geometry]\nkind = \"two_mirror\"\nL_um = 28.0\n";

#[test]
fn one_mirror_spectrum_matches_published_levels() {
    let sb = Sandbox::new();
    let cfg = sb.config("one.toml", ONE);
    let o = sb.run(Some(&cfg), "out", &["spectrum"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for e in [
        "1.40672", "2.45951", "3.32144", "4.08321", "4.77958", "5.42846",
    ] {
        assert!(text.contains(e), "{e} missing from\n{text}");
    }
    let (header, data) = rows(&sb.path("out/spectrum.csv"));
    assert_eq!(
        header,
        ["n", "E_peV", "z_n_um", "fprime_lower", "fprime_upper"]
    );
    assert_eq!(data.len(), 6);
    assert!((data[0][1] - 1.40672).abs() < 5e-5);
    assert!(data.iter().all(|r| r[4] == 0.0));
}

#[test]
fn two_mirror_spectrum_prints_six_figures() {
    let sb = Sandbox::new();
    let cfg = sb.config("two.toml", TWO);
    let o = sb.run(Some(&cfg), "out", &["spectrum"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for e in ["1.40789", "2.52995", "7.98139", "10.8436"] {
        assert!(text.contains(e), "{e} missing from\n{text}");
    }
}

#[test]
fn empty_basis_is_a_config_error() {
    let sb = Sandbox::new();
    let cfg = sb.config(
        "bad.toml",
        "basis_size = 0\n[geometry]\nkind = \"one_mirror\"\n",
    );
    assert_eq!(
        sb.run(Some(&cfg), "out", &["spectrum"]).status.code(),
        Some(2)
    );
    let cfg = sb.config("broken.toml", "basis_size = [\n");
    assert_eq!(
        sb.run(Some(&cfg), "out", &["spectrum"]).status.code(),
        Some(2)
    );
    assert_eq!(sb.run(None, "out", &["spectrum"]).status.code(), Some(2));
    let cfg = sb.config(
        "deep.toml",
        "basis_size = 40\n[geometry]\nkind = \"one_mirror\"\n",
    );
    assert_eq!(
        sb.run(Some(&cfg), "out", &["spectrum"]).status.code(),
        Some(2)
    );
}

#[test]
fn outputs_are_bit_stable() {
    let sb = Sandbox::new();
    let cfg = sb.config("two.toml", TWO);
    // first run fills the cache, second reads it
    assert!(sb.run(Some(&cfg), "a", &["matelem"]).status.success());
    assert!(sb.run(Some(&cfg), "b", &["matelem"]).status.success());
    for f in ["matelem_Z.csv", "matelem_D.csv", "matelem_ZD.csv"] {
        let a = std::fs::read(sb.path("a").join(f)).unwrap();
        let b = std::fs::read(sb.path("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    std::fs::remove_dir_all(sb.path("cache")).unwrap();
    assert!(sb.run(Some(&cfg), "c", &["matelem"]).status.success());
    assert_eq!(
        std::fs::read(sb.path("a/matelem_Z.csv")).unwrap(),
        std::fs::read(sb.path("c/matelem_Z.csv")).unwrap()
    );
}

#[test]
fn matrix_element_tables_and_oracle() {
    let sb = Sandbox::new();
    let cfg = sb.config("two.toml", TWO);
    let o = sb.run(Some(&cfg), "out", &["matelem", "--oracle"]);
    assert!(o.status.success());
    let (_, zd) = rows(&sb.path("out/matelem_ZD.csv"));
    let (_, d) = rows(&sb.path("out/matelem_D.csv"));
    for (a, b) in zd.iter().zip(&d) {
        if a[0] == a[1] {
            assert_eq!(a[3], -0.5);
            assert_eq!(b[3], 0.0);
        }
    }
    let worst = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("max deviation from quadrature: "))
        .unwrap()
        .trim()
        .parse::<f64>()
        .unwrap();
    assert!(worst < 1e-8);
}

#[test]
fn zero_drive_keeps_initial_populations() {
    let sb = Sandbox::new();
    let cfg = sb.config(
        "rest.toml",
        &format!("{TWO}[evolve]\nt_final_s = 0.02\ninitial_state = 2\nsamples = 11\n"),
    );
    let o = sb.run(Some(&cfg), "out", &["evolve"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, data) = rows(&sb.path("out/trajectory.csv"));
    assert_eq!(header[0], "t_s");
    assert_eq!(header.last().unwrap(), "norm");
    let last = data.last().unwrap();
    let pop = |k: usize| last[1 + 2 * 6 + k];
    assert!((pop(1) - 1.0).abs() < 1e-12);
    assert!(pop(0).abs() < 1e-12);
}

#[test]
fn resonant_drive_follows_rabi_estimate() {
    let sb = Sandbox::new();
    let cfg = sb.config(
        "rabi.toml",
        &format!(
            "{TWO}[drive]\na_um = 0.3\nomega_Hz = 271.3129\n[evolve]\nt_final_s = 0.09\ntol = 1e-9\nsamples = 1801\n"
        ),
    );
    let o = sb.run(Some(&cfg), "out", &["evolve"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let grab = |prefix: &str, marker: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(prefix)).unwrap();
        let rest = &line[line.find(marker).unwrap() + marker.len()..];
        rest.split_whitespace().next().unwrap().parse().unwrap()
    };
    let simulated = grab("largest transfer", "at t = ");
    let estimate = grab("two-level rotating-wave", "at t = ");
    assert!(
        (simulated - estimate).abs() / estimate < 0.05,
        "{simulated} vs {estimate}"
    );
    let drift = grab("max norm drift", "drift: ");
    assert!(drift < 1e-7);
}

#[test]
fn scan_finds_the_bohr_frequency() {
    let sb = Sandbox::new();
    let bohr_hz =
        (2.52995 - 1.40789) * 1.602176634e-31 / (2.0 * std::f64::consts::PI * 1.054571817e-34);
    let cfg = sb.config(
        "scan.toml",
        &format!(
            "{TWO}[drive]\na_um = 0.3\n[scan]\nomega_min_Hz = 251.0\nomega_max_Hz = 291.0\npoints = 41\nduration_s = 0.0605\n"
        ),
    );
    let o = sb.run(Some(&cfg), "out", &["scan"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o)
        .lines()
        .find(|l| l.starts_with("strongest dip at "))
        .unwrap()
        .to_string();
    let hz: f64 = line["strongest dip at ".len()..]
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    // within one grid step
    assert!((hz - bohr_hz).abs() <= 1.0, "{hz} vs {bohr_hz}");
    let (header, data) = rows(&sb.path("out/scan.csv"));
    assert_eq!(header, ["omega_rad_s", "observable"]);
    assert_eq!(data.len(), 41);
}

#[test]
fn scan_over_two_transitions_shows_two_dips() {
    let sb = Sandbox::new();
    let cfg = sb.config(
        "scan.toml",
        &format!(
            "{TWO}[drive]\na_um = 0.4\n[scan]\nomega_min_Hz = 240.0\nomega_max_Hz = 640.0\npoints = 201\nduration_s = 0.045\n"
        ),
    );
    let o = sb.run(Some(&cfg), "out", &["scan"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let near = |f: f64| {
        text.lines().filter(|l| l.contains(" dip at ")).any(|l| {
            let v: f64 = l
                .split(" dip at ")
                .nth(1)
                .unwrap()
                .split_whitespace()
                .next()
                .unwrap()
                .parse()
                .unwrap();
            (v - f).abs() <= 2.0
        })
    };
    assert!(near(271.3), "{text}");
    assert!(near(588.3), "{text}");
}

#[test]
fn empty_scan_grid_is_a_config_error() {
    let sb = Sandbox::new();
    let cfg = sb.config(
        "scan.toml",
        &format!("{TWO}[scan]\nomega_min_Hz = 250.0\nomega_max_Hz = 290.0\npoints = 0\nduration_s = 0.06\n"),
    );
    assert_eq!(sb.run(Some(&cfg), "out", &["scan"]).status.code(), Some(2));
}

fn statuses(path: &Path) -> Vec<(u64, String)> {
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["criteria"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            (
                c["id"].as_u64().unwrap(),
                c["status"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

#[test]
fn quick_validation_skips_dynamics() {
    let sb = Sandbox::new();
    let o = sb.run(None, "out", &["validate", "--quick"]);
    let report = statuses(&sb.path("out/validation.json"));
    assert_eq!(report.len(), 10);
    for (id, status) in &report {
        match id {
            1 | 3 | 4 | 5 => assert_eq!(status, "pass", "criterion {id}"),
            6..=10 => assert_eq!(status, "skipped", "criterion {id}"),
            _ => {}
        }
    }
    let any_fail = report.iter().any(|(_, s)| s == "fail");
    assert_eq!(o.status.code(), Some(if any_fail { 1 } else { 0 }));
}

#[test]
fn perturbed_gravity_fails_the_one_mirror_check() {
    let sb = Sandbox::new();
    let cfg = sb.config(
        "g.toml",
        &format!("[constants]\nmass_kg = 1.67492749804e-27\ng_m_s2 = {}\nhbar_Js = 1.054571817e-34\n{ONE}", 9.80665 * 1.01)
            .replace("basis_size = 6\n", ""),
    );
    let o = sb.run(Some(&cfg), "out", &["validate", "--quick"]);
    assert_eq!(o.status.code(), Some(1));
    let report = statuses(&sb.path("out/validation.json"));
    assert_eq!(report[0], (1, "fail".to_string()));
}
