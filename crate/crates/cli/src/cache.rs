//! On-disk cache of spectra and operator tables, keyed by the physical
//! constants, the geometry and the basis size.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use qbounce::matel::{build_tables, OperatorKind, OperatorTables};
use qbounce::spectrum::{solve_spectrum, EigenState, MirrorGeometry};
use qbounce::units::PhysicalScales;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::CliError;

pub const CACHE_ENV: &str = "QBOUNCE_CACHE_DIR";
const FORMAT_VERSION: u32 = 1;

/// Values are stored as IEEE bit patterns so a cached run is bit-identical
/// to a fresh one.
#[derive(Serialize, Deserialize)]
struct Entry {
    version: u32,
    key: String,
    energies: Vec<u64>,
    z: Vec<u64>,
    d: Vec<u64>,
    zd: Vec<u64>,
}

pub fn cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(CACHE_ENV) {
        return PathBuf::from(dir);
    }
    match std::env::var_os("HOME") {
        Some(home) => Path::new(&home).join(".cache").join("qbounce"),
        None => std::env::temp_dir().join("qbounce-cache"),
    }
}

pub fn cache_key(scales: &PhysicalScales, geometry: MirrorGeometry, n: usize) -> String {
    let geom = match geometry {
        MirrorGeometry::OneMirror => "one".to_string(),
        MirrorGeometry::TwoMirror { separation } => format!("two:{:016x}", separation.to_bits()),
    };
    let text = format!("v{FORMAT_VERSION}|{}|{geom}|{n}", scales.fingerprint());
    hex(&Sha256::digest(text.as_bytes()))
}

fn bits(a: &Array2<f64>) -> Vec<u64> {
    a.iter().map(|v| v.to_bits()).collect()
}

fn unbits(v: &[u64], n: usize) -> Option<Array2<f64>> {
    Array2::from_shape_vec((n, n), v.iter().map(|b| f64::from_bits(*b)).collect()).ok()
}

fn load(
    path: &Path,
    key: &str,
    geometry: MirrorGeometry,
    scales: &PhysicalScales,
    n: usize,
) -> Option<(Vec<EigenState>, OperatorTables)> {
    let text = std::fs::read_to_string(path).ok()?;
    let e: Entry = serde_json::from_str(&text).ok()?;
    if e.version != FORMAT_VERSION || e.key != key || e.energies.len() != n {
        return None;
    }
    let states = e
        .energies
        .iter()
        .enumerate()
        .map(|(i, b)| EigenState::from_reduced_energy(i + 1, f64::from_bits(*b), geometry, *scales))
        .collect::<Result<Vec<_>, _>>()
        .ok()?;
    let tables = OperatorTables::from_reduced(
        geometry,
        *scales,
        unbits(&e.z, n)?,
        unbits(&e.d, n)?,
        unbits(&e.zd, n)?,
    )
    .ok()?;
    Some((states, tables))
}

fn store(dir: &Path, path: &Path, entry: &Entry) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{}.{}.tmp", entry.key, std::process::id()));
    std::fs::write(
        &tmp,
        serde_json::to_vec(entry).map_err(std::io::Error::other)?,
    )?;
    std::fs::rename(&tmp, path)
}

/// Eigenstates and operator tables, from the cache when possible. Cache
/// problems are reported on stderr and never fatal.
pub fn basis(
    scales: &PhysicalScales,
    geometry: MirrorGeometry,
    n: usize,
) -> Result<(Vec<EigenState>, OperatorTables), CliError> {
    let dir = cache_dir();
    let key = cache_key(scales, geometry, n);
    let path = dir.join(format!("{key}.json"));
    if let Some(hit) = load(&path, &key, geometry, scales, n) {
        return Ok(hit);
    }
    let states = solve_spectrum(geometry, n, scales)?;
    let tables = build_tables(&states, scales)?;
    let entry = Entry {
        version: FORMAT_VERSION,
        key,
        energies: states
            .iter()
            .map(|s| s.reduced_energy().to_bits())
            .collect(),
        z: bits(tables.reduced(OperatorKind::Position)),
        d: bits(tables.reduced(OperatorKind::Derivative)),
        zd: bits(tables.reduced(OperatorKind::PositionDerivative)),
    };
    if let Err(e) = store(&dir, &path, &entry) {
        eprintln!(
            "warning: could not write cache entry {}: {e}",
            path.display()
        );
    }
    Ok((states, tables))
}
