//! Run configuration read from a TOML file. Physical inputs carry their unit
//! in the key name; frequencies are given in Hz and converted to rad/s.

use std::f64::consts::TAU;
use std::path::Path;

use qbounce::dynamics::{
    DriveConfig, Model, Observable, ScanTarget, DEFAULT_TOLERANCE, DEFAULT_VALIDITY_LIMIT,
};
use qbounce::spectrum::MirrorGeometry;
use qbounce::units::{
    PhysicalScales, HBAR_JS, MICROMETRE_M, NEUTRON_MASS_KG, STANDARD_GRAVITY_M_S2,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_basis_size")]
    pub basis_size: usize,
    #[serde(default)]
    pub constants: Constants,
    pub geometry: Geometry,
    #[serde(default)]
    pub drive: Drive,
    #[serde(default)]
    pub evolve: EvolveBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

fn default_basis_size() -> usize {
    6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    pub mass_kg: f64,
    pub g_m_s2: f64,
    #[serde(rename = "hbar_Js")]
    pub hbar_js: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            mass_kg: NEUTRON_MASS_KG,
            g_m_s2: STANDARD_GRAVITY_M_S2,
            hbar_js: HBAR_JS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    OneMirror,
    TwoMirror,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub kind: GeometryKind,
    #[serde(rename = "L_um", default, skip_serializing_if = "Option::is_none")]
    pub l_um: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Drive {
    pub a_um: f64,
    #[serde(rename = "omega_Hz")]
    pub omega_hz: f64,
    #[serde(rename = "A_um")]
    pub upper_a_um: f64,
    #[serde(rename = "Omega_Hz")]
    pub upper_omega_hz: f64,
    pub phi_rad: f64,
    pub model: Model,
    pub max_amplitude_ratio: f64,
}

impl Default for Drive {
    fn default() -> Self {
        Drive {
            a_um: 0.0,
            omega_hz: 0.0,
            upper_a_um: 0.0,
            upper_omega_hz: 0.0,
            phi_rad: 0.0,
            model: Model::Perturbative,
            max_amplitude_ratio: DEFAULT_VALIDITY_LIMIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final_s: Option<f64>,
    pub tol: f64,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_times_s: Option<Vec<f64>>,
    /// 1-based index of the initially occupied state.
    pub initial_state: usize,
    pub include_vr: bool,
}

impl Default for EvolveBlock {
    fn default() -> Self {
        EvolveBlock {
            t_final_s: None,
            tol: DEFAULT_TOLERANCE,
            samples: 201,
            output_times_s: None,
            initial_state: 1,
            include_vr: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScanObservable {
    #[default]
    Survival,
    Transfer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    #[serde(rename = "omega_min_Hz")]
    pub omega_min_hz: f64,
    #[serde(rename = "omega_max_Hz")]
    pub omega_max_hz: f64,
    pub points: usize,
    pub duration_s: f64,
    #[serde(default)]
    pub observable: ScanObservable,
    /// 1-based state whose population is recorded for `transfer`.
    #[serde(default = "default_transfer_state")]
    pub state: usize,
    #[serde(default)]
    pub target: ScanTarget,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_transfer_state() -> usize {
    2
}

fn default_tol() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// The effective configuration, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable in TOML")
    }

    /// SHA-256 of the effective configuration, hex encoded.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_toml().as_bytes()))
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.basis_size == 0 || self.basis_size > qbounce::spectrum::MAX_STATES {
            return bad(format!(
                "basis_size must be between 1 and {}, got {}",
                qbounce::spectrum::MAX_STATES,
                self.basis_size
            ));
        }
        self.scales()?;
        self.mirror_geometry()?;
        if self.geometry.kind == GeometryKind::TwoMirror {
            let mut drive = self.drive_config()?;
            // the scanned frequency is supplied by the grid
            if let Some(s) = &self.scan {
                let f = s.omega_min_hz * TAU;
                match s.target {
                    ScanTarget::Lower if drive.lower_omega == 0.0 => drive.lower_omega = f,
                    ScanTarget::Upper if drive.upper_omega == 0.0 => drive.upper_omega = f,
                    _ => {}
                }
            }
            drive.validate().map_err(CliError::from)?;
        }
        let e = &self.evolve;
        if !(e.tol >= 1e-12 && e.tol <= 1e-4) {
            return bad(format!(
                "evolve.tol must lie in [1e-12, 1e-4], got {}",
                e.tol
            ));
        }
        if e.initial_state == 0 || e.initial_state > self.basis_size {
            return bad(format!(
                "evolve.initial_state {} is outside the basis",
                e.initial_state
            ));
        }
        if let Some(t) = e.t_final_s {
            if !(t.is_finite() && t > 0.0) {
                return bad("evolve.t_final_s must be positive".into());
            }
        }
        if let Some(s) = &self.scan {
            if s.points == 0 {
                return bad("scan grid is empty".into());
            }
            if !(s.omega_min_hz > 0.0 && s.omega_max_hz >= s.omega_min_hz) {
                return bad("scan needs 0 < omega_min_Hz <= omega_max_Hz".into());
            }
            if s.points > 1 && s.omega_max_hz == s.omega_min_hz {
                return bad("scan range is empty but several points were requested".into());
            }
            if !(s.duration_s.is_finite() && s.duration_s > 0.0) {
                return bad("scan.duration_s must be positive".into());
            }
            if s.observable == ScanObservable::Transfer
                && (s.state == 0 || s.state > self.basis_size)
            {
                return bad(format!("scan.state {} is outside the basis", s.state));
            }
        }
        Ok(())
    }

    pub fn scales(&self) -> Result<PhysicalScales, CliError> {
        let c = &self.constants;
        PhysicalScales::new(c.mass_kg, c.g_m_s2, c.hbar_js).map_err(CliError::from)
    }

    pub fn mirror_geometry(&self) -> Result<MirrorGeometry, CliError> {
        match (self.geometry.kind, self.geometry.l_um) {
            (GeometryKind::OneMirror, None) => Ok(MirrorGeometry::OneMirror),
            (GeometryKind::OneMirror, Some(_)) => Err(CliError::Config(
                "L_um is only meaningful for two_mirror geometry".into(),
            )),
            (GeometryKind::TwoMirror, None) => {
                Err(CliError::Config("two_mirror geometry needs L_um".into()))
            }
            (GeometryKind::TwoMirror, Some(l)) => {
                MirrorGeometry::two_mirror(l * MICROMETRE_M).map_err(CliError::from)
            }
        }
    }

    /// Drive in SI units. For a single mirror the separation is irrelevant
    /// and set to 1 m.
    pub fn drive_config(&self) -> Result<DriveConfig, CliError> {
        let d = &self.drive;
        let separation = self.geometry.l_um.map_or(1.0, |l| l * MICROMETRE_M);
        Ok(DriveConfig {
            lower_amplitude: d.a_um * MICROMETRE_M,
            lower_omega: d.omega_hz * TAU,
            upper_amplitude: d.upper_a_um * MICROMETRE_M,
            upper_omega: d.upper_omega_hz * TAU,
            phase: d.phi_rad,
            separation,
            model: d.model,
            validity_limit: d.max_amplitude_ratio,
        })
    }

    /// Scan grid in rad/s.
    pub fn scan_grid(&self) -> Result<(Vec<f64>, &ScanBlock), CliError> {
        let s = self
            .scan
            .as_ref()
            .ok_or_else(|| CliError::Config("the scan command needs a [scan] section".into()))?;
        let grid = if s.points == 1 {
            vec![s.omega_min_hz * TAU]
        } else {
            (0..s.points)
                .map(|i| {
                    let f = s.omega_min_hz
                        + (s.omega_max_hz - s.omega_min_hz) * i as f64 / (s.points - 1) as f64;
                    f * TAU
                })
                .collect()
        };
        Ok((grid, s))
    }

    pub fn scan_observable(s: &ScanBlock) -> Observable {
        match s.observable {
            ScanObservable::Survival => Observable::Survival,
            ScanObservable::Transfer => Observable::Transfer(s.state),
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
