//! Physical constants and the natural scales of a particle bouncing in a
//! uniform gravitational field.
//!
//! Everything outside this module works in reduced units: lengths in `z0`,
//! energies in `E0` and times in `t0 = hbar / E0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CODATA 2018 neutron mass.
pub const NEUTRON_MASS_KG: f64 = 1.674_927_498_04e-27;
/// Standard gravity.
pub const STANDARD_GRAVITY_M_S2: f64 = 9.806_65;
/// Reduced Planck constant (exact since the 2019 SI redefinition).
pub const HBAR_JS: f64 = 1.054_571_817e-34;
pub const ELECTRON_VOLT_J: f64 = 1.602_176_634e-19;
/// One pico-electronvolt in joules.
pub const PEV_J: f64 = 1e-12 * ELECTRON_VOLT_J;
pub const MICROMETRE_M: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalScales {
    mass: f64,
    g: f64,
    hbar: f64,
    z0: f64,
    e0: f64,
    t0: f64,
}

/// Builds the scales for a particle of `mass` (kg) in a field `g` (m/s²).
pub fn derive_scales(mass: f64, g: f64, hbar: f64) -> Result<PhysicalScales> {
    for (name, value) in [("mass", mass), ("g", g), ("hbar", hbar)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::domain(format!(
                "{name} must be strictly positive and finite, got {value}"
            )));
        }
    }
    let z0 = (hbar * hbar / (2.0 * mass * mass * g)).cbrt();
    let e0 = (hbar * hbar * mass * g * g / 2.0).cbrt();
    Ok(PhysicalScales {
        mass,
        g,
        hbar,
        z0,
        e0,
        t0: hbar / e0,
    })
}

impl PhysicalScales {
    pub fn new(mass: f64, g: f64, hbar: f64) -> Result<Self> {
        derive_scales(mass, g, hbar)
    }

    /// Neutron in standard gravity.
    pub fn neutron() -> Self {
        derive_scales(NEUTRON_MASS_KG, STANDARD_GRAVITY_M_S2, HBAR_JS)
            .expect("built-in constants are positive")
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Characteristic length `z0` in metres.
    pub fn length(&self) -> f64 {
        self.z0
    }

    /// Characteristic energy `E0` in joules.
    pub fn energy(&self) -> f64 {
        self.e0
    }

    /// Characteristic time `hbar / E0` in seconds.
    pub fn time(&self) -> f64 {
        self.t0
    }

    pub fn energy_pev(&self) -> f64 {
        self.e0 / PEV_J
    }

    /// Metres to reduced length.
    pub fn reduce_length(&self, z: f64) -> f64 {
        z / self.z0
    }

    pub fn restore_length(&self, x: f64) -> f64 {
        x * self.z0
    }

    /// Joules to reduced energy.
    pub fn reduce_energy(&self, e: f64) -> f64 {
        e / self.e0
    }

    pub fn restore_energy(&self, eps: f64) -> f64 {
        eps * self.e0
    }

    pub fn reduce_time(&self, t: f64) -> f64 {
        t / self.t0
    }

    pub fn restore_time(&self, tau: f64) -> f64 {
        tau * self.t0
    }

    /// Angular frequency in rad/s to reduced units.
    pub fn reduce_frequency(&self, omega: f64) -> f64 {
        omega * self.t0
    }

    pub fn restore_frequency(&self, omega: f64) -> f64 {
        omega / self.t0
    }

    /// Airy argument `(z - z_n) / z0` for height `z` and turning point `z_n`.
    pub fn airy_argument(&self, z: f64, turning_point: f64) -> f64 {
        (z - turning_point) / self.z0
    }

    pub fn height_from_airy_argument(&self, sigma: f64, turning_point: f64) -> f64 {
        turning_point + sigma * self.z0
    }

    /// Stable textual fingerprint of the three input constants, used in cache keys.
    pub fn fingerprint(&self) -> String {
        format!(
            "{:016x}{:016x}{:016x}",
            self.mass.to_bits(),
            self.g.to_bits(),
            self.hbar.to_bits()
        )
    }
}

impl Default for PhysicalScales {
    fn default() -> Self {
        Self::neutron()
    }
}
