//! TOML scenario files.
//!
//! Keys carry their unit (`period_nm`, `power_W`, ...); everything is
//! converted to SI when the scenario is resolved. Paths inside a scenario
//! are relative to the file that names them.

// field names mirror the unit-suffixed keys
#![allow(non_snake_case)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::montecarlo::ScanProtocol;
use crate::physics::{
    self, GratingLaser, InterferometerConfig, Molecule, PhaseOverride, RecoilLaser, SecondGrating,
    SpectrumTable, VelocityModel,
};
use crate::units::{angstrom2_to_m2, angstrom3_to_m3, amu_to_kg, cm, nm, um, BOLTZMANN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoleculeSection {
    pub name: String,
    pub mass_amu: f64,
    #[serde(default)]
    pub polarizability_A3: f64,
    pub sigma_abs_A2: f64,
    #[serde(default)]
    pub sigma_abs_grating_A2: f64,
    #[serde(default)]
    pub p_fluo: f64,
    /// CSV of (wavelength_nm, weight).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluorescence_spectrum: Option<PathBuf>,
    /// Heat capacity in units of k_B.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heat_capacity_kB: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SecondGratingSection {
    Material {
        open_fraction: f64,
    },
    Laser {
        power_W: f64,
        wavelength_nm: f64,
        waist_y_um: f64,
        /// Eikonal phase at `phase_reference_m_per_s`, replacing the
        /// value derived from the laser parameters.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phase_rad: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phase_reference_m_per_s: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferometerSection {
    pub period_nm: f64,
    pub open_fraction_g1: f64,
    pub open_fraction_g3: f64,
    pub separation_cm: f64,
    pub second_grating: SecondGratingSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoilLaserSection {
    /// Power of single-shot commands; scans ramp up to `protocol.max_power_W`.
    #[serde(default)]
    pub power_W: f64,
    pub wavelength_nm: f64,
    pub waist_y_um: f64,
    pub distance_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySection {
    pub mean_m_per_s: f64,
    #[serde(default)]
    pub relative_width: f64,
    #[serde(default = "default_nodes")]
    pub node_count: usize,
    #[serde(default = "default_truncation")]
    pub truncation_widths: f64,
}

fn default_nodes() -> usize {
    VelocityModel::DEFAULT_NODES
}

fn default_truncation() -> f64 {
    VelocityModel::DEFAULT_TRUNCATION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    #[serde(default = "default_steps")]
    pub power_steps: usize,
    #[serde(default = "default_max_power")]
    pub max_power_W: f64,
    #[serde(default = "default_positions")]
    pub positions_per_scan: usize,
    #[serde(default = "default_span")]
    pub scan_span_periods: f64,
    #[serde(default = "default_molecules")]
    pub molecules_per_sample: u64,
}

fn default_steps() -> usize {
    20
}
fn default_max_power() -> f64 {
    1.0
}
fn default_positions() -> usize {
    100
}
fn default_span() -> f64 {
    5.0
}
fn default_molecules() -> u64 {
    10_000
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            power_steps: default_steps(),
            max_power_W: default_max_power(),
            positions_per_scan: default_positions(),
            scan_span_periods: default_span(),
            molecules_per_sample: default_molecules(),
        }
    }
}

impl ProtocolSection {
    pub fn to_protocol(&self, seed: u64) -> ScanProtocol {
        ScanProtocol {
            power_steps: ScanProtocol::ramp(self.max_power_W, self.power_steps),
            positions_per_scan: self.positions_per_scan,
            scan_span: self.scan_span_periods,
            molecules_per_sample: self.molecules_per_sample,
            seed,
        }
    }
}

/// The file as written by the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub molecule: MoleculeSection,
    pub interferometer: InterferometerSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recoil_laser: Option<RecoilLaserSection>,
    pub velocity: VelocitySection,
    #[serde(default)]
    pub protocol: ProtocolSection,
}

/// A validated scenario in SI units.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub molecule: Molecule,
    pub config: InterferometerConfig,
    pub velocity: VelocityModel,
    /// Non-fatal findings of the validation.
    pub warnings: Vec<String>,
    spectrum_text: Option<String>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text)?;
        Self::resolve(file, base_dir)
    }

    /// Converts and validates. A relative spectrum path is resolved
    /// against `base_dir`.
    pub fn resolve(file: ScenarioFile, base_dir: &Path) -> Result<Self> {
        let spectrum_text = match &file.molecule.fluorescence_spectrum {
            Some(p) => {
                let path = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
                Some(std::fs::read_to_string(&path).map_err(|e| {
                    Error::config(
                        "molecule.fluorescence_spectrum",
                        format!("{}: {e}", path.display()),
                    )
                })?)
            }
            None => None,
        };
        Self::resolve_with_spectrum(file, spectrum_text)
    }

    /// Like [`Scenario::resolve`] with the spectrum CSV supplied directly.
    pub fn resolve_with_spectrum(file: ScenarioFile, spectrum_text: Option<String>) -> Result<Self> {
        let spectrum = match &spectrum_text {
            Some(text) => Some(Arc::new(parse_spectrum(text)?)),
            None => None,
        };
        let m = &file.molecule;
        let molecule = Molecule {
            name: m.name.clone(),
            mass: amu_to_kg(m.mass_amu),
            polarizability_volume: angstrom3_to_m3(m.polarizability_A3),
            sigma_abs: angstrom2_to_m2(m.sigma_abs_A2),
            sigma_abs_grating: angstrom2_to_m2(m.sigma_abs_grating_A2),
            p_fluo: m.p_fluo,
            fluorescence_spectrum: spectrum,
            heat_capacity: m.heat_capacity_kB.unwrap_or(0.0) * BOLTZMANN,
        };
        molecule.validate()?;

        let v = &file.velocity;
        let velocity = VelocityModel {
            mean: v.mean_m_per_s,
            relative_width: v.relative_width,
            node_count: v.node_count,
            truncation: v.truncation_widths,
        };
        velocity.validate()?;

        let i = &file.interferometer;
        let second_grating = match &i.second_grating {
            SecondGratingSection::Material { open_fraction } => SecondGrating::Material {
                open_fraction: *open_fraction,
            },
            SecondGratingSection::Laser {
                power_W,
                wavelength_nm,
                waist_y_um,
                phase_rad,
                phase_reference_m_per_s,
            } => {
                if phase_reference_m_per_s.is_some() && phase_rad.is_none() {
                    return Err(Error::config(
                        "interferometer.second_grating.phase_reference_m_per_s",
                        "only meaningful together with phase_rad",
                    ));
                }
                let phase_override = phase_rad.map(|phase| PhaseOverride {
                    phase,
                    reference_velocity: phase_reference_m_per_s.unwrap_or(velocity.mean),
                });
                if let Some(o) = &phase_override {
                    if !(o.phase >= 0.0 && o.reference_velocity > 0.0) {
                        return Err(Error::config(
                            "interferometer.second_grating.phase_rad",
                            "phase must be non-negative at a positive reference velocity",
                        ));
                    }
                }
                SecondGrating::Laser(GratingLaser {
                    power: *power_W,
                    wavelength: nm(*wavelength_nm),
                    waist_y: um(*waist_y_um),
                    phase_override,
                })
            }
        };
        let recoil_laser = file.recoil_laser.as_ref().map(|r| RecoilLaser {
            power: r.power_W,
            wavelength: nm(r.wavelength_nm),
            waist_y: um(r.waist_y_um),
            distance: cm(r.distance_cm),
        });
        let config = InterferometerConfig {
            period: nm(i.period_nm),
            open_fraction_g1: i.open_fraction_g1,
            open_fraction_g3: i.open_fraction_g3,
            second_grating,
            separation: cm(i.separation_cm),
            recoil_laser,
        };
        config.validate()?;
        if file.protocol.power_steps < 2 {
            return Err(Error::config("protocol.power_steps", "at least 2 steps are needed"));
        }
        if !(file.protocol.max_power_W > 0.0) {
            return Err(Error::config("protocol.max_power_W", "must be positive"));
        }
        file.protocol.to_protocol(0).validate()?;

        let mut scenario = Scenario {
            file,
            molecule,
            config,
            velocity,
            warnings: Vec::new(),
            spectrum_text,
        };
        scenario.check_recoil_regime()?;
        for w in &scenario.warnings {
            log::warn!("{w}");
        }
        Ok(scenario)
    }

    /// Guards of the recoil geometry at the mean velocity.
    fn check_recoil_regime(&mut self) -> Result<()> {
        let Some(laser) = self.config.recoil_laser else {
            return Ok(());
        };
        let v = self.velocity.mean;
        let lambda_db = physics::de_broglie(&self.molecule, v)?;
        let shift = physics::recoil_shift(lambda_db, laser.wavelength, laser.distance);
        if shift > self.config.period * (1.0 + 1e-9) {
            return Err(Error::config(
                "recoil_laser.distance_cm",
                format!(
                    "recoil shift {:.4} d at the mean velocity exceeds one period",
                    shift / self.config.period
                ),
            ));
        }
        if !physics::validate_wavelength_bound(laser.wavelength, lambda_db, self.config.separation, self.config.period) {
            return Err(Error::config(
                "recoil_laser.wavelength_nm",
                format!(
                    "exceeds the bound lambda_dB L / d = {:.1} nm",
                    lambda_db * self.config.separation / self.config.period * 1e9
                ),
            ));
        }
        let p_max = self.file.protocol.max_power_W.max(laser.power);
        let n0 = physics::mean_photon_number(&self.molecule, &laser.with_power(p_max), v)?;
        if n0 > 1.0 {
            self.warnings.push(format!(
                "n0 = {n0:.3} > 1 at {p_max} W: multi-photon absorption is significant"
            ));
        }
        Ok(())
    }

    pub fn recoil_laser(&self) -> Result<RecoilLaser> {
        self.config
            .recoil_laser
            .ok_or_else(|| Error::config("recoil_laser", "section required for this command"))
    }

    pub fn protocol(&self, seed: u64) -> ScanProtocol {
        self.file.protocol.to_protocol(seed)
    }

    pub fn spectrum(&self) -> Option<&SpectrumTable> {
        self.molecule.fluorescence_spectrum.as_deref()
    }

    pub fn spectrum_text(&self) -> Option<&str> {
        self.spectrum_text.as_deref()
    }

    /// SHA-256 over the canonical JSON of the file and the spectrum text.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.file).expect("scenario serializes"));
        if let Some(s) = &self.spectrum_text {
            h.update([0u8]);
            h.update(s.as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Recoil-laser distance giving a shift of `fraction` periods at the
    /// mean velocity.
    pub fn distance_for_shift(&self, fraction: f64) -> Result<f64> {
        let laser = self.recoil_laser()?;
        let lambda_db = physics::de_broglie(&self.molecule, self.velocity.mean)?;
        Ok(fraction * self.config.period * laser.wavelength / lambda_db)
    }

    /// Copy with the recoil laser moved to `distance` (m), revalidated.
    pub fn with_recoil_distance(&self, distance: f64) -> Result<Self> {
        let mut file = self.file.clone();
        let section = file
            .recoil_laser
            .as_mut()
            .ok_or_else(|| Error::config("recoil_laser", "section required for this command"))?;
        section.distance_cm = distance * 100.0;
        Self::resolve_with_spectrum(file, self.spectrum_text.clone())
    }

    /// Copy with a different relative velocity width.
    pub fn with_width(&self, width: f64) -> Result<Self> {
        let mut file = self.file.clone();
        file.velocity.relative_width = width;
        Self::resolve_with_spectrum(file, self.spectrum_text.clone())
    }
}

/// Spectrum CSV in wavelength (nm) and relative weight per unit
/// wavelength.
pub fn parse_spectrum(text: &str) -> Result<SpectrumTable> {
    SpectrumTable::parse_csv(text).map_err(|e| match e {
        Error::Format(_) => e,
        other => Error::config("molecule.fluorescence_spectrum", other.to_string()),
    })
}
