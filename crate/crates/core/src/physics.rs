//! Physical inputs of the experiment and the closed-form scalar relations
//! between them: de Broglie wavelength, Talbot length, absorbed photon
//! numbers, recoil shift, eikonal phase and per-photon heating.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::units::{HBAR, PLANCK, SPEED_OF_LIGHT};

/// A molecule species, SI units throughout.
#[derive(Debug, Clone)]
pub struct Molecule {
    pub name: String,
    /// kg
    pub mass: f64,
    /// Polarizability volume α/(4πε₀) in m³.
    pub polarizability_volume: f64,
    /// Absorption cross section at the recoil-laser wavelength (m²).
    pub sigma_abs: f64,
    /// Absorption cross section at the grating-laser wavelength (m²).
    pub sigma_abs_grating: f64,
    /// Fluorescence quantum yield.
    pub p_fluo: f64,
    pub fluorescence_spectrum: Option<Arc<SpectrumTable>>,
    /// J/K
    pub heat_capacity: f64,
}

impl Molecule {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::config("molecule.mass_amu", "must be positive"));
        }
        if !(self.sigma_abs >= 0.0) {
            return Err(Error::config("molecule.sigma_abs_A2", "must be non-negative"));
        }
        if !(self.sigma_abs_grating >= 0.0) {
            return Err(Error::config(
                "molecule.sigma_abs_grating_A2",
                "must be non-negative",
            ));
        }
        if !(0.0..=1.0).contains(&self.p_fluo) {
            return Err(Error::config("molecule.p_fluo", "must lie in [0, 1]"));
        }
        if self.p_fluo > 0.0 && self.fluorescence_spectrum.is_none() {
            return Err(Error::config(
                "molecule.fluorescence_spectrum",
                "required when p_fluo > 0",
            ));
        }
        if !(self.polarizability_volume >= 0.0) {
            return Err(Error::config(
                "molecule.polarizability_A3",
                "must be non-negative",
            ));
        }
        Ok(())
    }
}

/// The running-wave laser whose absorbed photons kick the molecules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoilLaser {
    /// W
    pub power: f64,
    /// m
    pub wavelength: f64,
    /// Waist perpendicular to the molecular beam (m).
    pub waist_y: f64,
    /// Distance from the laser to the third grating (m).
    pub distance: f64,
}

impl RecoilLaser {
    pub fn with_power(self, power: f64) -> Self {
        RecoilLaser { power, ..self }
    }

    pub fn with_distance(self, distance: f64) -> Self {
        RecoilLaser { distance, ..self }
    }

    pub fn validate(&self, separation: f64) -> Result<()> {
        if !(self.power >= 0.0) {
            return Err(Error::config("recoil_laser.power_W", "must be non-negative"));
        }
        if !(self.wavelength > 0.0) {
            return Err(Error::config("recoil_laser.wavelength_nm", "must be positive"));
        }
        if !(self.waist_y > 0.0) {
            return Err(Error::config("recoil_laser.waist_y_um", "must be positive"));
        }
        if !(self.distance > 0.0 && self.distance < separation) {
            return Err(Error::config(
                "recoil_laser.distance_cm",
                "must satisfy 0 < D < grating separation L",
            ));
        }
        Ok(())
    }
}

/// Eikonal phase fixed directly instead of derived from the laser
/// parameters. It scales as `reference_velocity / v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseOverride {
    pub phase: f64,
    pub reference_velocity: f64,
}

/// Standing-wave laser forming the KDTLI phase grating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GratingLaser {
    pub power: f64,
    /// Optical wavelength; the standing-wave period is half of it.
    pub wavelength: f64,
    pub waist_y: f64,
    pub phase_override: Option<PhaseOverride>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SecondGrating {
    Material { open_fraction: f64 },
    Laser(GratingLaser),
}

/// Symmetric three-grating interferometer with a common period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferometerConfig {
    pub period: f64,
    pub open_fraction_g1: f64,
    pub open_fraction_g3: f64,
    pub second_grating: SecondGrating,
    /// Separation L between consecutive gratings (m).
    pub separation: f64,
    pub recoil_laser: Option<RecoilLaser>,
}

impl InterferometerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0) {
            return Err(Error::config("interferometer.period_nm", "must be positive"));
        }
        if !(self.separation > 0.0) {
            return Err(Error::config(
                "interferometer.separation_cm",
                "must be positive",
            ));
        }
        let open = |f: f64| f > 0.0 && f < 1.0;
        if !open(self.open_fraction_g1) {
            return Err(Error::config(
                "interferometer.open_fraction_g1",
                "must lie in (0, 1)",
            ));
        }
        if !open(self.open_fraction_g3) {
            return Err(Error::config(
                "interferometer.open_fraction_g3",
                "must lie in (0, 1)",
            ));
        }
        match self.second_grating {
            SecondGrating::Material { open_fraction } => {
                if !open(open_fraction) {
                    return Err(Error::config(
                        "interferometer.second_grating.open_fraction",
                        "must lie in (0, 1)",
                    ));
                }
            }
            SecondGrating::Laser(laser) => {
                if !(laser.power >= 0.0) {
                    return Err(Error::config(
                        "interferometer.second_grating.power_W",
                        "must be non-negative",
                    ));
                }
                if !(laser.waist_y > 0.0) {
                    return Err(Error::config(
                        "interferometer.second_grating.waist_y_um",
                        "must be positive",
                    ));
                }
                if ((laser.wavelength - 2.0 * self.period) / (2.0 * self.period)).abs() > 1e-9 {
                    return Err(Error::config(
                        "interferometer.second_grating.wavelength_nm",
                        "standing-wave period must equal the grating period (wavelength = 2 d)",
                    ));
                }
            }
        }
        if let Some(laser) = &self.recoil_laser {
            laser.validate(self.separation)?;
        }
        Ok(())
    }

    pub fn is_kdtli(&self) -> bool {
        matches!(self.second_grating, SecondGrating::Laser(_))
    }

    pub fn with_recoil_power(&self, power: f64) -> Self {
        InterferometerConfig {
            recoil_laser: self.recoil_laser.map(|l| l.with_power(power)),
            ..*self
        }
    }
}

/// Gaussian distribution of longitudinal velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityModel {
    pub mean: f64,
    /// Δv/v̄, the standard deviation relative to the mean.
    pub relative_width: f64,
    pub node_count: usize,
    /// Half-width of the integration interval in standard deviations.
    pub truncation: f64,
}

impl VelocityModel {
    pub const DEFAULT_NODES: usize = 64;
    pub const DEFAULT_TRUNCATION: f64 = 5.0;

    pub fn new(mean: f64, relative_width: f64) -> Self {
        VelocityModel {
            mean,
            relative_width,
            node_count: Self::DEFAULT_NODES,
            truncation: Self::DEFAULT_TRUNCATION,
        }
    }

    pub fn monochromatic(mean: f64) -> Self {
        Self::new(mean, 0.0)
    }

    pub fn with_width(self, relative_width: f64) -> Self {
        VelocityModel {
            relative_width,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean > 0.0) {
            return Err(Error::config("velocity.mean_m_per_s", "must be positive"));
        }
        if !(self.relative_width >= 0.0) {
            return Err(Error::config(
                "velocity.relative_width",
                "must be non-negative",
            ));
        }
        if self.relative_width >= 0.2 {
            return Err(Error::config(
                "velocity.relative_width",
                "must be below 0.2 so the truncated Gaussian stays clear of v <= 0",
            ));
        }
        if self.node_count == 0 {
            return Err(Error::config("velocity.node_count", "must be at least 1"));
        }
        if !(self.truncation > 0.0) {
            return Err(Error::config(
                "velocity.truncation_widths",
                "must be positive",
            ));
        }
        Ok(())
    }
}

/// Normalized fluorescence spectrum F(ω) tabulated on increasing angular
/// frequencies; ∫F dω = 1 under the trapezoidal rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTable {
    omega: Vec<f64>,
    weight: Vec<f64>,
}

impl SpectrumTable {
    const NORMALIZATION_TOLERANCE: f64 = 1e-9;

    /// Builds a table from (angular frequency, weight) pairs that are
    /// already normalized.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::domain("spectrum needs at least two points"));
        }
        let (omega, weight): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        if omega[0] <= 0.0 || omega.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain(
                "spectrum frequencies must be positive and strictly increasing",
            ));
        }
        if weight.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::domain("spectrum weights must be non-negative"));
        }
        let table = SpectrumTable { omega, weight };
        let norm = table.integral();
        if (norm - 1.0).abs() > Self::NORMALIZATION_TOLERANCE {
            return Err(Error::domain(format!(
                "spectrum is not normalized: integral = {norm}"
            )));
        }
        Ok(table)
    }

    /// Builds a table from (angular frequency, relative weight) pairs in any
    /// order, normalizing the weights.
    pub fn normalized(mut points: Vec<(f64, f64)>) -> Result<Self> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let raw = SpectrumTable {
            omega: points.iter().map(|p| p.0).collect(),
            weight: points.iter().map(|p| p.1).collect(),
        };
        let norm = raw.integral();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::domain("spectrum has zero or non-finite total weight"));
        }
        Self::new(points.into_iter().map(|(w, f)| (w, f / norm)).collect())
    }

    /// Converts a spectrum given as weights per unit wavelength on a
    /// wavelength grid (nm) into a normalized density in angular frequency.
    pub fn from_wavelength_nm(points: &[(f64, f64)]) -> Result<Self> {
        if points.iter().any(|p| !(p.0 > 0.0)) {
            return Err(Error::domain("spectrum wavelengths must be positive"));
        }
        let converted = points
            .iter()
            .map(|&(lambda_nm, w)| {
                let lambda = lambda_nm * 1e-9;
                let omega = 2.0 * PI * SPEED_OF_LIGHT / lambda;
                // |dλ/dω| = λ²/(2πc)
                (omega, w * lambda * lambda / (2.0 * PI * SPEED_OF_LIGHT))
            })
            .collect();
        Self::normalized(converted)
    }

    /// Reads a two-column CSV (wavelength_nm, relative_weight). Lines
    /// starting with `#` and a non-numeric header row are skipped.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (Some(a), Some(b)) = (cols.next(), cols.next()) else {
                return Err(Error::Format(format!(
                    "spectrum line {}: expected two columns",
                    lineno + 1
                )));
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => points.push((x, y)),
                _ if points.is_empty() => continue, // header row
                _ => {
                    return Err(Error::Format(format!(
                        "spectrum line {}: non-numeric value",
                        lineno + 1
                    )))
                }
            }
        }
        Self::from_wavelength_nm(&points)
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    /// Trapezoidal ∫ F(ω) g(ω) dω over the table.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.omega
            .windows(2)
            .zip(self.weight.windows(2))
            .map(|(w, f)| 0.5 * (w[1] - w[0]) * (f[0] * g(w[0]) + f[1] * g(w[1])))
            .sum()
    }

    fn integral(&self) -> f64 {
        self.integrate(|_| 1.0)
    }
}

fn require_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive, got {value}")))
    }
}

/// λ_dB = h/(m v).
pub fn de_broglie(molecule: &Molecule, v: f64) -> Result<f64> {
    require_positive("velocity", v)?;
    require_positive("mass", molecule.mass)?;
    Ok(PLANCK / (molecule.mass * v))
}

/// L_T = d²/λ_dB.
pub fn talbot_length(period: f64, lambda_db: f64) -> Result<f64> {
    require_positive("period", period)?;
    require_positive("de Broglie wavelength", lambda_db)?;
    Ok(period * period / lambda_db)
}

/// Mean number of photons absorbed while crossing a Gaussian running-wave
/// beam: n₀ = √(2/π) σ P λ / (h c w_y v).
pub fn mean_photon_number(molecule: &Molecule, laser: &RecoilLaser, v: f64) -> Result<f64> {
    absorbed_photons(molecule.sigma_abs, laser.power, laser.wavelength, laser.waist_y, v)
}

/// n₀ per unit cross section and unit power, √(2/π) λ / (h c w_y v), in
/// 1/(m² W). Inverts photon numbers into cross sections.
pub fn photon_number_coefficient(laser: &RecoilLaser, v: f64) -> Result<f64> {
    absorbed_photons(1.0, 1.0, laser.wavelength, laser.waist_y, v)
}

fn absorbed_photons(sigma: f64, power: f64, wavelength: f64, waist_y: f64, v: f64) -> Result<f64> {
    require_positive("velocity", v)?;
    require_positive("laser waist", waist_y)?;
    require_positive("laser wavelength", wavelength)?;
    if !(power >= 0.0) {
        return Err(Error::domain("laser power must be non-negative"));
    }
    Ok((2.0 / PI).sqrt() * sigma * power * wavelength / (PLANCK * SPEED_OF_LIGHT * waist_y * v))
}

/// Lateral fringe shift per absorbed photon, s = λ_dB D / λ_L.
pub fn recoil_shift(lambda_db: f64, lambda_l: f64, distance: f64) -> f64 {
    lambda_db * distance / lambda_l
}

/// Whether a single recoil shift stays below one period for any laser
/// position inside the interferometer: λ_L ≤ λ_dB L / d (inclusive).
pub fn validate_wavelength_bound(lambda_l: f64, lambda_db: f64, separation: f64, period: f64) -> bool {
    lambda_l <= lambda_db * separation / period
}

/// Peak eikonal phase of the standing-wave grating,
/// φ₀ = √(8/π) · 4π α · P / (ħ c v w_y), unless overridden.
pub fn eikonal_phase(molecule: &Molecule, laser: &GratingLaser, v: f64) -> Result<f64> {
    require_positive("velocity", v)?;
    if let Some(o) = laser.phase_override {
        return Ok(o.phase * o.reference_velocity / v);
    }
    require_positive("grating laser waist", laser.waist_y)?;
    Ok((8.0 / PI).sqrt() * 4.0 * PI * molecule.polarizability_volume * laser.power
        / (HBAR * SPEED_OF_LIGHT * v * laser.waist_y))
}

/// Mean photon number absorbed at a standing-wave antinode: the
/// running-wave result with σ_grating, times 4 for the antinode intensity.
pub fn grating_mean_absorption(molecule: &Molecule, laser: &GratingLaser, v: f64) -> Result<f64> {
    Ok(4.0
        * absorbed_photons(
            molecule.sigma_abs_grating,
            laser.power,
            laser.wavelength,
            laser.waist_y,
            v,
        )?)
}

/// Internal temperature rise per absorbed, non-reemitted photon,
/// ΔT = h c / (λ C).
pub fn photon_heating(molecule: &Molecule, lambda_l: f64) -> Result<f64> {
    require_positive("heat capacity", molecule.heat_capacity)?;
    require_positive("wavelength", lambda_l)?;
    Ok(PLANCK * SPEED_OF_LIGHT / (lambda_l * molecule.heat_capacity))
}
