//! Physical constants (CODATA 2018, exact where the SI defines them) and
//! conversions between laboratory and SI units.

use std::f64::consts::PI;

/// Planck constant h (J·s), exact.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant ħ = h/2π (J·s).
pub const HBAR: f64 = PLANCK / (2.0 * PI);
/// Speed of light in vacuum (m/s), exact.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Boltzmann constant (J/K), exact.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Vacuum permittivity ε₀ (F/m).
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
/// Atomic mass constant (kg).
pub const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;

const ANGSTROM: f64 = 1e-10;

pub fn amu_to_kg(mass_amu: f64) -> f64 {
    mass_amu * ATOMIC_MASS
}

pub fn kg_to_amu(mass_kg: f64) -> f64 {
    mass_kg / ATOMIC_MASS
}

pub fn angstrom2_to_m2(area: f64) -> f64 {
    area * ANGSTROM * ANGSTROM
}

pub fn m2_to_angstrom2(area: f64) -> f64 {
    area / (ANGSTROM * ANGSTROM)
}

pub fn angstrom3_to_m3(volume: f64) -> f64 {
    volume * ANGSTROM * ANGSTROM * ANGSTROM
}

pub fn m3_to_angstrom3(volume: f64) -> f64 {
    volume / (ANGSTROM * ANGSTROM * ANGSTROM)
}

pub fn nm(value: f64) -> f64 {
    value * 1e-9
}

pub fn um(value: f64) -> f64 {
    value * 1e-6
}

pub fn cm(value: f64) -> f64 {
    value * 1e-2
}
