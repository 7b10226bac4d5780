//! Recoil-based absolute absorption spectroscopy in near-field matter-wave
//! interferometers.
//!
//! The crate synthesizes Talbot-Lau (TLI) and Kapitza-Dirac-Talbot-Lau
//! (KDTLI) fringe patterns through their Fourier coefficients, applies the
//! photon-recoil and fluorescence channel of a recoil laser, averages over
//! the beam velocity distribution, simulates shot-noise limited fringe
//! scans and recovers the absorption cross section and fluorescence
//! quantum yield from them.
//!
//! All quantities are SI internally. Configuration files use laboratory
//! units (amu, Å², nm, cm, W) and are converted in [`config`].

// `!(x > 0.0)` guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beam;
pub mod config;
pub mod error;
pub mod estimation;
pub mod montecarlo;
pub mod output;
pub mod physics;
pub mod recoil;
pub mod rng;
pub mod talbot;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64;

pub use beam::{BeamAverager, VelocityNode};
pub use config::Scenario;
pub use estimation::{CrossSectionResult, FluorescenceResult, VisibilityEstimate};
pub use montecarlo::{ExperimentRecord, PowerStep, RateTable, ScanProtocol};
pub use physics::{
    GratingLaser, InterferometerConfig, Molecule, RecoilLaser, SecondGrating, SpectrumTable,
    VelocityModel,
};
pub use recoil::RecoilChannel;
pub use talbot::{FringeCoefficients, GratingCoefficients, GratingDescriptor};
