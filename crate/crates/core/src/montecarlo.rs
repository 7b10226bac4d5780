//! Shot-noise limited simulation of the power-ramped fringe scans.
//!
//! Counts are drawn from the velocity-averaged, recoil-transformed detector
//! signal; there is no per-molecule trajectory simulation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beam::BeamAverager;
use crate::error::{Error, Result};
use crate::estimation::{self, CrossSectionResult, VisibilityEstimate};
use crate::physics::{InterferometerConfig, Molecule, RecoilLaser, VelocityModel};
use crate::rng::{cell_rng, derive_seed, sample_poisson};
use crate::talbot::{self, FringeCoefficients};

/// Power ramp and sampling of one simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanProtocol {
    /// W, ascending, starting at 0.
    pub power_steps: Vec<f64>,
    pub positions_per_scan: usize,
    /// Scan length in grating periods.
    pub scan_span: f64,
    pub molecules_per_sample: u64,
    pub seed: u64,
}

impl Default for ScanProtocol {
    fn default() -> Self {
        ScanProtocol {
            power_steps: Self::ramp(1.0, 20),
            positions_per_scan: 100,
            scan_span: 5.0,
            molecules_per_sample: 10_000,
            seed: 0,
        }
    }
}

impl ScanProtocol {
    /// `steps` equally spaced powers from 0 to `max_power`.
    pub fn ramp(max_power: f64, steps: usize) -> Vec<f64> {
        match steps {
            0 => Vec::new(),
            1 => vec![0.0],
            n => (0..n).map(|k| max_power * k as f64 / (n - 1) as f64).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.power_steps.first() != Some(&0.0) {
            return Err(Error::config("protocol.power_steps_W", "the first step must be 0 W"));
        }
        if self.power_steps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config(
                "protocol.power_steps_W",
                "powers must be finite and strictly ascending",
            ));
        }
        if !self.power_steps.iter().all(|p| p.is_finite()) {
            return Err(Error::config("protocol.power_steps_W", "powers must be finite"));
        }
        if self.positions_per_scan < 8 {
            return Err(Error::config("protocol.positions_per_scan", "at least 8 positions are needed"));
        }
        if !(self.scan_span >= 1.0 && self.scan_span.is_finite()) {
            return Err(Error::config("protocol.scan_span_periods", "must cover at least one period"));
        }
        if self.molecules_per_sample == 0 {
            return Err(Error::config("protocol.molecules_per_sample", "must be positive"));
        }
        Ok(())
    }

    /// Equally spaced third-grating positions starting at 0.
    pub fn positions(&self, period: f64) -> Vec<f64> {
        let step = self.scan_span * period / self.positions_per_scan as f64;
        (0..self.positions_per_scan).map(|k| k as f64 * step).collect()
    }
}

/// One scan of the third grating at fixed recoil power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerStep {
    pub power: f64,
    pub positions: Vec<f64>,
    pub counts: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<VisibilityEstimate>,
}

impl PowerStep {
    pub fn counts_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub protocol: ScanProtocol,
    pub period: f64,
    pub mean_velocity: f64,
    pub steps: Vec<PowerStep>,
}

impl ExperimentRecord {
    /// Sine-fits every step and stores the estimates.
    pub fn fit_visibilities(&mut self) -> Result<Vec<VisibilityEstimate>> {
        let period = self.period;
        let fits = self
            .steps
            .par_iter()
            .map(|s| estimation::sine_fit(&s.positions, &s.counts_f64(), period, s.power))
            .collect::<Result<Vec<_>>>()?;
        for (step, fit) in self.steps.iter_mut().zip(&fits) {
            step.fit = Some(*fit);
        }
        Ok(fits)
    }
}

/// Averaged detector signal at the given power, as Fourier coefficients.
fn rate_coefficients(beam: &BeamAverager, power: f64) -> Result<FringeCoefficients> {
    let pattern = beam.at_power(power)?;
    Ok(talbot::signal_coefficients(&pattern, beam.config().open_fraction_g3))
}

/// Transmitted fraction of the incident flux at third-grating position
/// `position`, averaged over velocities, with the recoil laser at `power`.
pub fn expected_rate(
    config: &InterferometerConfig,
    molecule: &Molecule,
    model: &VelocityModel,
    power: f64,
    position: f64,
) -> Result<f64> {
    let beam = BeamAverager::new(config, molecule, model, None)?;
    Ok(rate_coefficients(&beam, power)?.evaluate(position).clamp(0.0, 1.0))
}

/// Expected rates for a whole scan.
pub fn expected_rates(beam: &BeamAverager, power: f64, positions: &[f64]) -> Result<Vec<f64>> {
    Ok(rate_coefficients(beam, power)?
        .evaluate_many(positions)
        .into_iter()
        .map(|r| r.clamp(0.0, 1.0))
        .collect())
}

/// Simulates every power step; the counts depend only on the seed, the
/// cell indices and the configuration.
pub fn run_experiment(
    protocol: &ScanProtocol,
    config: &InterferometerConfig,
    molecule: &Molecule,
    model: &VelocityModel,
) -> Result<ExperimentRecord> {
    protocol.validate()?;
    let beam = BeamAverager::new(config, molecule, model, None)?;
    run_with(protocol, &beam)
}

/// [`run_experiment`] on a prepared averager.
pub fn run_with(protocol: &ScanProtocol, beam: &BeamAverager) -> Result<ExperimentRecord> {
    let table = RateTable::new(protocol, beam)?;
    table.sample(protocol.molecules_per_sample, protocol.seed)
}

/// Expected transmitted fractions for every (power step, position) cell.
/// Building it is the expensive part of a run; sampling is cheap, so
/// replicated runs should share one table.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    protocol: ScanProtocol,
    period: f64,
    mean_velocity: f64,
    positions: Vec<f64>,
    rates: Vec<Vec<f64>>,
}

impl RateTable {
    pub fn new(protocol: &ScanProtocol, beam: &BeamAverager) -> Result<Self> {
        protocol.validate()?;
        let period = beam.config().period;
        let positions = protocol.positions(period);
        let rates = protocol
            .power_steps
            .par_iter()
            .map(|&power| expected_rates(beam, power, &positions))
            .collect::<Result<Vec<_>>>()?;
        Ok(RateTable {
            protocol: protocol.clone(),
            period,
            mean_velocity: beam.model().mean,
            positions,
            rates,
        })
    }

    /// Rates of power step `step`.
    pub fn rates(&self, step: usize) -> &[f64] {
        &self.rates[step]
    }

    /// Poisson counts for `molecules` incident molecules per cell; the
    /// protocol stored in the record carries these two values.
    pub fn sample(&self, molecules: u64, seed: u64) -> Result<ExperimentRecord> {
        if molecules == 0 {
            return Err(Error::config("protocol.molecules_per_sample", "must be positive"));
        }
        let n = molecules as f64;
        let steps = self
            .protocol
            .power_steps
            .par_iter()
            .zip(&self.rates)
            .enumerate()
            .map(|(i, (&power, rates))| PowerStep {
                power,
                positions: self.positions.clone(),
                counts: rates
                    .iter()
                    .enumerate()
                    .map(|(j, rate)| sample_poisson(&mut cell_rng(seed, i as u32, j as u32), n * rate))
                    .collect(),
                fit: None,
            })
            .collect();
        Ok(ExperimentRecord {
            protocol: ScanProtocol {
                molecules_per_sample: molecules,
                seed,
                ..self.protocol.clone()
            },
            period: self.period,
            mean_velocity: self.mean_velocity,
            steps,
        })
    }
}

/// Sine fits plus regression on a simulated record.
pub fn extract(record: &mut ExperimentRecord, laser: &RecoilLaser) -> Result<CrossSectionResult> {
    let fits = record.fit_visibilities()?;
    estimation::extract_cross_section(&fits, laser, record.mean_velocity)
}

/// Simulates and inverts one experiment with the configured recoil laser.
pub fn simulate_and_extract(
    protocol: &ScanProtocol,
    beam: &BeamAverager,
) -> Result<(ExperimentRecord, CrossSectionResult)> {
    let laser = beam
        .config()
        .recoil_laser
        .ok_or_else(|| Error::config("recoil_laser", "a recoil laser is required"))?;
    let mut record = run_with(protocol, beam)?;
    let result = extract(&mut record, &laser)?;
    Ok((record, result))
}

/// One row of the spread sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub width: f64,
    pub seed: u64,
    pub result: CrossSectionResult,
}

/// Recovered σ_abs versus relative velocity spread. Width `k` of the list
/// uses the seed `derive_seed(protocol.seed, k)`, so rows are independent.
pub fn sweep_velocity_spread(
    widths: &[f64],
    protocol: &ScanProtocol,
    config: &InterferometerConfig,
    molecule: &Molecule,
    model: &VelocityModel,
) -> Result<Vec<SweepRow>> {
    protocol.validate()?;
    widths
        .iter()
        .enumerate()
        .map(|(k, &width)| {
            let beam = BeamAverager::new(config, molecule, &model.with_width(width), None)?;
            let seed = derive_seed(protocol.seed, k as u64);
            let p = ScanProtocol {
                seed,
                ..protocol.clone()
            };
            let (_, result) = simulate_and_extract(&p, &beam)?;
            Ok(SweepRow { width, seed, result })
        })
        .collect()
}
