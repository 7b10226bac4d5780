//! Averaging over the longitudinal velocity distribution of the beam.
//!
//! The unperturbed pattern, the mean photon number and the recoil shift all
//! depend on the velocity, so every quadrature node carries its own pattern
//! and channel. [`BeamAverager`] caches the per-node unperturbed patterns,
//! which is all the Monte Carlo hot path needs to re-evaluate for each
//! recoil power.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::physics::{InterferometerConfig, Molecule, RecoilLaser, VelocityModel};
use crate::recoil::{apply_recoil, RecoilChannel};
use crate::talbot::{self, FringeCoefficients};

/// Gauss-Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, refined by Newton iteration
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature node of the velocity distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityNode {
    pub velocity: f64,
    pub weight: f64,
}

/// Quadrature rule for the truncated Gaussian velocity distribution,
/// weights normalized to one.
pub fn gaussian_weights(model: &VelocityModel) -> Result<Vec<VelocityNode>> {
    model.validate()?;
    if model.relative_width == 0.0 {
        return Ok(vec![VelocityNode {
            velocity: model.mean,
            weight: 1.0,
        }]);
    }
    let sigma = model.relative_width * model.mean;
    let lo = (model.mean - model.truncation * sigma).max(0.0);
    let hi = model.mean + model.truncation * sigma;
    let (x, w) = gauss_legendre(model.node_count);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut nodes: Vec<VelocityNode> = x
        .iter()
        .zip(&w)
        .map(|(&xi, &wi)| {
            let v = mid + half * xi;
            let z = (v - model.mean) / sigma;
            VelocityNode {
                velocity: v,
                weight: wi * (-0.5 * z * z).exp(),
            }
        })
        .filter(|n| n.velocity > 0.0)
        .collect();
    let total = pairwise_sum(&nodes.iter().map(|n| n.weight).collect::<Vec<_>>());
    for n in &mut nodes {
        n.weight /= total;
    }
    Ok(nodes)
}

/// Pairwise summation, order-independent of any parallel evaluation that
/// produced the terms.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

fn pairwise_sum_complex(values: &[Complex64]) -> Complex64 {
    match values.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum_complex(a) + pairwise_sum_complex(b)
        }
    }
}

/// Weighted coefficient-wise average of patterns sharing period and order.
fn average_patterns(patterns: &[FringeCoefficients], weights: &[f64], mean_velocity: f64) -> Result<FringeCoefficients> {
    let first = patterns.first().ok_or_else(|| Error::domain("no quadrature nodes"))?;
    let len = first.coefficients().len();
    let coefficients = (0..len)
        .map(|i| {
            let terms: Vec<Complex64> = patterns
                .iter()
                .zip(weights)
                .map(|(p, w)| p.coefficients()[i] * *w)
                .collect();
            pairwise_sum_complex(&terms)
        })
        .collect();
    let mut avg = FringeCoefficients::new(coefficients, first.period, mean_velocity)?;
    avg.truncated = patterns.iter().any(|p| p.truncated);
    Ok(avg)
}

/// Unperturbed per-node patterns of one configuration, ready to be
/// averaged under any recoil channel.
#[derive(Debug, Clone)]
pub struct BeamAverager {
    config: InterferometerConfig,
    molecule: Molecule,
    model: VelocityModel,
    nodes: Vec<VelocityNode>,
    patterns: Vec<FringeCoefficients>,
}

impl BeamAverager {
    /// Synthesizes the unperturbed pattern at every node. The harmonic
    /// order is chosen adaptively at the mean velocity and shared by all
    /// nodes unless `max_order` fixes it.
    pub fn new(
        config: &InterferometerConfig,
        molecule: &Molecule,
        model: &VelocityModel,
        max_order: Option<usize>,
    ) -> Result<Self> {
        config.validate()?;
        let nodes = gaussian_weights(model)?;
        let order = match max_order {
            Some(order) => order,
            None => talbot::pattern_coefficients(config, molecule, model.mean, None)?.order_max(),
        };
        let patterns = nodes
            .par_iter()
            .map(|n| talbot::pattern_coefficients(config, molecule, n.velocity, Some(order)))
            .collect::<Result<Vec<_>>>()?;
        Ok(BeamAverager {
            config: *config,
            molecule: molecule.clone(),
            model: *model,
            nodes,
            patterns,
        })
    }

    pub fn config(&self) -> &InterferometerConfig {
        &self.config
    }

    pub fn molecule(&self) -> &Molecule {
        &self.molecule
    }

    pub fn model(&self) -> &VelocityModel {
        &self.model
    }

    pub fn nodes(&self) -> &[VelocityNode] {
        &self.nodes
    }

    pub fn node_patterns(&self) -> &[FringeCoefficients] {
        &self.patterns
    }

    pub fn order(&self) -> usize {
        self.patterns[0].order_max()
    }

    /// Averages the per-node patterns after applying the channel returned
    /// by `channel_for(v)`; `None` leaves a node unperturbed.
    pub fn averaged_with<F>(&self, channel_for: F) -> Result<FringeCoefficients>
    where
        F: Fn(f64) -> Result<Option<RecoilChannel>> + Sync,
    {
        let transformed = self
            .nodes
            .par_iter()
            .zip(&self.patterns)
            .map(|(node, pattern)| {
                Ok(match channel_for(node.velocity)? {
                    Some(channel) => apply_recoil(pattern, &channel),
                    None => pattern.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let weights: Vec<f64> = self.nodes.iter().map(|n| n.weight).collect();
        average_patterns(&transformed, &weights, self.model.mean)
    }

    /// Averaged unperturbed pattern.
    pub fn unperturbed(&self) -> Result<FringeCoefficients> {
        self.averaged_with(|_| Ok(None))
    }

    /// Averaged pattern behind `laser`, with the molecule's own
    /// fluorescence channel.
    pub fn with_laser(&self, laser: &RecoilLaser) -> Result<FringeCoefficients> {
        let order = self.order();
        let period = self.config.period;
        self.averaged_with(|v| {
            RecoilChannel::for_velocity(&self.molecule, laser, period, v, order).map(Some)
        })
    }

    /// Averaged pattern with the configured recoil laser at `power`.
    pub fn at_power(&self, power: f64) -> Result<FringeCoefficients> {
        if power == 0.0 {
            return self.unperturbed();
        }
        let laser = self.recoil_laser()?.with_power(power);
        self.with_laser(&laser)
    }

    fn recoil_laser(&self) -> Result<RecoilLaser> {
        self.config
            .recoil_laser
            .ok_or_else(|| Error::config("recoil_laser", "a recoil laser is required"))
    }

    /// ⟨R⟩ = |⟨w₁ e^{…}⟩ / ⟨w₁⟩| at the given recoil power.
    pub fn reduction(&self, power: f64) -> Result<f64> {
        self.reduction_with(&self.recoil_laser()?.with_power(power))
    }

    pub fn reduction_with(&self, laser: &RecoilLaser) -> Result<f64> {
        let base = self.unperturbed()?.coefficient(1);
        if base.norm() <= f64::MIN_POSITIVE {
            return Err(Error::domain("baseline contrast vanishes"));
        }
        let shifted = if laser.power == 0.0 {
            base
        } else {
            self.with_laser(laser)?.coefficient(1)
        };
        Ok((shifted / base).norm())
    }
}

/// Velocity-averaged pattern under a caller-supplied channel.
pub fn averaged_pattern<F>(
    config: &InterferometerConfig,
    molecule: &Molecule,
    model: &VelocityModel,
    channel_builder: F,
) -> Result<FringeCoefficients>
where
    F: Fn(f64) -> Result<Option<RecoilChannel>> + Sync,
{
    BeamAverager::new(config, molecule, model, None)?.averaged_with(channel_builder)
}

/// Velocity-averaged contrast reduction at the given recoil power.
pub fn averaged_reduction(
    config: &InterferometerConfig,
    molecule: &Molecule,
    model: &VelocityModel,
    power: f64,
) -> Result<f64> {
    BeamAverager::new(config, molecule, model, None)?.reduction(power)
}

/// Second-order relative deviation of ⟨R⟩ caused by the velocity spread,
/// 2n̄₀ (Δv/v̄)² (n̄₀ − 1 + π²/2 + (v̄/V̄₀) ∂V̄₀/∂v̄).
pub fn spread_error_estimate(n0_bar: f64, rel_width: f64, v_bar: f64, contrast_log_derivative: f64) -> Result<f64> {
    if !(0.0..0.2).contains(&rel_width) {
        return Err(Error::domain("relative width must lie in [0, 0.2)"));
    }
    Ok(2.0
        * n0_bar
        * rel_width
        * rel_width
        * (n0_bar - 1.0 + 0.5 * PI * PI + v_bar * contrast_log_derivative))
}

/// d ln V₀ / dv at `v_bar` (per m/s) for the unperturbed single-velocity
/// visibility: central differences with step 10⁻³ v̄, one Richardson step.
pub fn contrast_velocity_derivative(config: &InterferometerConfig, molecule: &Molecule, v_bar: f64) -> Result<f64> {
    let order = talbot::pattern_coefficients(config, molecule, v_bar, None)?.order_max();
    let ln_v = |v: f64| -> Result<f64> {
        let p = talbot::pattern_coefficients(config, molecule, v, Some(order))?;
        let vis = talbot::sinusoidal_visibility(&p, config.open_fraction_g3)?;
        if !(vis > 0.0) {
            return Err(Error::domain("visibility vanishes"));
        }
        Ok(vis.ln())
    };
    let central = |h: f64| -> Result<f64> { Ok((ln_v(v_bar + h)? - ln_v(v_bar - h)?) / (2.0 * h)) };
    let h = 1e-3 * v_bar;
    let coarse = central(h)?;
    let fine = central(0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}
