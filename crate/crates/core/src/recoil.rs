//! The recoil-laser channel: Poissonian photon absorption, the resulting
//! superposition of shifted fringe patterns, fluorescence decoherence and
//! the closed-form contrast reduction factors.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::physics::{self, Molecule, RecoilLaser, SpectrumTable};
use crate::talbot::{sinc, unit_phase, FringeCoefficients};
use crate::units::SPEED_OF_LIGHT;

/// Poisson probability P_n(n₀) = n₀ⁿ e^{−n₀} / n!.
pub fn poisson_pmf(n0: f64, n: u64) -> f64 {
    if n0 == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let k = n as f64;
    (k * n0.ln() - n0 - ln_factorial(n)).exp()
}

fn ln_factorial(n: u64) -> f64 {
    statrs::function::factorial::ln_factorial(n)
}

/// Probability of absorbing two or more photons.
pub fn multi_photon_probability(n0: f64) -> f64 {
    1.0 - poisson_pmf(n0, 0) - poisson_pmf(n0, 1)
}

/// Decoherence function γ(x) = ∫ F(ω) sinc(ωx/c) dω, clamped to [−1, 1].
pub fn decoherence_gamma(spectrum: &SpectrumTable, x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    spectrum
        .integrate(|omega| sinc(omega * x / SPEED_OF_LIGHT))
        .clamp(-1.0, 1.0)
}

/// One pass through the recoil laser at a fixed velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoilChannel {
    /// Mean number of absorbed photons.
    pub n0: f64,
    /// Fringe shift per absorbed photon (m).
    pub shift: f64,
    /// Fluorescence quantum yield.
    pub p_fluo: f64,
    /// γ(l λ_L s/d) for l = 0, 1, 2, ...; γ is even so negative orders
    /// reuse these entries. Orders beyond the table use the last entry.
    gamma: Vec<f64>,
}

impl RecoilChannel {
    /// Pure recoil channel without fluorescence.
    pub fn recoil_only(n0: f64, shift: f64) -> Self {
        RecoilChannel {
            n0,
            shift,
            p_fluo: 0.0,
            gamma: vec![1.0],
        }
    }

    /// Channel with fluorescence; `gamma[l]` must hold γ(l λ_L s/d) and
    /// `gamma[0]` must equal 1.
    pub fn with_fluorescence(n0: f64, shift: f64, p_fluo: f64, gamma: Vec<f64>) -> Result<Self> {
        if !(n0 >= 0.0) {
            return Err(Error::domain("n0 must be non-negative"));
        }
        if !(0.0..=1.0).contains(&p_fluo) {
            return Err(Error::domain("p_fluo must lie in [0, 1]"));
        }
        if gamma.first() != Some(&1.0) {
            return Err(Error::domain("gamma at zero argument must equal 1"));
        }
        if gamma.iter().any(|g| !(g.abs() <= 1.0)) {
            return Err(Error::domain("gamma values must lie in [-1, 1]"));
        }
        Ok(RecoilChannel {
            n0,
            shift,
            p_fluo,
            gamma,
        })
    }

    /// Channel for `molecule` crossing `laser` at velocity `v`, with γ
    /// tabulated up to `max_order` when the molecule fluoresces.
    pub fn for_velocity(
        molecule: &Molecule,
        laser: &RecoilLaser,
        period: f64,
        v: f64,
        max_order: usize,
    ) -> Result<Self> {
        let n0 = physics::mean_photon_number(molecule, laser, v)?;
        let shift = physics::recoil_shift(physics::de_broglie(molecule, v)?, laser.wavelength, laser.distance);
        match (&molecule.fluorescence_spectrum, molecule.p_fluo > 0.0) {
            (Some(spectrum), true) => {
                let gamma = (0..=max_order)
                    .map(|l| decoherence_gamma(spectrum, l as f64 * laser.wavelength * shift / period))
                    .collect();
                Self::with_fluorescence(n0, shift, molecule.p_fluo, gamma)
            }
            _ => Ok(Self::recoil_only(n0, shift)),
        }
    }

    pub fn gamma(&self, ell: i64) -> f64 {
        let idx = ell.unsigned_abs() as usize;
        *self.gamma.get(idx).unwrap_or_else(|| self.gamma.last().unwrap())
    }

    /// Multiplier of harmonic l:
    /// exp[−n₀{1 − e^{2πils/d}(P γ_l + 1 − P)}].
    pub fn multiplier(&self, ell: i64, period: f64) -> Complex64 {
        if self.n0 == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        let kept = self.p_fluo * self.gamma(ell) + 1.0 - self.p_fluo;
        let phase = unit_phase(ell as f64 * self.shift / period);
        let exponent = -self.n0 * (Complex64::new(1.0, 0.0) - phase * kept);
        exponent.exp()
    }
}

/// Applies the recoil channel to a pattern coefficient-wise.
pub fn apply_recoil(pattern: &FringeCoefficients, channel: &RecoilChannel) -> FringeCoefficients {
    let period = pattern.period;
    pattern.map_harmonics(|ell| channel.multiplier(ell, period))
}

/// Weights of the unshifted and half-period-shifted copies of the pattern
/// for s = d/2: (e^{−n₀} cosh n₀, e^{−n₀} sinh n₀).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPeriodDecomposition {
    pub main_weight: f64,
    pub shifted_weight: f64,
}

impl HalfPeriodDecomposition {
    /// Side-to-main peak weight ratio, tanh n₀.
    pub fn ratio(&self) -> f64 {
        if self.main_weight == 0.0 {
            1.0
        } else {
            self.shifted_weight / self.main_weight
        }
    }

    /// main·w(x) + shifted·w(x + d/2) in coefficient form.
    pub fn compose(&self, pattern: &FringeCoefficients) -> FringeCoefficients {
        pattern.map_harmonics(|ell| {
            let sign = if ell % 2 == 0 { 1.0 } else { -1.0 };
            Complex64::new(self.main_weight + sign * self.shifted_weight, 0.0)
        })
    }
}

pub fn half_period_pattern(n0: f64) -> HalfPeriodDecomposition {
    // e^{−n}cosh n = (1 + e^{−2n})/2, e^{−n}sinh n = (1 − e^{−2n})/2
    let e = (-2.0 * n0).exp();
    HalfPeriodDecomposition {
        main_weight: 0.5 * (1.0 + e),
        shifted_weight: 0.5 * (1.0 - e),
    }
}

/// Contrast reduction of a sinusoidal pattern, R = exp(−n₀[1 − cos(2πs/d)]).
pub fn reduction_factor(n0: f64, shift: f64, period: f64) -> f64 {
    let turns = shift / period;
    let t = turns - turns.round();
    (-n0 * (1.0 - (2.0 * PI * t).cos())).exp()
}

/// d(ln R⁻¹)/dP for a half-period shift: 2 n₀ at 1 W (per watt).
pub fn log_reduction_slope(molecule: &Molecule, laser: &RecoilLaser, v: f64) -> Result<f64> {
    Ok(2.0 * physics::mean_photon_number(molecule, &laser.with_power(1.0), v)?)
}

/// ln R⁻¹ at s = d/2 with fluorescence: 2n₀ − P n₀ [1 − γ(λ_L/2)].
pub fn ln_reduction_half_shift(n0: f64, p_fluo: f64, gamma_half: f64) -> f64 {
    2.0 * n0 - p_fluo * n0 * (1.0 - gamma_half)
}

/// ln R⁻¹ at s = d with fluorescence: P n₀ [1 − γ(λ_L)].
pub fn ln_reduction_full_shift(n0: f64, p_fluo: f64, gamma_full: f64) -> f64 {
    p_fluo * n0 * (1.0 - gamma_full)
}

/// −ln R of the first harmonic for a single velocity, fluorescence
/// included when the molecule has a yield and a spectrum.
pub fn ln_inverse_reduction(molecule: &Molecule, laser: &RecoilLaser, period: f64, v: f64) -> Result<f64> {
    let channel = RecoilChannel::for_velocity(molecule, laser, period, v, 1)?;
    Ok(-channel.multiplier(1, period).norm().ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn poisson_examples() {
        assert_eq!(poisson_pmf(0.0, 0), 1.0);
        assert_eq!(poisson_pmf(0.0, 3), 0.0);
        let p2 = multi_photon_probability(0.5);
        assert_relative_eq!(p2, 1.0 - (-0.5f64).exp() * 1.5, max_relative = 1e-13);
        assert!((p2 - 0.0902).abs() < 5e-5 && p2 < 0.10);
        assert_relative_eq!(poisson_pmf(1.6, 1), 1.6 * (-1.6f64).exp(), max_relative = 1e-13);
        assert!((poisson_pmf(1.6, 1) - 0.3230).abs() < 5e-5);
        let total: f64 = (0..60).map(|n| poisson_pmf(2.3, n)).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    fn pattern() -> FringeCoefficients {
        let c = vec![
            Complex64::new(0.01, -0.02),
            Complex64::new(0.1, 0.05),
            Complex64::new(0.5, 0.0),
            Complex64::new(0.1, -0.05),
            Complex64::new(0.01, 0.02),
        ];
        FringeCoefficients::new(c, 266e-9, 175.0).unwrap()
    }

    #[test]
    fn identity_channels() {
        let p = pattern();
        assert_eq!(apply_recoil(&p, &RecoilChannel::recoil_only(0.0, 1e-7)), p);
        // a full-period shift leaves every harmonic untouched
        let full = apply_recoil(&p, &RecoilChannel::recoil_only(1.3, p.period));
        assert_eq!(full, p);
    }

    #[test]
    fn half_shift_first_harmonic() {
        let p = pattern();
        let n0 = 0.8;
        let out = apply_recoil(&p, &RecoilChannel::recoil_only(n0, 0.5 * p.period));
        let m = out.coefficient(1) / p.coefficient(1);
        assert_relative_eq!(m.re, (-2.0 * n0).exp(), max_relative = 1e-12);
        assert!(m.im.abs() < 1e-14);
    }

    #[test]
    fn half_period_weights() {
        let d = half_period_pattern(1.0);
        assert_relative_eq!(d.ratio(), 1f64.tanh(), max_relative = 1e-12);
        assert!((d.ratio() - 0.7616).abs() < 1e-4);
        assert_eq!(half_period_pattern(0.0).main_weight, 1.0);
        assert_eq!(half_period_pattern(0.0).shifted_weight, 0.0);
        assert!((half_period_pattern(0.8).ratio() - 0.6640).abs() < 1e-4);
        assert!(half_period_pattern(40.0).ratio() > 1.0 - 1e-12);
        let p = pattern();
        let composed = d.compose(&p);
        let direct = apply_recoil(&p, &RecoilChannel::recoil_only(1.0, 0.5 * p.period));
        for l in -2..=2 {
            assert!((composed.coefficient(l) - direct.coefficient(l)).norm() < 1e-15);
        }
    }

    #[test]
    fn reduction_factor_examples() {
        let d = 266e-9;
        assert_eq!(reduction_factor(0.9, d, d), 1.0);
        assert_relative_eq!(reduction_factor(0.9, 0.5 * d, d), (-1.8f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(reduction_factor(0.8, 0.25 * d, d), (-0.8f64).exp(), max_relative = 1e-14);
        assert!((reduction_factor(0.8, 0.25 * d, d) - 0.4493).abs() < 1e-4);
        assert_eq!(reduction_factor(0.0, 0.3 * d, d), 1.0);
    }

    #[test]
    fn fluorescence_closed_forms() {
        assert_eq!(ln_reduction_half_shift(1.0, 0.0, 0.3), 2.0);
        let ratio = ln_reduction_half_shift(1.0, 0.11, 0.49) / 2.0;
        assert_relative_eq!(ratio, 1.0 - 0.11 * 0.51 / 2.0, max_relative = 1e-14);
        assert!((1.0 - ratio - 0.03).abs() < 0.003);
        let ratio = ln_reduction_half_shift(1.0, 1.0, 0.49) / 2.0;
        assert!((1.0 - ratio - 0.255).abs() < 1e-12);
        assert_eq!(ln_reduction_full_shift(1.6, 0.0, 0.2), 0.0);
        assert_eq!(ln_reduction_full_shift(1.6, 0.5, 1.0), 0.0);
    }

    #[test]
    fn fluorescence_channel_matches_closed_forms() {
        let d = 266e-9;
        let (n0, p, g_half, g_full) = (0.7, 0.4, 0.49, -0.2);
        let half = RecoilChannel::with_fluorescence(n0, 0.5 * d, p, vec![1.0, g_half]).unwrap();
        assert_relative_eq!(
            -half.multiplier(1, d).norm().ln(),
            ln_reduction_half_shift(n0, p, g_half),
            max_relative = 1e-12
        );
        let full = RecoilChannel::with_fluorescence(n0, d, p, vec![1.0, g_full]).unwrap();
        assert_relative_eq!(
            -full.multiplier(1, d).norm().ln(),
            ln_reduction_full_shift(n0, p, g_full),
            max_relative = 1e-12
        );
        assert!(RecoilChannel::with_fluorescence(n0, d, p, vec![0.9]).is_err());
        assert!(RecoilChannel::with_fluorescence(n0, d, p, vec![1.0, 1.2]).is_err());
    }

    #[test]
    fn gamma_of_narrow_line() {
        // Gaussian line of 0.01 nm width at 650 nm approximates a delta.
        let pts: Vec<(f64, f64)> = (-400..=400)
            .map(|k| {
                let dl = k as f64 * 1e-4;
                (650.0 + dl, (-0.5 * (dl / 0.01).powi(2)).exp())
            })
            .collect();
        let spectrum = SpectrumTable::from_wavelength_nm(&pts).unwrap();
        assert_eq!(decoherence_gamma(&spectrum, 0.0), 1.0);
        let x = 210e-9;
        let expected = sinc(2.0 * PI * x / 650e-9);
        assert!((decoherence_gamma(&spectrum, x) - expected).abs() < 1e-6);
        assert!((expected - 0.4416).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn gamma_bounded(x in 0.0f64..5e-6) {
            let pts: Vec<(f64, f64)> = (0..200).map(|k| (550.0 + k as f64, 1.0 + (k % 7) as f64)).collect();
            let spectrum = SpectrumTable::from_wavelength_nm(&pts).unwrap();
            prop_assert!(decoherence_gamma(&spectrum, x).abs() <= 1.0);
        }

        #[test]
        fn recoil_preserves_hermitian_symmetry(n0 in 0.0f64..3.0, s in 0.0f64..1.0, p in 0.0f64..1.0, g in -0.2f64..1.0) {
            let pat = pattern();
            let ch = RecoilChannel::with_fluorescence(n0, s * pat.period, p, vec![1.0, g, 0.5 * g]).unwrap();
            let out = apply_recoil(&pat, &ch);
            prop_assert!(out.hermitian_defect() < 1e-14);
        }

        #[test]
        fn half_shift_monotone(n0 in 0.0f64..3.0, dn in 1e-3f64..1.0) {
            let pat = pattern();
            let s = 0.5 * pat.period;
            let a = apply_recoil(&pat, &RecoilChannel::recoil_only(n0, s)).coefficient(1).norm();
            let b = apply_recoil(&pat, &RecoilChannel::recoil_only(n0 + dn, s)).coefficient(1).norm();
            prop_assert!(b < a);
        }
    }
}
