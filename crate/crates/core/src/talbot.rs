//! Talbot-Lau fringe synthesis in the Fourier-coefficient picture.
//!
//! A grating is described by the Fourier coefficients `b_j` of its
//! amplitude transmission. Near-field propagation over the symmetric
//! setup enters through the Talbot coefficients
//!
//! ```text
//! B_l(xi) = sum_j b_j conj(b_{j-l}) exp[i pi xi (l - 2 j)]
//! ```
//!
//! and the density pattern in front of the third grating has harmonics
//! `w_l = (-1)^l A_l B_l(l L / L_T)`, with `A_l` the intensity
//! transmission coefficients of the first grating.
//!
//! Phase convention: the factor `(-1)^l` places the origin of the
//! third-grating position half a period away from the grating axis, so that
//! the symmetric TLI at `L = L_T` has its fringe maximum at `x = 0`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::physics::{self, InterferometerConfig, Molecule, SecondGrating};

/// Samples per period for the discrete Fourier transform of a laser grating.
pub const LASER_GRATING_SAMPLES: usize = 4096;
/// Default harmonic count for patterns behind a material grating.
pub const DEFAULT_ORDER_TLI: usize = 40;
/// Default harmonic count for KDTLI patterns.
pub const DEFAULT_ORDER_KDTLI: usize = 10;
/// Adaptive doubling stops here.
pub const MAX_ORDER: usize = 2560;
/// Relative size of the tail coefficients below which a series counts as
/// converged.
pub const TRUNCATION_TOLERANCE: f64 = 1e-12;

/// sin(x)/x with sinc(0) = 1.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Fourier coefficients of the intensity transmission of a binary mask
/// with open fraction `f`, centred on the origin: f·sinc(π l f).
pub fn binary_intensity_coefficient(open_fraction: f64, order: i64) -> f64 {
    open_fraction * sinc(PI * order as f64 * open_fraction)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GratingDescriptor {
    Binary { open_fraction: f64 },
    /// t(x) = exp[(i φ₀ − η/2) cos²(π x/d)]
    ComplexExponential { phase: f64, absorption: f64 },
}

/// Fourier coefficients b_j, j = −J..J, of a grating amplitude
/// transmission function.
#[derive(Debug, Clone, PartialEq)]
pub struct GratingCoefficients {
    max_order: usize,
    coefficients: Vec<Complex64>,
    descriptor: GratingDescriptor,
    truncated: bool,
}

impl GratingCoefficients {
    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn descriptor(&self) -> GratingDescriptor {
        self.descriptor
    }

    /// True when the outermost stored coefficient is not negligible.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    /// b_j, zero outside the stored range.
    pub fn coefficient(&self, j: i64) -> Complex64 {
        let jmax = self.max_order as i64;
        if j.abs() > jmax {
            Complex64::new(0.0, 0.0)
        } else {
            self.coefficients[(j + jmax) as usize]
        }
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// Σ|b_j|², the mean intensity transmission up to truncation.
    pub fn power(&self) -> f64 {
        self.coefficients.iter().map(|b| b.norm_sqr()).sum()
    }
}

fn tail_is_small(values: &[Complex64], max_order: usize) -> bool {
    let peak = values.iter().map(|b| b.norm()).fold(0.0, f64::max);
    let jmax = max_order as i64;
    let edge = values[0].norm().max(values[(2 * jmax) as usize].norm());
    edge <= TRUNCATION_TOLERANCE * peak
}

/// Binary mask coefficients b_j = f·sinc(π j f).
pub fn binary_coefficients(open_fraction: f64, max_order: usize) -> Result<GratingCoefficients> {
    if !(open_fraction > 0.0 && open_fraction < 1.0) {
        return Err(Error::domain(format!(
            "open fraction must lie in (0, 1), got {open_fraction}"
        )));
    }
    let jmax = max_order as i64;
    let coefficients = (-jmax..=jmax)
        .map(|j| Complex64::new(binary_intensity_coefficient(open_fraction, j), 0.0))
        .collect::<Vec<_>>();
    let truncated = !tail_is_small(&coefficients, max_order);
    Ok(GratingCoefficients {
        max_order,
        coefficients,
        descriptor: GratingDescriptor::Binary { open_fraction },
        truncated,
    })
}

/// exp(−2πik/N) for k = 0..N.
fn twiddles() -> &'static [Complex64] {
    static TABLE: OnceLock<Vec<Complex64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = LASER_GRATING_SAMPLES;
        (0..n)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect()
    })
}

/// Order needed to hold the laser-grating coefficients to machine
/// precision. The spectrum of exp(z cos 2θ) falls off like I_j(|z|/2).
pub fn laser_grating_order(phi0: f64, eta: f64) -> usize {
    let x = 0.5 * (phi0 * phi0 + 0.25 * eta * eta).sqrt();
    let order = (x + 10.0 * x.cbrt()).ceil() as usize + 25;
    order.min(LASER_GRATING_SAMPLES / 2 - 1)
}

/// Fourier coefficients of t(x) = exp[(iφ₀ − η/2) cos²(πx/d)] by a
/// discrete Fourier transform over [`LASER_GRATING_SAMPLES`] points.
pub fn laser_grating_coefficients(
    phi0: f64,
    eta: f64,
    max_order: usize,
) -> Result<GratingCoefficients> {
    if !(eta >= 0.0) {
        return Err(Error::domain("grating absorption must be non-negative"));
    }
    if !phi0.is_finite() {
        return Err(Error::domain("grating phase must be finite"));
    }
    if max_order >= LASER_GRATING_SAMPLES / 2 {
        return Err(Error::domain("grating order exceeds the sampling limit"));
    }
    let n = LASER_GRATING_SAMPLES;
    let exponent = Complex64::new(-0.5 * eta, phi0);
    let samples: Vec<Complex64> = (0..n)
        .map(|k| {
            let c = (PI * k as f64 / n as f64).cos();
            (exponent * (c * c)).exp()
        })
        .collect();
    let table = twiddles();
    let jmax = max_order as i64;
    let coefficients: Vec<Complex64> = (-jmax..=jmax)
        .map(|j| {
            let sum: Complex64 = samples
                .iter()
                .enumerate()
                .map(|(k, s)| s * table[(j * k as i64).rem_euclid(n as i64) as usize])
                .sum();
            sum / n as f64
        })
        .collect();
    let truncated = !tail_is_small(&coefficients, max_order);
    if truncated {
        log::warn!(
            "laser grating coefficients truncated at order {max_order} (phi0 = {phi0}, eta = {eta})"
        );
    }
    Ok(GratingCoefficients {
        max_order,
        coefficients,
        descriptor: GratingDescriptor::ComplexExponential {
            phase: phi0,
            absorption: eta,
        },
        truncated,
    })
}

/// Talbot coefficient B_l(ξ).
///
/// Binary masks use the equivalent real-space overlap
/// `(1/d) ∫ t(x − ξd/2) t(x + ξd/2) e^{−2πilx/d} dx`, which is exact; the
/// coefficient series of a binary mask only converges like 1/J. All other
/// gratings sum the series of [`talbot_coefficient_series`].
pub fn talbot_coefficient(grating: &GratingCoefficients, xi: f64, ell: i64) -> Complex64 {
    match grating.descriptor {
        GratingDescriptor::Binary { open_fraction } => binary_talbot_overlap(open_fraction, xi, ell),
        GratingDescriptor::ComplexExponential { .. } => talbot_coefficient_series(grating, xi, ell),
    }
}

/// Direct double-index sum Σ_j b_j conj(b_{j−l}) exp[iπξ(l − 2j)] over the
/// stored coefficients.
pub fn talbot_coefficient_series(grating: &GratingCoefficients, xi: f64, ell: i64) -> Complex64 {
    let jmax = grating.max_order as i64;
    let lo = (-jmax).max(ell - jmax);
    let hi = jmax.min(ell + jmax);
    let mut sum = Complex64::new(0.0, 0.0);
    for j in lo..=hi {
        let term = grating.coefficient(j) * grating.coefficient(j - ell).conj();
        if term.norm_sqr() == 0.0 {
            continue;
        }
        sum += term * unit_phase(0.5 * xi * (ell - 2 * j) as f64);
    }
    sum
}

/// exp(2πi·t), with t reduced modulo 1 first so integer arguments are exact.
pub(crate) fn unit_phase(turns: f64) -> Complex64 {
    let t = turns - turns.round();
    if t == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::from_polar(1.0, 2.0 * PI * t)
    }
}

/// Fourier coefficient of the product of two binary masks displaced by
/// ±ξ/2 periods.
fn binary_talbot_overlap(open_fraction: f64, xi: f64, ell: i64) -> Complex64 {
    let half = 0.5 * open_fraction;
    let a = 0.5 * xi;
    let (lo1, hi1) = (a - half, a + half);
    // images of the second slit, centred at −a + k
    let k_mid = (2.0 * a).round() as i64;
    let mut total = Complex64::new(0.0, 0.0);
    for k in (k_mid - 1)..=(k_mid + 1) {
        let centre = -a + k as f64;
        let lo = lo1.max(centre - half);
        let hi = hi1.min(centre + half);
        if hi > lo {
            total += interval_fourier(lo, hi, ell);
        }
    }
    total
}

/// ∫_lo^hi exp(−2πi l x) dx for a unit period.
fn interval_fourier(lo: f64, hi: f64, ell: i64) -> Complex64 {
    if ell == 0 {
        return Complex64::new(hi - lo, 0.0);
    }
    let l = ell as f64;
    let mid = 0.5 * (lo + hi);
    let width = hi - lo;
    // = e^{−2πil·mid} · width · sinc(π l width)
    unit_phase(-l * mid) * (width * sinc(PI * l * width))
}

/// Harmonics of a real periodic function of the lateral position.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeCoefficients {
    order_max: usize,
    coefficients: Vec<Complex64>,
    /// Spatial period (m).
    pub period: f64,
    /// Longitudinal velocity the pattern belongs to (m/s); the mean
    /// velocity for averaged patterns.
    pub velocity: f64,
    /// Set when the synthesis stopped at [`MAX_ORDER`] with a
    /// non-negligible tail.
    pub truncated: bool,
}

impl FringeCoefficients {
    /// Builds a pattern from coefficients for l = −N..N.
    pub fn new(coefficients: Vec<Complex64>, period: f64, velocity: f64) -> Result<Self> {
        if coefficients.len().is_multiple_of(2) || coefficients.len() < 3 {
            return Err(Error::domain(
                "fringe coefficients need an odd count of at least three (l = -N..N)",
            ));
        }
        Ok(FringeCoefficients {
            order_max: coefficients.len() / 2,
            coefficients,
            period,
            velocity,
            truncated: false,
        })
    }

    pub fn order_max(&self) -> usize {
        self.order_max
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn coefficient(&self, ell: i64) -> Complex64 {
        let n = self.order_max as i64;
        if ell.abs() > n {
            Complex64::new(0.0, 0.0)
        } else {
            self.coefficients[(ell + n) as usize]
        }
    }

    /// Iterator over (l, w_l).
    pub fn harmonics(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let n = self.order_max as i64;
        self.coefficients
            .iter()
            .enumerate()
            .map(move |(i, c)| (i as i64 - n, *c))
    }

    pub fn mean(&self) -> f64 {
        self.coefficient(0).re
    }

    /// Σ_l w_l exp(2πilx/d), real part.
    pub fn evaluate(&self, x: f64) -> f64 {
        let turns = x / self.period;
        let mut value = self.coefficient(0).re;
        for ell in 1..=self.order_max as i64 {
            let plus = self.coefficient(ell) * unit_phase(ell as f64 * turns);
            let minus = self.coefficient(-ell) * unit_phase(-(ell as f64) * turns);
            value += plus.re + minus.re;
        }
        value
    }

    pub fn evaluate_many(&self, positions: &[f64]) -> Vec<f64> {
        positions.iter().map(|&x| self.evaluate(x)).collect()
    }

    /// Largest |w_{−l} − conj(w_l)| relative to |w₀|.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.coefficient(0).norm().max(f64::MIN_POSITIVE);
        (0..=self.order_max as i64)
            .map(|l| (self.coefficient(-l) - self.coefficient(l).conj()).norm())
            .fold(0.0, f64::max)
            / scale
    }

    /// Minimum of the reconstructed pattern over `samples` points of one
    /// period.
    pub fn min_over_period(&self, samples: usize) -> f64 {
        (0..samples)
            .map(|k| self.evaluate(self.period * k as f64 / samples as f64))
            .fold(f64::INFINITY, f64::min)
    }

    /// Multiplies harmonic l by `factor(l)`.
    pub fn map_harmonics(&self, factor: impl Fn(i64) -> Complex64) -> Self {
        let n = self.order_max as i64;
        let coefficients = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| c * factor(i as i64 - n))
            .collect();
        FringeCoefficients {
            coefficients,
            ..self.clone()
        }
    }

    /// Sum of absolute tail magnitudes beyond the stored orders is unknown;
    /// this returns the magnitude of the largest coefficient in the outer
    /// tenth of the stored range, relative to the largest harmonic.
    pub fn tail_ratio(&self) -> f64 {
        let n = self.order_max as i64;
        let start = n - (n / 10).max(1) + 1;
        let tail = (start..=n)
            .map(|l| self.coefficient(l).norm().max(self.coefficient(-l).norm()))
            .fold(0.0, f64::max);
        let peak = self.coefficients.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            0.0
        } else {
            tail / peak
        }
    }
}

/// Grating coefficients of the second grating at velocity `v`.
pub fn second_grating_coefficients(
    config: &InterferometerConfig,
    molecule: &Molecule,
    v: f64,
) -> Result<GratingCoefficients> {
    match config.second_grating {
        // Binary patterns use the exact overlap, which needs no stored
        // coefficients beyond a token range.
        SecondGrating::Material { open_fraction } => binary_coefficients(open_fraction, 64),
        SecondGrating::Laser(laser) => {
            let phi0 = physics::eikonal_phase(molecule, &laser, v)?;
            let eta = physics::grating_mean_absorption(molecule, &laser, v)?;
            laser_grating_coefficients(phi0, eta, laser_grating_order(phi0, eta))
        }
    }
}

pub fn default_order(config: &InterferometerConfig) -> usize {
    if config.is_kdtli() {
        DEFAULT_ORDER_KDTLI
    } else {
        DEFAULT_ORDER_TLI
    }
}

/// Unperturbed density pattern at the third grating for velocity `v`.
///
/// With `max_order = None` the order starts at the configuration default
/// and doubles while the tail exceeds [`TRUNCATION_TOLERANCE`], up to
/// [`MAX_ORDER`]; a pattern still unconverged there is flagged
/// `truncated`.
pub fn pattern_coefficients(
    config: &InterferometerConfig,
    molecule: &Molecule,
    v: f64,
    max_order: Option<usize>,
) -> Result<FringeCoefficients> {
    let grating = second_grating_coefficients(config, molecule, v)?;
    let xi_unit = config.separation / physics::talbot_length(config.period, physics::de_broglie(molecule, v)?)?;
    let synth = |order: usize| -> Result<FringeCoefficients> {
        let n = order as i64;
        let coefficients = (-n..=n)
            .map(|ell| {
                let sign = if ell % 2 == 0 { 1.0 } else { -1.0 };
                let a1 = binary_intensity_coefficient(config.open_fraction_g1, ell);
                talbot_coefficient(&grating, ell as f64 * xi_unit, ell) * (sign * a1)
            })
            .collect();
        let mut pattern = FringeCoefficients::new(coefficients, config.period, v)?;
        pattern.truncated = grating.is_truncated();
        Ok(pattern)
    };
    match max_order {
        Some(order) => synth(order.max(1)),
        None => {
            let mut order = default_order(config);
            loop {
                let pattern = synth(order)?;
                if pattern.tail_ratio() <= TRUNCATION_TOLERANCE {
                    return Ok(pattern);
                }
                if order * 2 > MAX_ORDER {
                    let mut pattern = pattern;
                    pattern.truncated = true;
                    return Ok(pattern);
                }
                order *= 2;
            }
        }
    }
}

/// Harmonics of the detector signal, S_l = w_l · conj(A_l⁽³⁾).
pub fn signal_coefficients(pattern: &FringeCoefficients, g3_open_fraction: f64) -> FringeCoefficients {
    pattern.map_harmonics(|ell| {
        Complex64::new(binary_intensity_coefficient(g3_open_fraction, ell), 0.0)
    })
}

/// Transmitted flux per incident flux versus third-grating displacement.
pub fn detector_signal(pattern: &FringeCoefficients, g3_open_fraction: f64, positions: &[f64]) -> Vec<f64> {
    signal_coefficients(pattern, g3_open_fraction).evaluate_many(positions)
}

/// Fringe visibility 2|S₁/S₀| of the detector signal.
pub fn sinusoidal_visibility(pattern: &FringeCoefficients, g3_open_fraction: f64) -> Result<f64> {
    let signal = signal_coefficients(pattern, g3_open_fraction);
    visibility_of_signal(&signal)
}

pub(crate) fn visibility_of_signal(signal: &FringeCoefficients) -> Result<f64> {
    let s0 = signal.coefficient(0).re;
    if !(s0 > 0.0) {
        return Err(Error::domain("mean detector signal must be positive"));
    }
    let s1 = signal.coefficient(1).norm();
    let higher = (2..=signal.order_max() as i64)
        .map(|l| signal.coefficient(l).norm())
        .fold(0.0, f64::max);
    if s1 > 0.0 && higher > 0.1 * s1 {
        log::debug!("higher harmonics reach {:.3} of the first: signal is not sinusoidal", higher / s1);
    }
    Ok(2.0 * s1 / s0)
}
