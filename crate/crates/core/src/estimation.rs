//! Inversion of fringe scans: sine fits for the visibility, a log-linear
//! regression of the contrast reduction against laser power for σ_abs, and
//! the two-shift protocol that separates absorption from fluorescence.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::physics::{self, RecoilLaser};

/// Reduced χ² above which the log-linear model is flagged as inadequate.
pub const NONLINEARITY_THRESHOLD: f64 = 2.0;

/// Sine fit of one fringe scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityEstimate {
    pub visibility: f64,
    pub phase: f64,
    pub mean_level: f64,
    pub visibility_se: f64,
    pub phase_se: f64,
    pub mean_level_se: f64,
    /// Recoil-laser power of the scan (W).
    pub power: f64,
}

/// Fits c₀ + a cos(kx) + b sin(kx) by weighted least squares with Poisson
/// variances max(count, 1). The visibility is √(a² + b²)/c₀, i.e.
/// (max − min)/(max + min) of the fitted curve.
pub fn sine_fit(positions: &[f64], counts: &[f64], period: f64, power: f64) -> Result<VisibilityEstimate> {
    let n = positions.len();
    if n != counts.len() {
        return Err(Error::domain("positions and counts differ in length"));
    }
    if n < 8 {
        return Err(Error::domain("a sine fit needs at least 8 positions"));
    }
    if !(period > 0.0) {
        return Err(Error::domain("period must be positive"));
    }
    let (lo, hi) = positions
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    // a scan of n equally spaced samples covers n steps, not n − 1
    if (hi - lo) * n as f64 / ((n - 1) as f64) < period * (1.0 - 1e-9) {
        return Err(Error::domain("positions must span at least one period"));
    }

    let k = 2.0 * PI / period;
    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (&x, &c) in positions.iter().zip(counts) {
        if !(c >= 0.0) {
            return Err(Error::domain("counts must be non-negative"));
        }
        let w = 1.0 / c.max(1.0);
        let basis = Vector3::new(1.0, (k * x).cos(), (k * x).sin());
        normal += basis * basis.transpose() * w;
        rhs += basis * (w * c);
    }
    let cov = normal
        .cholesky()
        .ok_or_else(|| Error::Numerical("singular sine-fit design matrix".into()))?
        .inverse();
    let beta = cov * rhs;
    let (c0, a, b) = (beta[0], beta[1], beta[2]);
    if !(c0 > 0.0) {
        return Err(Error::Numerical("fitted mean level is not positive".into()));
    }

    let r = a.hypot(b);
    let visibility = r / c0;
    // first-order propagation through the covariance
    let grad_v = if r > 0.0 {
        Vector3::new(-r / (c0 * c0), a / (r * c0), b / (r * c0))
    } else {
        // at r = 0 use the radial standard error of the amplitude
        let s = ((cov[(1, 1)] + cov[(2, 2)]) / 2.0).sqrt() / c0;
        return Ok(VisibilityEstimate {
            visibility: 0.0,
            phase: 0.0,
            mean_level: c0,
            visibility_se: s,
            phase_se: PI,
            mean_level_se: cov[(0, 0)].sqrt(),
            power,
        });
    };
    let grad_phi = Vector3::new(0.0, b / (r * r), -a / (r * r));
    let var = |g: &Vector3<f64>| (g.transpose() * cov * g)[0].max(0.0);

    Ok(VisibilityEstimate {
        visibility,
        phase: (-b).atan2(a),
        mean_level: c0,
        visibility_se: var(&grad_v).sqrt(),
        phase_se: var(&grad_phi).sqrt(),
        mean_level_se: cov[(0, 0)].sqrt(),
        power,
    })
}

/// Result of the log-linear regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSectionResult {
    /// m²
    pub sigma_abs: f64,
    pub ci95: (f64, f64),
    /// d ln(V₀/V)/dP in 1/W.
    pub slope: f64,
    pub slope_se: f64,
    pub reduced_chi2: f64,
    /// (power, standardized residual) per non-baseline point.
    pub residuals: Vec<(f64, f64)>,
    pub nonlinear: bool,
    pub degrees_of_freedom: usize,
}

/// Slope of y = βP through the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginFit {
    pub slope: f64,
    pub slope_se: f64,
    pub chi2: f64,
    pub residuals: Vec<(f64, f64)>,
    /// Number of non-baseline powers minus one.
    pub degrees_of_freedom: usize,
}

/// Regresses ln(V₀/V(P)) on P through the origin.
///
/// Every point shares the measured baseline V₀, so the errors are
/// correlated: cov = σ₀² 1 1ᵀ + diag(σ_k²). The generalized least-squares
/// slope uses the Sherman-Morrison inverse of that matrix.
pub fn log_reduction_fit(estimates: &[VisibilityEstimate]) -> Result<OriginFit> {
    let mut baselines = estimates.iter().filter(|e| e.power == 0.0);
    let base = baselines
        .next()
        .ok_or_else(|| Error::domain("a 0 W baseline scan is required"))?;
    if baselines.next().is_some() {
        return Err(Error::domain("more than one 0 W baseline scan"));
    }
    let points: Vec<&VisibilityEstimate> = estimates.iter().filter(|e| e.power != 0.0).collect();
    if points.is_empty() {
        return Err(Error::domain("at least one non-zero power is required"));
    }
    if estimates.iter().any(|e| !(e.visibility > 0.0)) {
        return Err(Error::domain("visibilities must be positive for the log ratio"));
    }
    if points.iter().any(|e| !(e.power > 0.0)) {
        return Err(Error::domain("powers must be non-negative"));
    }

    let var0 = (base.visibility_se / base.visibility).powi(2);
    let p: Vec<f64> = points.iter().map(|e| e.power).collect();
    let y: Vec<f64> = points.iter().map(|e| (base.visibility / e.visibility).ln()).collect();
    let mut fit = gls_origin(&p, &y, &points, |e| e.visibility, var0)?;
    // Weights built from the observed visibilities favour points that
    // fluctuated high, which biases the slope low once V is small.
    // Reweight with the fitted visibility V₀ e^{−βP} until it settles.
    for _ in 0..REWEIGHT_PASSES {
        let beta = fit.slope;
        let next = gls_origin(&p, &y, &points, |e| base.visibility * (-beta * e.power).exp(), var0)?;
        let settled = (next.slope - beta).abs() <= 1e-10 * beta.abs().max(1e-300);
        fit = next;
        if settled {
            break;
        }
    }
    Ok(fit)
}

const REWEIGHT_PASSES: usize = 20;

/// One generalized least-squares pass; `scale(e)` is the visibility the
/// relative error of point `e` refers to.
fn gls_origin(
    p: &[f64],
    y: &[f64],
    points: &[&VisibilityEstimate],
    scale: impl Fn(&VisibilityEstimate) -> f64,
    var0: f64,
) -> Result<OriginFit> {
    let d: Vec<f64> = points
        .iter()
        .map(|e| (e.visibility_se / scale(e)).powi(2).max(f64::MIN_POSITIVE))
        .collect();

    // uᵀC⁻¹v = Σ u v / d − σ₀² (Σ u/d)(Σ v/d) / (1 + σ₀² Σ 1/d)
    let s1: f64 = d.iter().map(|d| 1.0 / d).sum();
    let denom = 1.0 + var0 * s1;
    let quad = |u: &[f64], v: &[f64]| -> f64 {
        let direct: f64 = u.iter().zip(v).zip(&d).map(|((u, v), d)| u * v / d).sum();
        let su: f64 = u.iter().zip(&d).map(|(u, d)| u / d).sum();
        let sv: f64 = v.iter().zip(&d).map(|(v, d)| v / d).sum();
        direct - var0 * su * sv / denom
    };
    let info = quad(p, p);
    if !(info > 0.0) {
        return Err(Error::Numerical("degenerate regression design".into()));
    }
    let slope = quad(p, y) / info;
    let resid: Vec<f64> = y.iter().zip(p).map(|(y, p)| y - slope * p).collect();
    let chi2 = quad(&resid, &resid);
    let residuals = p
        .iter()
        .zip(&resid)
        .zip(&d)
        .map(|((p, r), d)| (*p, r / (d + var0).sqrt()))
        .collect();
    Ok(OriginFit {
        slope,
        slope_se: (1.0 / info).sqrt(),
        chi2,
        residuals,
        degrees_of_freedom: p.len() - 1,
    })
}

/// Two-sided 95% quantile: Student t for df ≥ 1, normal otherwise.
pub(crate) fn quantile95(df: usize) -> f64 {
    if df == 0 {
        Normal::standard().inverse_cdf(0.975)
    } else {
        StudentsT::new(0.0, 1.0, df as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975)
    }
}

/// σ_abs from ln(V₀/V) = 2 n₀(P): n₀ per watt follows the configured mean
/// velocity `v_bar`.
pub fn extract_cross_section(
    estimates: &[VisibilityEstimate],
    laser: &RecoilLaser,
    v_bar: f64,
) -> Result<CrossSectionResult> {
    let fit = log_reduction_fit(estimates)?;
    let per_sigma = 2.0 * physics::photon_number_coefficient(laser, v_bar)?;
    let sigma = fit.slope / per_sigma;
    let half = quantile95(fit.degrees_of_freedom) * fit.slope_se / per_sigma;
    let reduced_chi2 = if fit.degrees_of_freedom > 0 {
        fit.chi2 / fit.degrees_of_freedom as f64
    } else {
        0.0
    };
    let nonlinear = reduced_chi2 > NONLINEARITY_THRESHOLD;
    if nonlinear {
        log::warn!("reduced chi2 {reduced_chi2:.2}: ln(V0/V) is not linear in power (saturation or n0 > 1?)");
    }
    Ok(CrossSectionResult {
        sigma_abs: sigma,
        ci95: (sigma - half, sigma + half),
        slope: fit.slope,
        slope_se: fit.slope_se,
        reduced_chi2,
        residuals: fit.residuals,
        nonlinear,
        degrees_of_freedom: fit.degrees_of_freedom,
    })
}

/// Joint estimate of σ_abs and the fluorescence yield.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluorescenceResult {
    pub sigma_abs: f64,
    pub sigma_ci95: (f64, f64),
    pub p_fluo: f64,
    pub p_fluo_ci95: (f64, f64),
    /// True when the solved yield was negative and clamped to 0.
    pub clamped: bool,
    pub half: CrossSectionResult,
    pub full: CrossSectionResult,
}

/// Two-shift protocol. With n₀' the photon number per watt and P the
/// yield, the slopes are 2n₀' − P n₀'(1 − γ_half) at s = d/2 and
/// P n₀'(1 − γ_full) at s = d.
pub fn extract_fluorescence(
    estimates_half: &[VisibilityEstimate],
    estimates_full: &[VisibilityEstimate],
    gamma_half: f64,
    gamma_full: f64,
    laser: &RecoilLaser,
    v_bar: f64,
) -> Result<FluorescenceResult> {
    if (1.0 - gamma_full).abs() < 1e-12 {
        return Err(Error::Unidentifiable(
            "gamma at the full-period shift equals 1: fluorescence leaves no trace".into(),
        ));
    }
    let half = extract_cross_section(estimates_half, laser, v_bar)?;
    let full = extract_cross_section(estimates_full, laser, v_bar)?;
    let per_sigma = physics::photon_number_coefficient(laser, v_bar)?;

    let (sh, sf) = (half.slope, full.slope);
    let (vh, vf) = (half.slope_se.powi(2), full.slope_se.powi(2));
    let lh = 1.0 - gamma_half;
    let lf = 1.0 - gamma_full;

    let mut pn = sf / lf;
    let mut clamped = false;
    if pn < 0.0 {
        log::warn!("solved fluorescence yield is negative; clamping to 0");
        pn = 0.0;
        clamped = true;
    }
    let n_prime = 0.5 * (sh + pn * lh);
    if !(n_prime > 0.0) {
        return Err(Error::Numerical("corrected photon number is not positive".into()));
    }
    let p_fluo = pn / n_prime;

    // gradients with respect to (sh, sf)
    let dn = (0.5, if clamped { 0.0 } else { 0.5 * lh / lf });
    let dp = (
        -p_fluo * dn.0 / n_prime,
        if clamped { 0.0 } else { 1.0 / (lf * n_prime) } - p_fluo * dn.1 / n_prime,
    );
    let n_se = (dn.0 * dn.0 * vh + dn.1 * dn.1 * vf).sqrt();
    let p_se = (dp.0 * dp.0 * vh + dp.1 * dp.1 * vf).sqrt();
    let q = quantile95(half.degrees_of_freedom.min(full.degrees_of_freedom));

    let sigma = n_prime / per_sigma;
    let sigma_half = q * n_se / per_sigma;
    Ok(FluorescenceResult {
        sigma_abs: sigma,
        sigma_ci95: (sigma - sigma_half, sigma + sigma_half),
        p_fluo,
        p_fluo_ci95: (p_fluo - q * p_se, p_fluo + q * p_se),
        clamped,
        half,
        full,
    })
}
