// summary keys carry their units
#![allow(non_snake_case)]

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use recoilspec_core::beam::BeamAverager;
use recoilspec_core::config::{parse_spectrum, ProtocolSection, Scenario};
use recoilspec_core::estimation::{self, CrossSectionResult, FluorescenceResult, VisibilityEstimate};
use recoilspec_core::montecarlo::{self, ExperimentRecord};
use recoilspec_core::output::{self, CsvTable, Manifest};
use recoilspec_core::physics::{self, SpectrumTable};
use recoilspec_core::recoil::{self, decoherence_gamma};
use recoilspec_core::talbot;
use recoilspec_core::units::m2_to_angstrom2;
use recoilspec_core::Error;

use crate::{Mode, Shift};

fn load(path: &Path) -> Result<Scenario> {
    let scenario = Scenario::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(scenario)
}

fn bad_input(field: &str, reason: impl Into<String>) -> anyhow::Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
    .into()
}

fn apply_overrides(section: &mut ProtocolSection, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| bad_input("--protocol", format!("expected KEY=VALUE, got `{item}`")))?;
        let field = format!("protocol.{}", key.trim());
        let value = value.trim();
        let int = || value.parse::<u64>().map_err(|e| bad_input(&field, e.to_string()));
        let float = || value.parse::<f64>().map_err(|e| bad_input(&field, e.to_string()));
        match key.trim() {
            "power_steps" => section.power_steps = int()? as usize,
            "max_power_W" => section.max_power_W = float()?,
            "positions_per_scan" => section.positions_per_scan = int()? as usize,
            "scan_span_periods" => section.scan_span_periods = float()?,
            "molecules_per_sample" => section.molecules_per_sample = int()?,
            _ => return Err(bad_input(&field, "unknown protocol key")),
        }
    }
    Ok(())
}

fn with_protocol(scenario: Scenario, overrides: &[String]) -> Result<Scenario> {
    if overrides.is_empty() {
        return Ok(scenario);
    }
    let mut file = scenario.file.clone();
    apply_overrides(&mut file.protocol, overrides)?;
    Ok(Scenario::resolve_with_spectrum(file, scenario.spectrum_text().map(str::to_owned))?)
}

/// Recoil shift at the mean velocity, in periods.
fn shift_periods(scenario: &Scenario) -> Result<f64> {
    let laser = scenario.recoil_laser()?;
    let lambda_db = physics::de_broglie(&scenario.molecule, scenario.velocity.mean)?;
    Ok(physics::recoil_shift(lambda_db, laser.wavelength, laser.distance) / scenario.config.period)
}

pub fn pattern(
    config: &Path,
    velocity: Option<f64>,
    power: Option<f64>,
    periods: f64,
    points: usize,
    out: &Path,
) -> Result<()> {
    let scenario = load(config)?;
    if !(periods > 0.0) || points < 2 {
        return Err(bad_input("--periods/--points", "need a positive span and at least 2 points"));
    }
    let mut model = scenario.velocity;
    if let Some(v) = velocity {
        model.mean = v;
        model.validate()?;
    }
    let power = power.unwrap_or_else(|| scenario.config.recoil_laser.map_or(0.0, |l| l.power));
    if power < 0.0 {
        return Err(bad_input("--power", "must be non-negative"));
    }
    let beam = BeamAverager::new(&scenario.config, &scenario.molecule, &model, None)?;
    let d = scenario.config.period;
    let positions: Vec<f64> = (0..points).map(|k| k as f64 * periods * d / (points - 1) as f64).collect();
    let f3 = scenario.config.open_fraction_g3;
    let unperturbed = beam.unperturbed()?;
    if unperturbed.truncated {
        // binary masks give kinked patterns whose harmonics fall off slowly
        log::info!(
            "pattern series stopped at order {} with relative tail {:.1e}",
            unperturbed.order_max(),
            unperturbed.tail_ratio()
        );
    }
    let base = talbot::detector_signal(&unperturbed, f3, &positions);

    let mut columns = vec!["position_m", "signal_without_laser"];
    let shifted = if power > 0.0 {
        columns.push("signal_with_laser");
        Some(talbot::detector_signal(&beam.at_power(power)?, f3, &positions))
    } else {
        None
    };
    let mut table = CsvTable::new(&columns);
    table
        .comment("recoilspec pattern: transmitted flux per incident flux")
        .comment(format!("config_sha256 = {}", scenario.hash()))
        .comment(format!("mean_velocity_m_per_s = {}", model.mean))
        .comment(format!("relative_width = {}", model.relative_width))
        .comment(format!("recoil_power_W = {power}"))
        .comment(format!(
            "visibility_without_laser = {}",
            talbot::sinusoidal_visibility(&unperturbed, f3)?
        ));
    for (i, x) in positions.iter().enumerate() {
        let mut row = vec![*x, base[i]];
        if let Some(s) = &shifted {
            row.push(s[i]);
        }
        table.push(row);
    }
    table.write(out).with_context(|| format!("writing {}", out.display()))?;
    println!("pattern: {} points over {periods} periods -> {}", points, out.display());
    Ok(())
}

pub fn scan(config: &Path, seed: u64, shift: Shift, overrides: &[String], out: &Path) -> Result<()> {
    let mut scenario = with_protocol(load(config)?, overrides)?;
    scenario = match shift {
        Shift::Configured => scenario,
        Shift::Half => scenario.with_recoil_distance(scenario.distance_for_shift(0.5)?)?,
        Shift::Full => scenario.with_recoil_distance(scenario.distance_for_shift(1.0)?)?,
    };
    scenario.recoil_laser()?;
    let protocol = scenario.protocol(seed);
    let record = montecarlo::run_experiment(&protocol, &scenario.config, &scenario.molecule, &scenario.velocity)?;
    let manifest = output::write_record(out, &record, &scenario, shift_periods(&scenario)?)
        .with_context(|| format!("writing record {}", out.display()))?;
    println!(
        "scan: {} power steps, seed {seed}, shift {:.4} d -> {}",
        manifest.steps.len(),
        manifest.shift_periods,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct StepSummary {
    power_W: f64,
    visibility: f64,
    visibility_se: f64,
    phase_rad: f64,
    mean_level: f64,
}

#[derive(Serialize)]
struct RegressionSummary {
    sigma_abs_A2: f64,
    ci95_A2: (f64, f64),
    slope_per_W: f64,
    slope_se_per_W: f64,
    reduced_chi2: f64,
    degrees_of_freedom: usize,
    nonlinear: bool,
    standardized_residuals: Vec<(f64, f64)>,
}

impl From<&CrossSectionResult> for RegressionSummary {
    fn from(r: &CrossSectionResult) -> Self {
        RegressionSummary {
            sigma_abs_A2: m2_to_angstrom2(r.sigma_abs),
            ci95_A2: (m2_to_angstrom2(r.ci95.0), m2_to_angstrom2(r.ci95.1)),
            slope_per_W: r.slope,
            slope_se_per_W: r.slope_se,
            reduced_chi2: r.reduced_chi2,
            degrees_of_freedom: r.degrees_of_freedom,
            nonlinear: r.nonlinear,
            standardized_residuals: r.residuals.clone(),
        }
    }
}

#[derive(Serialize)]
struct PlainSummary {
    mode: &'static str,
    config_sha256: String,
    seed: u64,
    mean_velocity_m_per_s: f64,
    shift_periods: f64,
    steps: Vec<StepSummary>,
    regression: RegressionSummary,
}

#[derive(Serialize)]
struct FluorescenceSummary {
    mode: &'static str,
    config_sha256_half: String,
    config_sha256_full: String,
    gamma_half: f64,
    gamma_full: f64,
    sigma_abs_A2: f64,
    sigma_ci95_A2: (f64, f64),
    p_fluo: f64,
    p_fluo_ci95: (f64, f64),
    clamped: bool,
    half: RegressionSummary,
    full: RegressionSummary,
}

fn fit_record(record: &mut ExperimentRecord) -> Result<Vec<VisibilityEstimate>> {
    Ok(record.fit_visibilities()?)
}

fn step_summaries(fits: &[VisibilityEstimate]) -> Vec<StepSummary> {
    fits.iter()
        .map(|f| StepSummary {
            power_W: f.power,
            visibility: f.visibility,
            visibility_se: f.visibility_se,
            phase_rad: f.phase,
            mean_level: f.mean_level,
        })
        .collect()
}

/// Records must come from the same scenario up to the laser position.
fn check_pair(half: &Manifest, full: &Manifest) -> Result<()> {
    let mut a = half.scenario.clone();
    let mut b = full.scenario.clone();
    if let (Some(la), Some(lb)) = (a.recoil_laser.as_mut(), b.recoil_laser.as_mut()) {
        la.distance_cm = 0.0;
        lb.distance_cm = 0.0;
    }
    if a != b || half.protocol.power_steps != full.protocol.power_steps {
        return Err(Error::Format("half- and full-shift records come from different scenarios".into()).into());
    }
    Ok(())
}

pub fn extract(
    record_dir: &Path,
    mode: Mode,
    full_dir: Option<&Path>,
    spectrum: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let (manifest, mut record) =
        output::read_record(record_dir).with_context(|| format!("reading {}", record_dir.display()))?;
    let scenario = manifest.scenario()?;
    let laser = scenario.recoil_laser()?;
    let v_bar = manifest.mean_velocity_m_per_s;
    let fits = fit_record(&mut record)?;

    match mode {
        Mode::Plain => {
            let result = estimation::extract_cross_section(&fits, &laser, v_bar)?;
            let summary = PlainSummary {
                mode: "plain",
                config_sha256: manifest.config_sha256.clone(),
                seed: manifest.seed,
                mean_velocity_m_per_s: v_bar,
                shift_periods: manifest.shift_periods,
                steps: step_summaries(&fits),
                regression: (&result).into(),
            };
            let path = out.map_or_else(|| record_dir.join("summary.json"), Path::to_path_buf);
            output::write_json(&path, &summary)?;
            println!(
                "extract: sigma_abs = {:.4} A^2, 95% CI [{:.4}, {:.4}]{} -> {}",
                summary.regression.sigma_abs_A2,
                summary.regression.ci95_A2.0,
                summary.regression.ci95_A2.1,
                if result.nonlinear { " (nonlinear)" } else { "" },
                path.display()
            );
        }
        Mode::Fluorescence => {
            let full_dir = full_dir.ok_or_else(|| bad_input("--full", "fluorescence mode needs the full-shift record"))?;
            let (full_manifest, mut full_record) =
                output::read_record(full_dir).with_context(|| format!("reading {}", full_dir.display()))?;
            full_manifest.scenario()?;
            check_pair(&manifest, &full_manifest)?;
            let table: SpectrumTable = match spectrum {
                Some(p) => parse_spectrum(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
                None => scenario
                    .spectrum()
                    .cloned()
                    .ok_or_else(|| bad_input("--spectrum", "no spectrum given or stored with the record"))?,
            };
            // γ of the first harmonic: argument λ_L s/d
            let gamma_half = decoherence_gamma(&table, laser.wavelength * manifest.shift_periods);
            let gamma_full = decoherence_gamma(&table, laser.wavelength * full_manifest.shift_periods);
            let full_fits = fit_record(&mut full_record)?;
            let r: FluorescenceResult =
                estimation::extract_fluorescence(&fits, &full_fits, gamma_half, gamma_full, &laser, v_bar)?;
            let summary = FluorescenceSummary {
                mode: "fluorescence",
                config_sha256_half: manifest.config_sha256.clone(),
                config_sha256_full: full_manifest.config_sha256.clone(),
                gamma_half,
                gamma_full,
                sigma_abs_A2: m2_to_angstrom2(r.sigma_abs),
                sigma_ci95_A2: (m2_to_angstrom2(r.sigma_ci95.0), m2_to_angstrom2(r.sigma_ci95.1)),
                p_fluo: r.p_fluo,
                p_fluo_ci95: r.p_fluo_ci95,
                clamped: r.clamped,
                half: (&r.half).into(),
                full: (&r.full).into(),
            };
            let path = out.map_or_else(|| record_dir.join("summary_fluorescence.json"), Path::to_path_buf);
            output::write_json(&path, &summary)?;
            println!(
                "extract: sigma_abs = {:.4} A^2 [{:.4}, {:.4}], p_fluo = {:.4} [{:.4}, {:.4}] -> {}",
                summary.sigma_abs_A2,
                summary.sigma_ci95_A2.0,
                summary.sigma_ci95_A2.1,
                summary.p_fluo,
                summary.p_fluo_ci95.0,
                summary.p_fluo_ci95.1,
                path.display()
            );
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepSummary {
    config_sha256: String,
    seed: u64,
    rows: Vec<SweepSummaryRow>,
}

#[derive(Serialize)]
struct SweepSummaryRow {
    relative_width: f64,
    seed: u64,
    regression: RegressionSummary,
}

pub fn sweep(config: &Path, widths: &[f64], seed: u64, overrides: &[String], out: &Path) -> Result<()> {
    let scenario = with_protocol(load(config)?, overrides)?;
    scenario.recoil_laser()?;
    for &w in widths {
        scenario.velocity.with_width(w).validate()?;
    }
    let rows = montecarlo::sweep_velocity_spread(
        widths,
        &scenario.protocol(seed),
        &scenario.config,
        &scenario.molecule,
        &scenario.velocity,
    )?;
    let hash = scenario.hash();
    let mut table = CsvTable::new(&["width", "sigma_A2", "ci_low_A2", "ci_high_A2"]);
    table
        .comment("recoilspec sweep: recovered absorption cross section, 95% confidence interval")
        .comment(format!("config_sha256 = {hash}"))
        .comment(format!("seed = {seed}"));
    for row in &rows {
        let r = &row.result;
        table.push(vec![
            row.width,
            m2_to_angstrom2(r.sigma_abs),
            m2_to_angstrom2(r.ci95.0),
            m2_to_angstrom2(r.ci95.1),
        ]);
    }
    table.write(out).with_context(|| format!("writing {}", out.display()))?;
    let summary = SweepSummary {
        config_sha256: hash,
        seed,
        rows: rows
            .iter()
            .map(|r| SweepSummaryRow {
                relative_width: r.width,
                seed: r.seed,
                regression: (&r.result).into(),
            })
            .collect(),
    };
    output::write_json(&out.with_extension("json"), &summary)?;
    for row in &table.rows {
        println!("width {:.4}: sigma = {:.3} A^2 [{:.3}, {:.3}]", row[0], row[1], row[2], row[3]);
    }
    Ok(())
}

pub fn fluo_curve(
    config: &Path,
    yields: &[f64],
    spectrum: Option<&Path>,
    max_power: f64,
    points: usize,
    out: &Path,
) -> Result<()> {
    let scenario = load(config)?;
    let laser = scenario.recoil_laser()?;
    if !(max_power > 0.0) || points < 2 {
        return Err(bad_input("--max-power/--points", "need a positive power and at least 2 points"));
    }
    let table = match spectrum {
        Some(p) => std::sync::Arc::new(parse_spectrum(
            &std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?),
        None => scenario
            .molecule
            .fluorescence_spectrum
            .clone()
            .ok_or_else(|| bad_input("molecule.fluorescence_spectrum", "fluo-curve needs a spectrum"))?,
    };
    let v = scenario.velocity.mean;
    let d = scenario.config.period;
    let names: Vec<String> = yields.iter().map(|p| format!("ln_inv_R_pfluo_{p}")).collect();
    let mut columns = vec!["power_W"];
    columns.extend(names.iter().map(String::as_str));
    let mut out_table = CsvTable::new(&columns);
    out_table
        .comment("recoilspec fluo-curve: noise-free ln(1/R) at the mean velocity")
        .comment(format!("config_sha256 = {}", scenario.hash()))
        .comment(format!("shift_periods = {}", shift_periods(&scenario)?));
    let mut slopes = Vec::new();
    for k in 0..points {
        let power = max_power * k as f64 / (points - 1) as f64;
        let mut row = vec![power];
        for &p in yields {
            if !(0.0..=1.0).contains(&p) {
                return Err(bad_input("--p-fluo", "yields must lie in [0, 1]"));
            }
            let mut molecule = scenario.molecule.clone();
            molecule.p_fluo = p;
            molecule.fluorescence_spectrum = Some(table.clone());
            row.push(recoil::ln_inverse_reduction(&molecule, &laser.with_power(power), d, v)?);
        }
        if k == points - 1 {
            slopes = row[1..].iter().map(|y| y / power).collect();
        }
        out_table.push(row);
    }
    out_table.write(out).with_context(|| format!("writing {}", out.display()))?;
    for (p, s) in yields.iter().zip(&slopes) {
        let rel = s / slopes[0];
        println!("p_fluo {p}: slope {s:.5} per W (ratio to first curve {rel:.4})");
    }
    Ok(())
}
