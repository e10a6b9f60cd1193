//! The four CLI verbs: equilibrium, simulate, compare and spectrum.

use std::path::{Path, PathBuf};

use maglev_nmpc::analysis::{
    comfort_metrics, histogram, rmse, welch_spectrum, ComfortMetrics, Spectrum, SpectrumParams,
};
use maglev_nmpc::model::{solve_equilibrium, ModelKind};
use maglev_nmpc::simulation::{run_comparison, run_closed_loop, RideLog};

use crate::config::{AnalysisConfig, ConfigDocument};
use crate::csv::{write_ride_log, write_spectrum, write_table};
use crate::svg::{grouped_bar_chart, line_chart, BarSeries, Series};
use crate::CliError;

/// Worker cap for comparison runs: MAGLEV_NMPC_THREADS, else the number of
/// scenarios capped at the machine parallelism.
pub fn worker_count(n_scenarios: usize) -> usize {
    if let Ok(v) = std::env::var("MAGLEV_NMPC_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            return n.clamp(1, 64);
        }
    }
    let hw = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    n_scenarios.clamp(1, hw)
}

pub fn cmd_equilibrium(config: &ConfigDocument, json: bool) -> Result<String, CliError> {
    let mech = config.mechanical_params()?;
    let magnet = config.magnet_model(Path::new("."))?;
    let eq = solve_equilibrium(&mech, &magnet, ModelKind::TwoMass)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let params = magnet.params();
    let force = magnet
        .force(params.s_nom, eq.i_nom)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let weight = (mech.m1 + mech.m2) * mech.g;
    let residual = force - weight;
    let current_residual = magnet
        .current_derivative(params.s_nom, 0.0, eq.i_nom, eq.u_nom)
        .map_err(|e| CliError::Config(e.to_string()))?;
    if json {
        let value = serde_json::json!({
            "i_nom_a": eq.i_nom,
            "u_nom_v": eq.u_nom,
            "dz2_nom_m": eq.dz2_nom,
            "force_residual_n": residual,
            "current_residual_a_per_s": current_residual,
        });
        Ok(format!("{}", serde_json::to_string_pretty(&value).expect("json")))
    } else {
        Ok(format!(
            "equilibrium of the two-mass plant\n\
             i_nom   = {:.6} A\n\
             u_nom   = {:.6} V\n\
             dz2_nom = {:.6e} m\n\
             force balance residual   = {:.3e} N\n\
             current steady-state residual = {:.3e} A/s",
            eq.i_nom, eq.u_nom, eq.dz2_nom, residual, current_residual
        ))
    }
}

/// Everything the reports need from one run.
pub struct RunReport {
    pub log: RideLog,
    pub spectrum: Spectrum,
    pub comfort: ComfortMetrics,
    pub rmse_ds: f64,
    pub max_abs_ds: f64,
    pub max_abs_a2: f64,
}

pub fn analyze(log: RideLog, analysis: &AnalysisConfig) -> Result<RunReport, CliError> {
    let sample_rate = 1.0 / log.plant_step;
    // Shorten the segment if a tiny run cannot fill the configured one.
    let mut segment_len = analysis.segment_len;
    while segment_len > 2 && segment_len > log.a2.len() {
        segment_len /= 2;
    }
    let spectrum = welch_spectrum(&log.a2, sample_rate, segment_len, analysis.overlap)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let params = SpectrumParams {
        segment_len,
        overlap: analysis.overlap,
    };
    let band = (
        analysis.band.0,
        analysis.band.1.min(sample_rate / 2.0 - spectrum.resolution),
    );
    let comfort =
        comfort_metrics(&log, band, &params).map_err(|e| CliError::Runtime(e.to_string()))?;
    let rmse_ds = rmse(&log.ds, 0.0).map_err(|e| CliError::Runtime(e.to_string()))?;
    let max_abs_ds = log.ds.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let max_abs_a2 = log.a2.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(RunReport {
        log,
        spectrum,
        comfort,
        rmse_ds,
        max_abs_ds,
        max_abs_a2,
    })
}

fn metrics_row(report: &RunReport) -> Vec<String> {
    vec![
        report.log.controller_name.clone(),
        format!("{}", report.rmse_ds),
        format!("{}", report.max_abs_ds),
        format!("{}", report.max_abs_a2),
        format!("{}", report.comfort.band_rms),
        report
            .comfort
            .peak_frequency
            .map(|f| format!("{f}"))
            .unwrap_or_default(),
        format!("{}", report.comfort.peak_amplitude),
        format!("{}", report.log.mean_solve_time() * 1e3),
        format!("{}", report.log.mean_sqp_iterations()),
        format!("{}", report.log.converged_fraction()),
        report
            .log
            .failure
            .as_ref()
            .map(|f| format!("{} at {:.3} s", f.reason, f.time))
            .unwrap_or_default(),
    ]
}

const METRICS_HEADER: &str = "controller,rmse_ds_m,max_abs_ds_m,max_abs_a2_ms2,band_rms_a2_ms2,peak_freq_hz,peak_amp_ms2,mean_solve_ms,mean_sqp_iterations,converged_fraction,failure";

fn write_run_outputs(
    out_dir: &Path,
    suffix: &str,
    report: &RunReport,
    analysis: &AnalysisConfig,
) -> Result<(), CliError> {
    write_ride_log(&out_dir.join(format!("log{suffix}.csv")), &report.log)?;
    write_spectrum(&out_dir.join(format!("spectrum{suffix}.csv")), &report.spectrum)?;

    let gap_points: Vec<(f64, f64)> = report
        .log
        .time
        .iter()
        .zip(report.log.ds.iter())
        .map(|(&t, &d)| (t, d * 1e3))
        .collect();
    let gap_svg = line_chart(
        &format!("Air gap deviation — {}", report.log.controller_name),
        "time [s]",
        "Δs [mm]",
        &[Series {
            label: &report.log.controller_name,
            points: &gap_points,
        }],
        false,
    );
    std::fs::write(out_dir.join(format!("airgap{suffix}.svg")), gap_svg)?;

    let spec_points: Vec<(f64, f64)> = report
        .spectrum
        .frequencies
        .iter()
        .zip(report.spectrum.amplitude.iter())
        .filter(|(f, _)| **f > 0.0 && **f <= 50.0)
        .map(|(&f, &a)| (f, a))
        .collect();
    let spec_svg = line_chart(
        &format!("Car-body acceleration spectrum — {}", report.log.controller_name),
        "frequency [Hz]",
        "amplitude [m/s² RMS]",
        &[Series {
            label: &report.log.controller_name,
            points: &spec_points,
        }],
        true,
    );
    std::fs::write(out_dir.join(format!("spectrum{suffix}.svg")), spec_svg)?;

    let range = report.max_abs_a2.max(1e-6);
    let hist = histogram(&report.log.a2, analysis.histogram_bins, (-range, range))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let centers: Vec<f64> = hist
        .edges
        .windows(2)
        .map(|w| 0.5 * (w[0] + w[1]))
        .collect();
    let values: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    let hist_svg = grouped_bar_chart(
        &format!("Car-body acceleration histogram — {}", report.log.controller_name),
        "z̈2 [m/s²]",
        "samples",
        &centers,
        &[BarSeries {
            label: &report.log.controller_name,
            values: &values,
        }],
    );
    std::fs::write(out_dir.join(format!("histogram{suffix}.svg")), hist_svg)?;
    Ok(())
}

pub fn cmd_simulate(
    config: &ConfigDocument,
    config_dir: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    json: bool,
) -> Result<(String, bool), CliError> {
    std::fs::create_dir_all(out_dir)?;
    let name = config.scenario_controller();
    let scenario = config.scenario(&name, config_dir, seed)?;
    let analysis = config.analysis()?;
    let log = run_closed_loop(&scenario).map_err(|e| CliError::Runtime(e.to_string()))?;
    let failed = log.failure.is_some();
    let report = analyze(log, &analysis)?;
    write_run_outputs(out_dir, "", &report, &analysis)?;
    write_table(
        &out_dir.join("metrics.csv"),
        METRICS_HEADER,
        &[metrics_row(&report)],
    )?;

    let summary = if json {
        let value = serde_json::json!({
            "controller": report.log.controller_name,
            "rmse_ds_m": report.rmse_ds,
            "max_abs_ds_m": report.max_abs_ds,
            "max_abs_a2_ms2": report.max_abs_a2,
            "band_rms_a2_ms2": report.comfort.band_rms,
            "mean_solve_ms": report.log.mean_solve_time() * 1e3,
            "failure": report.log.failure.as_ref().map(|f| f.reason.clone()),
        });
        serde_json::to_string_pretty(&value).expect("json")
    } else {
        let mut s = format!(
            "{}: rmse(Δs) = {:.4e} m, max|z̈2| = {:.4} m/s², band rms(z̈2) = {:.4e} m/s², mean solve = {:.3} ms",
            report.log.controller_name,
            report.rmse_ds,
            report.max_abs_a2,
            report.comfort.band_rms,
            report.log.mean_solve_time() * 1e3,
        );
        if let Some(f) = &report.log.failure {
            s.push_str(&format!("\nlevitation failure at {:.3} s: {}", f.time, f.reason));
        }
        s
    };
    Ok((summary, failed))
}

pub fn cmd_compare(
    config: &ConfigDocument,
    config_dir: &Path,
    controllers: &[String],
    out_dir: &Path,
    seed: Option<u64>,
    json: bool,
) -> Result<(String, bool), CliError> {
    if controllers.is_empty() {
        return Err(CliError::Config("no controllers requested".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let analysis = config.analysis()?;
    // One scenario per controller over the identical guideway profile.
    let scenarios: Vec<_> = controllers
        .iter()
        .map(|name| config.scenario(name, config_dir, seed))
        .collect::<Result<_, _>>()?;

    let workers = worker_count(scenarios.len());
    let results = run_comparison(&scenarios, workers);
    let mut reports = Vec::new();
    let mut any_failure = false;
    for result in results {
        let log = result.map_err(|e| CliError::Runtime(e.to_string()))?;
        any_failure |= log.failure.is_some();
        reports.push(analyze(log, &analysis)?);
    }

    let rows: Vec<Vec<String>> = reports.iter().map(metrics_row).collect();
    write_table(&out_dir.join("metrics.csv"), METRICS_HEADER, &rows)?;
    for report in &reports {
        write_run_outputs(
            out_dir,
            &format!("_{}", report.log.controller_name),
            report,
            &analysis,
        )?;
    }

    // Overlaid spectra.
    let spec_points: Vec<Vec<(f64, f64)>> = reports
        .iter()
        .map(|r| {
            r.spectrum
                .frequencies
                .iter()
                .zip(r.spectrum.amplitude.iter())
                .filter(|(f, _)| **f > 0.0 && **f <= 50.0)
                .map(|(&f, &a)| (f, a))
                .collect()
        })
        .collect();
    let spec_series: Vec<Series> = reports
        .iter()
        .zip(spec_points.iter())
        .map(|(r, pts)| Series {
            label: &r.log.controller_name,
            points: pts,
        })
        .collect();
    std::fs::write(
        out_dir.join("spectra.svg"),
        line_chart(
            "Car-body acceleration spectra",
            "frequency [Hz]",
            "amplitude [m/s² RMS]",
            &spec_series,
            true,
        ),
    )?;

    // Side-by-side histograms over a shared range.
    let range = reports
        .iter()
        .map(|r| r.max_abs_a2)
        .fold(1e-6f64, f64::max);
    let mut bar_values = Vec::new();
    let mut centers = Vec::new();
    for report in &reports {
        let hist = histogram(&report.log.a2, analysis.histogram_bins, (-range, range))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        centers = hist.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        bar_values.push(hist.counts.iter().map(|&c| c as f64).collect::<Vec<f64>>());
    }
    let bar_series: Vec<BarSeries> = reports
        .iter()
        .zip(bar_values.iter())
        .map(|(r, v)| BarSeries {
            label: &r.log.controller_name,
            values: v,
        })
        .collect();
    std::fs::write(
        out_dir.join("histograms.svg"),
        grouped_bar_chart(
            "Car-body acceleration histograms",
            "z̈2 [m/s²]",
            "samples",
            &centers,
            &bar_series,
        ),
    )?;

    // Ratio table against the first requested controller.
    let mut ratio_rows = Vec::new();
    if reports.len() > 1 {
        let base = &reports[0];
        for report in &reports[1..] {
            ratio_rows.push(vec![
                format!("{}_over_{}", report.log.controller_name, base.log.controller_name),
                format!("{}", report.comfort.band_rms / base.comfort.band_rms),
                format!("{}", report.rmse_ds / base.rmse_ds),
            ]);
        }
        write_table(
            &out_dir.join("ratios.csv"),
            "pair,band_rms_a2_ratio,rmse_ds_ratio",
            &ratio_rows,
        )?;
    }

    let summary = if json {
        let entries: Vec<serde_json::Value> = reports
            .iter()
            .map(|r| {
                serde_json::json!({
                    "controller": r.log.controller_name,
                    "rmse_ds_m": r.rmse_ds,
                    "band_rms_a2_ms2": r.comfort.band_rms,
                    "max_abs_a2_ms2": r.max_abs_a2,
                    "mean_solve_ms": r.log.mean_solve_time() * 1e3,
                    "failure": r.log.failure.as_ref().map(|f| f.reason.clone()),
                })
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({ "runs": entries })).expect("json")
    } else {
        let mut s = format!(
            "{:<6} {:>12} {:>14} {:>14} {:>12}\n",
            "ctrl", "rmse(Δs) m", "bandRMS m/s²", "max|z̈2| m/s²", "solve ms"
        );
        for r in &reports {
            s.push_str(&format!(
                "{:<6} {:>12.4e} {:>14.4e} {:>14.4} {:>12.3}{}\n",
                r.log.controller_name,
                r.rmse_ds,
                r.comfort.band_rms,
                r.max_abs_a2,
                r.log.mean_solve_time() * 1e3,
                r.log
                    .failure
                    .as_ref()
                    .map(|f| format!("  FAILED {:.2}s", f.time))
                    .unwrap_or_default(),
            ));
        }
        for row in &ratio_rows {
            s.push_str(&format!(
                "{}: band rms ratio {}, rmse ratio {}\n",
                row[0],
                &row[1][..row[1].len().min(6)],
                &row[2][..row[2].len().min(6)]
            ));
        }
        s.trim_end().to_string()
    };
    Ok((summary, any_failure))
}

pub fn cmd_spectrum(
    config: &ConfigDocument,
    log_path: &Path,
    out_dir: &Path,
) -> Result<String, CliError> {
    std::fs::create_dir_all(out_dir)?;
    let log = crate::csv::read_ride_log(log_path)?;
    let analysis = config.analysis()?;
    let report = analyze(log, &analysis)?;
    let stem: PathBuf = log_path
        .file_stem()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("log"));
    let suffix = format!("_{}", stem.display());
    write_spectrum(&out_dir.join(format!("spectrum{suffix}.csv")), &report.spectrum)?;
    let spec_points: Vec<(f64, f64)> = report
        .spectrum
        .frequencies
        .iter()
        .zip(report.spectrum.amplitude.iter())
        .filter(|(f, _)| **f > 0.0 && **f <= 50.0)
        .map(|(&f, &a)| (f, a))
        .collect();
    std::fs::write(
        out_dir.join(format!("spectrum{suffix}.svg")),
        line_chart(
            "Car-body acceleration spectrum",
            "frequency [Hz]",
            "amplitude [m/s² RMS]",
            &[Series {
                label: "z̈2",
                points: &spec_points,
            }],
            true,
        ),
    )?;
    Ok(format!(
        "band rms(z̈2) = {:.4e} m/s² over [{}, {}] Hz, peak {:.4e} m/s²{}",
        report.comfort.band_rms,
        analysis.band.0,
        analysis.band.1,
        report.comfort.peak_amplitude,
        report
            .comfort
            .peak_frequency
            .map(|f| format!(" at {f:.3} Hz"))
            .unwrap_or_default(),
    ))
}
