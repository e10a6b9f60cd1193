//! CSV emission and parsing for ride logs, metrics and spectra.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! re-parsing a file reproduces the in-memory values bit for bit.

use std::path::Path;

use maglev_nmpc::analysis::Spectrum;
use maglev_nmpc::simulation::{RideLog, SolveSample};

use crate::CliError;

pub const RIDE_LOG_HEADER: &str = "t,s,ds,z2,a1,a2,I,U,dgw,sqp_iters,kkt,solve_ms";

/// Writes the canonical ride-log CSV: one row per plant step, solver
/// statistics repeated over the rows of their controller sample.
pub fn write_ride_log(path: &Path, log: &RideLog) -> Result<(), CliError> {
    let n_sub = log.substeps_per_sample().max(1);
    let mut out = String::with_capacity(log.len() * 96);
    out.push_str(RIDE_LOG_HEADER);
    out.push('\n');
    for i in 0..log.len() {
        let sample = i / n_sub;
        let solve = log.solve.get(sample);
        let (iters, kkt, ms) = match solve {
            Some(s) => (s.sqp_iterations, s.kkt, s.solve_time * 1e3),
            None => (0, 0.0, 0.0),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            log.time[i],
            log.gap[i],
            log.ds[i],
            log.z2[i],
            log.a1[i],
            log.a2[i],
            log.current[i],
            log.voltage[i],
            log.dgw[i],
            iters,
            kkt,
            ms,
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a canonical ride-log CSV back into a `RideLog`. Velocity series
/// and the nominal point are not part of the file format and come back
/// zeroed; everything the analysis needs is restored exactly.
pub fn read_ride_log(path: &Path) -> Result<RideLog, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config(format!("{}: empty log file", path.display())))?;
    if header.trim() != RIDE_LOG_HEADER {
        return Err(CliError::Config(format!(
            "{}: unexpected header `{}`",
            path.display(),
            header
        )));
    }
    let mut log = RideLog {
        plant_step: 0.0,
        sampling_time: 0.0,
        s_nom: 0.0,
        i_nom: 0.0,
        u_nom: 0.0,
        controller_name: String::new(),
        time: Vec::new(),
        gap: Vec::new(),
        ds: Vec::new(),
        z2: Vec::new(),
        v1: Vec::new(),
        v2: Vec::new(),
        a1: Vec::new(),
        a2: Vec::new(),
        current: Vec::new(),
        voltage: Vec::new(),
        u_dev: Vec::new(),
        dgw: Vec::new(),
        solve: Vec::new(),
        failure: None,
    };
    let mut last_solve: Option<(usize, f64, f64)> = None;
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(CliError::Config(format!(
                "{}: row {} has {} fields, expected 12",
                path.display(),
                idx + 2,
                fields.len()
            )));
        }
        let num = |k: usize| -> Result<f64, CliError> {
            fields[k].parse::<f64>().map_err(|_| {
                CliError::Config(format!(
                    "{}: row {} field {} is not a number",
                    path.display(),
                    idx + 2,
                    k + 1
                ))
            })
        };
        log.time.push(num(0)?);
        log.gap.push(num(1)?);
        log.ds.push(num(2)?);
        log.z2.push(num(3)?);
        log.a1.push(num(4)?);
        log.a2.push(num(5)?);
        log.current.push(num(6)?);
        log.voltage.push(num(7)?);
        log.dgw.push(num(8)?);
        log.v1.push(0.0);
        log.v2.push(0.0);
        log.u_dev.push(0.0);
        let solve = (num(9)? as usize, num(10)?, num(11)? / 1e3);
        if last_solve != Some(solve) {
            log.solve.push(SolveSample {
                sqp_iterations: solve.0,
                kkt: solve.1,
                solve_time: solve.2,
                converged: true,
            });
            last_solve = Some(solve);
        }
    }
    if log.time.len() >= 2 {
        log.plant_step = log.time[1] - log.time[0];
        log.sampling_time = log.plant_step;
    }
    if log.time.is_empty() {
        return Err(CliError::Config(format!(
            "{}: log has no data rows",
            path.display()
        )));
    }
    Ok(log)
}

/// Two-column spectrum CSV (frequency, amplitude).
pub fn write_spectrum(path: &Path, spectrum: &Spectrum) -> Result<(), CliError> {
    let mut out = String::from("frequency,amplitude\n");
    for (f, a) in spectrum.frequencies.iter().zip(spectrum.amplitude.iter()) {
        out.push_str(&format!("{f},{a}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Arbitrary table with a header row.
pub fn write_table(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ride_log_roundtrips_exactly() {
        let n = 40;
        let log = RideLog {
            plant_step: 1e-4,
            sampling_time: 1e-3,
            s_nom: 0.01,
            i_nom: 5.0,
            u_nom: 5.0,
            controller_name: "C2M".into(),
            time: (0..n).map(|i| i as f64 * 1e-4).collect(),
            gap: (0..n).map(|i| 0.01 + (i as f64) * 1.23456789e-7).collect(),
            ds: (0..n).map(|i| (i as f64) * 1.23456789e-7).collect(),
            z2: (0..n).map(|i| 0.26 + (i as f64).sin() * 1e-5).collect(),
            v1: vec![0.0; n],
            v2: vec![0.0; n],
            a1: (0..n).map(|i| (i as f64 * 0.7).cos() * 2.5).collect(),
            a2: (0..n).map(|i| (i as f64 * 0.3).sin() * 0.2).collect(),
            current: vec![5.0 + 1.0 / 3.0; n],
            voltage: vec![5.0 - 2.0 / 7.0; n],
            u_dev: vec![0.0; n],
            dgw: (0..n).map(|i| (i as f64 * 0.1).sin() * 2e-3).collect(),
            solve: (0..4)
                .map(|k| SolveSample {
                    sqp_iterations: k + 1,
                    kkt: 1e-9 / (k + 1) as f64,
                    solve_time: 1.5e-3,
                    converged: true,
                })
                .collect(),
            failure: None,
        };
        let dir = std::env::temp_dir().join("maglev_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("log.csv");
        write_ride_log(&path, &log).unwrap();
        let back = read_ride_log(&path).unwrap();
        assert_eq!(back.time, log.time);
        assert_eq!(back.gap, log.gap);
        assert_eq!(back.ds, log.ds);
        assert_eq!(back.a1, log.a1);
        assert_eq!(back.a2, log.a2);
        assert_eq!(back.current, log.current);
        assert_eq!(back.voltage, log.voltage);
        assert_eq!(back.dgw, log.dgw);
        assert_eq!(back.plant_step, log.plant_step);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn bad_header_is_rejected() {
        let dir = std::env::temp_dir().join("maglev_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(read_ride_log(&path).is_err());
        std::fs::remove_file(&path).ok();
    }
}
