//! Ride-quality evaluation: RMSE, histograms, Welch amplitude spectra and
//! band-limited comfort metrics.
//!
//! Spectral amplitude convention: a pure sine of amplitude A shows up as a
//! peak of A/√2 (its RMS value). Band power is integrated from the
//! one-sided PSD, so a single in-band sine contributes A²/2 to the squared
//! band RMS and broadband signals satisfy Parseval against the series
//! variance. Both scalings are carried in [`Spectrum`].

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::simulation::RideLog;

/// Root mean square error of a series against a scalar reference.
pub fn rmse(series: &[f64], reference: f64) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::Analysis("rmse of an empty series".into()));
    }
    let sum: f64 = series.iter().map(|x| (x - reference) * (x - reference)).sum();
    Ok((sum / series.len() as f64).sqrt())
}

/// Fixed-width histogram with explicit under/overflow counters.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// bin_count + 1 edges, uniformly spaced.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub underflow: usize,
    pub overflow: usize,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.underflow + self.overflow
    }
}

/// Bins are half-open [e_i, e_{i+1}) except the last, which includes its
/// upper edge.
pub fn histogram(series: &[f64], bin_count: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if bin_count == 0 {
        return Err(Error::Analysis("histogram needs at least one bin".into()));
    }
    if !(hi > lo) {
        return Err(Error::Analysis(format!("invalid histogram range [{lo}, {hi}]")));
    }
    let width = (hi - lo) / bin_count as f64;
    let edges: Vec<f64> = (0..=bin_count).map(|k| lo + k as f64 * width).collect();
    let mut counts = vec![0usize; bin_count];
    let mut underflow = 0;
    let mut overflow = 0;
    for &x in series {
        if x < lo {
            underflow += 1;
        } else if x > hi {
            overflow += 1;
        } else {
            let bin = (((x - lo) / width) as usize).min(bin_count - 1);
            counts[bin] += 1;
        }
    }
    Ok(Histogram {
        edges,
        counts,
        underflow,
        overflow,
    })
}

/// One-sided amplitude/PSD spectrum from Welch's method.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Bin frequencies, 0 to Nyquist inclusive [Hz].
    pub frequencies: Vec<f64>,
    /// RMS-scaled amplitude per bin (sine of amplitude A → A/√2).
    pub amplitude: Vec<f64>,
    /// One-sided power spectral density [unit²/Hz].
    pub psd: Vec<f64>,
    /// Bin spacing, sample_rate / segment_len [Hz].
    pub resolution: f64,
    pub segment_len: usize,
    pub overlap: f64,
    /// Number of averaged segments.
    pub segments: usize,
    /// Equivalent noise bandwidth of the window, in bins.
    pub enbw: f64,
}

impl Spectrum {
    /// Band power from the PSD: ∫ psd df over [lo, hi].
    pub fn band_rms(&self, band: (f64, f64)) -> f64 {
        let mut power = 0.0;
        for (f, p) in self.frequencies.iter().zip(self.psd.iter()) {
            if *f >= band.0 && *f <= band.1 {
                power += p * self.resolution;
            }
        }
        power.sqrt()
    }

    /// Largest amplitude bin within a band.
    pub fn peak_in_band(&self, band: (f64, f64)) -> Option<(f64, f64)> {
        self.frequencies
            .iter()
            .zip(self.amplitude.iter())
            .filter(|(f, _)| **f >= band.0 && **f <= band.1)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(f, a)| (*f, *a))
    }
}

/// Welch estimate with a periodic Hann window and overlapping segments.
/// `segment_len` must be a power of two no longer than the series.
pub fn welch_spectrum(
    series: &[f64],
    sample_rate: f64,
    segment_len: usize,
    overlap: f64,
) -> Result<Spectrum> {
    if !segment_len.is_power_of_two() || segment_len < 2 {
        return Err(Error::Analysis(format!(
            "segment length {segment_len} must be a power of two ≥ 2"
        )));
    }
    if series.len() < segment_len {
        return Err(Error::Analysis(format!(
            "series of {} samples shorter than one segment ({segment_len})",
            series.len()
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::Analysis(format!("overlap {overlap} must be in [0, 1)")));
    }
    if sample_rate <= 0.0 {
        return Err(Error::Analysis("sample rate must be positive".into()));
    }

    let n = segment_len;
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect();
    let w_sum: f64 = window.iter().sum();
    let w_sq_sum: f64 = window.iter().map(|w| w * w).sum();

    let hop = ((1.0 - overlap) * n as f64).round().max(1.0) as usize;
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);

    let n_bins = n / 2 + 1;
    let mut mean_power = vec![0.0f64; n_bins];
    let mut segments = 0usize;
    let mut buffer = vec![Complex64::default(); n];
    let mut start = 0;
    while start + n <= series.len() {
        for (i, slot) in buffer.iter_mut().enumerate() {
            *slot = Complex64::new(series[start + i] * window[i], 0.0);
        }
        fft.process(&mut buffer);
        for (j, acc) in mean_power.iter_mut().enumerate() {
            *acc += buffer[j].norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    for acc in &mut mean_power {
        *acc /= segments as f64;
    }

    let resolution = sample_rate / n as f64;
    let frequencies: Vec<f64> = (0..n_bins).map(|j| j as f64 * resolution).collect();
    let mut amplitude = Vec::with_capacity(n_bins);
    let mut psd = Vec::with_capacity(n_bins);
    for (j, &p) in mean_power.iter().enumerate() {
        let one_sided = if j == 0 || j == n_bins - 1 { 1.0 } else { 2.0 };
        amplitude.push((one_sided * p).sqrt() / w_sum);
        psd.push(one_sided * p / (sample_rate * w_sq_sum));
    }

    Ok(Spectrum {
        frequencies,
        amplitude,
        psd,
        resolution,
        segment_len: n,
        overlap,
        segments,
        enbw: n as f64 * w_sq_sum / (w_sum * w_sum),
    })
}

/// Welch parameters used by the ride analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumParams {
    pub segment_len: usize,
    pub overlap: f64,
}

impl Default for SpectrumParams {
    /// 65536 samples per segment resolve ≈ 0.15 Hz at the default 10 kHz
    /// log rate, fine enough for the suspension eigenfrequency band.
    fn default() -> Self {
        Self {
            segment_len: 65536,
            overlap: 0.5,
        }
    }
}

/// Band-limited comfort numbers for the car-body acceleration.
#[derive(Debug, Clone, Copy)]
pub struct ComfortMetrics {
    /// RMS of z̈2 within the band [m/s²].
    pub band_rms: f64,
    /// Frequency of the largest in-band amplitude, if any bin lies in band.
    pub peak_frequency: Option<f64>,
    pub peak_amplitude: f64,
}

/// Computes comfort metrics of a ride log over a frequency band
/// (default use: [0.5, 5] Hz on z̈2).
pub fn comfort_metrics(
    log: &RideLog,
    band: (f64, f64),
    params: &SpectrumParams,
) -> Result<ComfortMetrics> {
    let sample_rate = 1.0 / log.plant_step;
    if band.0 < 0.0 || band.1 > sample_rate / 2.0 || band.0 >= band.1 {
        return Err(Error::Analysis(format!(
            "band [{}, {}] Hz outside (0, Nyquist)",
            band.0, band.1
        )));
    }
    let spectrum = welch_spectrum(&log.a2, sample_rate, params.segment_len, params.overlap)?;
    let (peak_frequency, peak_amplitude) = match spectrum.peak_in_band(band) {
        Some((f, a)) if a > 0.0 => (Some(f), a),
        Some((_, a)) => (None, a),
        None => (None, 0.0),
    };
    Ok(ComfortMetrics {
        band_rms: spectrum.band_rms(band),
        peak_frequency,
        peak_amplitude,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rmse_basics() {
        assert_eq!(rmse(&[3.0, 3.0, 3.0], 3.0).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0, -1.0], 0.0).unwrap(), 1.0);
        assert!(rmse(&[], 0.0).is_err());
    }

    #[test]
    fn rmse_of_sine_is_amplitude_over_sqrt2() {
        let amp = 2.3;
        let n = 100_000;
        let series: Vec<f64> = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * 17.0 * i as f64 / n as f64).sin())
            .collect();
        let r = rmse(&series, 0.0).unwrap();
        assert_relative_eq!(r, amp / 2f64.sqrt(), max_relative = 0.01);
    }

    #[test]
    fn histogram_counts_sum_to_total() {
        let series = vec![0.5; 100];
        let h = histogram(&series, 4, (0.0, 1.0)).unwrap();
        assert_eq!(h.counts, vec![0, 0, 100, 0]);
        assert_eq!(h.total(), 100);

        // All samples outside the range land in the overflow counters.
        let h = histogram(&series, 4, (2.0, 3.0)).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 0);
        assert_eq!(h.underflow, 100);
    }

    #[test]
    fn histogram_of_uniform_samples_is_flat() {
        let n = 10_000usize;
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let series: Vec<f64> = (0..n).map(|_| next()).collect();
        let bins = 20;
        let h = histogram(&series, bins, (0.0, 1.0)).unwrap();
        let expected = n as f64 / bins as f64;
        let tol = 5.0 * expected.sqrt();
        for (k, &c) in h.counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() < tol,
                "bin {k}: {c} vs expected {expected}"
            );
        }
    }

    #[test]
    fn bin_centered_sine_peaks_at_rms_value() {
        let fs = 1000.0;
        let n_seg = 1024;
        let amp = 0.8;
        // 62.5 Hz sits exactly on bin 64 of a 1024-point segment at 1 kHz.
        let f0 = 64.0 * fs / n_seg as f64;
        let series: Vec<f64> = (0..8192)
            .map(|i| amp * (2.0 * std::f64::consts::PI * f0 * i as f64 / fs).sin())
            .collect();
        let spec = welch_spectrum(&series, fs, n_seg, 0.5).unwrap();
        let (peak_f, peak_a) = spec.peak_in_band((1.0, 499.0)).unwrap();
        assert_relative_eq!(peak_f, f0, epsilon = spec.resolution / 2.0);
        assert_relative_eq!(peak_a, amp / 2f64.sqrt(), max_relative = 0.01);
        assert_relative_eq!(spec.resolution, fs / n_seg as f64, epsilon = 1e-12);
    }

    #[test]
    fn zero_series_gives_zero_spectrum() {
        let spec = welch_spectrum(&vec![0.0; 4096], 100.0, 512, 0.5).unwrap();
        assert!(spec.amplitude.iter().all(|&a| a == 0.0));
        assert!(spec.psd.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn white_noise_is_flat_and_satisfies_parseval() {
        let n = 1 << 17;
        let mut state = 0x853c49e6748fea9bu64;
        let mut uniform = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut gauss = move || {
            let u1: f64 = (1.0 - uniform()).max(f64::MIN_POSITIVE);
            let u2 = uniform();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let series: Vec<f64> = (0..n).map(|_| gauss()).collect();
        let mean = series.iter().sum::<f64>() / n as f64;
        let variance = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;

        let fs = 200.0;
        let spec = welch_spectrum(&series, fs, 1024, 0.5).unwrap();
        let total_power: f64 = spec.psd.iter().map(|p| p * spec.resolution).sum();
        assert_relative_eq!(total_power, variance, max_relative = 0.02);

        // Flat within statistical scatter: compare band means far apart.
        let mean_band = |lo: f64, hi: f64| {
            let vals: Vec<f64> = spec
                .frequencies
                .iter()
                .zip(spec.psd.iter())
                .filter(|(f, _)| **f >= lo && **f <= hi)
                .map(|(_, p)| *p)
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let low = mean_band(5.0, 30.0);
        let high = mean_band(60.0, 95.0);
        assert_relative_eq!(low, high, max_relative = 0.1);
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(welch_spectrum(&[0.0; 100], 10.0, 512, 0.5).is_err());
        assert!(welch_spectrum(&[0.0; 1024], 10.0, 500, 0.5).is_err());
    }

    fn synthetic_log(a2: Vec<f64>, plant_step: f64) -> RideLog {
        let n = a2.len();
        RideLog {
            plant_step,
            sampling_time: plant_step,
            s_nom: 0.01,
            i_nom: 25.0,
            u_nom: 25.0,
            controller_name: "test".into(),
            time: (0..n).map(|i| i as f64 * plant_step).collect(),
            gap: vec![0.01; n],
            ds: vec![0.0; n],
            z2: vec![0.0; n],
            v1: vec![0.0; n],
            v2: vec![0.0; n],
            a1: vec![0.0; n],
            a2,
            current: vec![25.0; n],
            voltage: vec![25.0; n],
            u_dev: vec![0.0; n],
            dgw: vec![0.0; n],
            solve: Vec::new(),
            failure: None,
        }
    }

    #[test]
    fn comfort_metrics_on_in_band_sine() {
        let fs = 1000.0;
        let amp = 0.4;
        let f0 = 2.9296875; // bin-centered for 4096 @ 1 kHz
        let a2: Vec<f64> = (0..40960)
            .map(|i| amp * (2.0 * std::f64::consts::PI * f0 * i as f64 / fs).sin())
            .collect();
        let log = synthetic_log(a2, 1.0 / fs);
        let params = SpectrumParams {
            segment_len: 4096,
            overlap: 0.5,
        };
        let m = comfort_metrics(&log, (0.5, 5.0), &params).unwrap();
        assert_relative_eq!(m.band_rms, amp / 2f64.sqrt(), max_relative = 0.02);
        assert_relative_eq!(m.peak_frequency.unwrap(), f0, epsilon = 0.3);

        // The same sine out of band leaves almost nothing behind.
        let m2 = comfort_metrics(&log, (20.0, 100.0), &params).unwrap();
        assert!(m2.band_rms < 0.01 * amp, "leakage band rms {}", m2.band_rms);
    }

    #[test]
    fn comfort_metrics_of_silence() {
        let log = synthetic_log(vec![0.0; 8192], 1e-3);
        let params = SpectrumParams {
            segment_len: 1024,
            overlap: 0.5,
        };
        let m = comfort_metrics(&log, (0.5, 5.0), &params).unwrap();
        assert_eq!(m.band_rms, 0.0);
        assert_eq!(m.peak_amplitude, 0.0);
        assert!(m.peak_frequency.is_none());
    }
}
