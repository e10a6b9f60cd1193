//! Guideway deflection synthesis.
//!
//! The deflection d_gw(p) at track position p is the sum of a periodic
//! girder-bending term (half-sine per simply supported span, zero at the
//! joints) and an optional stochastic unevenness profile sampled on a
//! uniform grid and linearly interpolated. Positive deflection moves the
//! guideway surface toward the magnet, i.e. it shrinks the air gap.
//!
//! The controller never sees any of this; only the plant evaluates it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Spectral shaping of the stochastic unevenness: Gaussian white noise run
/// through a first-order spatial low-pass and rescaled to a target RMS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrregularityPsd {
    /// Cutoff wavelength of the low-pass [m].
    pub cutoff_wavelength: f64,
    /// Target RMS amplitude [m].
    pub target_rms: f64,
}

impl Default for IrregularityPsd {
    /// Long-wavelength alignment errors: most energy below ~0.3 Hz of
    /// spatial frequency at line speed, millimetre-scale RMS.
    fn default() -> Self {
        Self {
            cutoff_wavelength: DEFAULT_CUTOFF_WAVELENGTH,
            target_rms: DEFAULT_IRREGULARITY_RMS,
        }
    }
}

/// Default guideway geometry, shared by the CLI defaults and the test
/// scenarios.
pub const DEFAULT_GIRDER_LENGTH: f64 = 31.0;
pub const DEFAULT_SAG_AMPLITUDE: f64 = 7e-3;
pub const DEFAULT_CUTOFF_WAVELENGTH: f64 = 600.0;
pub const DEFAULT_IRREGULARITY_RMS: f64 = 1.2e-3;
pub const DEFAULT_SPACING: f64 = 0.5;
pub const DEFAULT_SEED: u64 = 42;

/// Immutable guideway profile.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidewayProfile {
    /// Girder span length [m].
    pub girder_length: f64,
    /// Midspan deflection of one girder [m].
    pub sag_amplitude: f64,
    /// Sampled stochastic profile (empty when disabled).
    irregularity: Vec<f64>,
    /// Sample spacing of the stochastic profile [m].
    spacing: f64,
    /// Seed the profile was generated from.
    pub seed: u64,
    pub enable_stochastic: bool,
}

impl GuidewayProfile {
    /// Builds a profile covering `length` metres of track.
    pub fn new(
        girder_length: f64,
        sag_amplitude: f64,
        stochastic: Option<IrregularityPsd>,
        seed: u64,
        length: f64,
        spacing: f64,
    ) -> Result<Self> {
        if girder_length <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "girder_length",
                reason: format!("got {girder_length}"),
            });
        }
        if sag_amplitude < 0.0 {
            return Err(Error::InvalidParameter {
                name: "sag_amplitude",
                reason: format!("got {sag_amplitude}"),
            });
        }
        if spacing <= 0.0 || length <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "spacing/length",
                reason: format!("got spacing {spacing}, length {length}"),
            });
        }
        let irregularity = match stochastic {
            Some(psd) => generate_irregularity(seed, length, spacing, &psd),
            None => Vec::new(),
        };
        Ok(Self {
            girder_length,
            sag_amplitude,
            irregularity,
            spacing,
            seed,
            enable_stochastic: stochastic.is_some(),
        })
    }

    /// A flat guideway (no sag, no irregularity).
    pub fn flat() -> Self {
        Self {
            girder_length: DEFAULT_GIRDER_LENGTH,
            sag_amplitude: 0.0,
            irregularity: Vec::new(),
            spacing: 1.0,
            seed: 0,
            enable_stochastic: false,
        }
    }

    /// The default riding scenario: girder sag plus stochastic alignment
    /// irregularities covering `length` metres.
    pub fn default_scenario(seed: u64, length: f64) -> Result<Self> {
        Self::new(
            DEFAULT_GIRDER_LENGTH,
            DEFAULT_SAG_AMPLITUDE,
            Some(IrregularityPsd::default()),
            seed,
            length,
            DEFAULT_SPACING,
        )
    }

    /// Builds a profile directly from imported samples (total deflection).
    pub fn from_samples(samples: Vec<f64>, spacing: f64) -> Result<Self> {
        if spacing <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "spacing",
                reason: format!("got {spacing}"),
            });
        }
        Ok(Self {
            girder_length: 1.0,
            sag_amplitude: 0.0,
            irregularity: samples,
            spacing,
            seed: 0,
            enable_stochastic: true,
        })
    }

    fn sag(&self, position: f64) -> f64 {
        let frac = (position / self.girder_length).rem_euclid(1.0);
        self.sag_amplitude * (std::f64::consts::PI * frac).sin()
    }

    fn sag_slope(&self, position: f64) -> f64 {
        let frac = (position / self.girder_length).rem_euclid(1.0);
        self.sag_amplitude * std::f64::consts::PI / self.girder_length
            * (std::f64::consts::PI * frac).cos()
    }

    fn irregularity_at(&self, position: f64) -> (f64, f64) {
        let n = self.irregularity.len();
        if n == 0 {
            return (0.0, 0.0);
        }
        if n == 1 {
            return (self.irregularity[0], 0.0);
        }
        // Periodic extension beyond the sampled length.
        let span = n as f64 * self.spacing;
        let p = position.rem_euclid(span);
        let idx = (p / self.spacing) as usize % n;
        let next = (idx + 1) % n;
        let t = (p - idx as f64 * self.spacing) / self.spacing;
        let (y0, y1) = (self.irregularity[idx], self.irregularity[next]);
        (y0 + t * (y1 - y0), (y1 - y0) / self.spacing)
    }

    /// Total deflection d_gw at a track position [m].
    pub fn deflection_at(&self, position: f64) -> f64 {
        self.sag(position) + self.irregularity_at(position).0
    }

    /// Spatial slope d(d_gw)/dp, needed for the true air-gap rate seen by
    /// the moving plant.
    pub fn slope_at(&self, position: f64) -> f64 {
        self.sag_slope(position) + self.irregularity_at(position).1
    }

    /// Fundamental excitation frequency at the given speed, v/L [Hz].
    pub fn excitation_frequency(&self, speed: f64) -> f64 {
        speed / self.girder_length
    }

    /// Bound on |d_gw| over the whole profile.
    pub fn amplitude_bound(&self) -> f64 {
        self.sag_amplitude
            + self
                .irregularity
                .iter()
                .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn irregularity_samples(&self) -> &[f64] {
        &self.irregularity
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Exports the total deflection sampled at the profile spacing as
    /// two-column text (position [m], deflection [m]).
    pub fn export(&self, path: &std::path::Path, length: f64) -> Result<()> {
        let n = (length / self.spacing).ceil() as usize;
        let mut out = String::new();
        for k in 0..n {
            let p = k as f64 * self.spacing;
            out.push_str(&format!("{:?} {:?}\n", p, self.deflection_at(p)));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Imports a profile written by [`GuidewayProfile::export`]. The result
    /// reproduces the exported deflection at the sampled resolution (the
    /// sag is folded into the samples).
    pub fn import(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut positions = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(p), Some(v)) = (parts.next(), parts.next()) else {
                return Err(Error::TableFormat(format!(
                    "profile line {} needs two columns",
                    lineno + 1
                )));
            };
            positions.push(p.parse::<f64>().map_err(|_| {
                Error::TableFormat(format!("bad position on line {}", lineno + 1))
            })?);
            values.push(v.parse::<f64>().map_err(|_| {
                Error::TableFormat(format!("bad deflection on line {}", lineno + 1))
            })?);
        }
        if positions.len() < 2 {
            return Err(Error::TableFormat("profile needs at least two samples".into()));
        }
        let spacing = positions[1] - positions[0];
        if spacing <= 0.0 {
            return Err(Error::TableFormat("positions must increase".into()));
        }
        Self::from_samples(values, spacing)
    }
}

/// Generates the stochastic unevenness: seeded Gaussian white noise shaped
/// by a first-order spatial low-pass and normalized to the exact target
/// RMS of the generated samples.
pub fn generate_irregularity(
    seed: u64,
    length: f64,
    spacing: f64,
    psd: &IrregularityPsd,
) -> Vec<f64> {
    let n = (length / spacing).ceil() as usize + 1;
    if psd.target_rms == 0.0 {
        return vec![0.0; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Box–Muller keeps the sample stream fully pinned to the seed.
    let mut normal = move || {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let a = (-2.0 * std::f64::consts::PI * spacing / psd.cutoff_wavelength).exp();
    let mut samples = Vec::with_capacity(n);
    let mut y = 0.0;
    for _ in 0..n {
        y = a * y + (1.0 - a) * normal();
        samples.push(y);
    }
    let rms = (samples.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        let scale = psd.target_rms / rms;
        for v in &mut samples {
            *v *= scale;
        }
    }
    samples
}
