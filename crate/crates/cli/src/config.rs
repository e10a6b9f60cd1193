//! Scenario configuration: a sectioned key-value text format.
//!
//! ```text
//! [plant]
//! m2 = 3000.0
//!
//! [controller.C2M]
//! q = 1e2, 1, 1, 1, 1e5
//!
//! [scenario]
//! controller = C2M
//! ```
//!
//! Every key has a default (printable with `--print-defaults`); unknown
//! keys and sections are rejected. `#` starts a comment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use maglev_nmpc::controllers::ControllerConfig;
use maglev_nmpc::guideway::{GuidewayProfile, IrregularityPsd};
use maglev_nmpc::model::{
    MagnetBackendKind, MagnetModel, MagnetParams, MechanicalParams, ModelKind,
};
use maglev_nmpc::ocp::SolveMode;
use maglev_nmpc::simulation::{CarBodyFrame, InitialCondition, Scenario};
use maglev_nmpc::ControllerState;

use crate::CliError;

use maglev_nmpc::guideway::{
    DEFAULT_CUTOFF_WAVELENGTH, DEFAULT_GIRDER_LENGTH, DEFAULT_IRREGULARITY_RMS,
    DEFAULT_SAG_AMPLITUDE, DEFAULT_SEED, DEFAULT_SPACING,
};

/// Parsed configuration document.
#[derive(Debug, Clone, Default)]
pub struct ConfigDocument {
    /// section -> key -> (value, line number)
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

const KNOWN_KEYS: &[(&str, &str, &str)] = &[
    ("plant", "m1", "unsprung mass (half magnet + quarter chassis) [kg]"),
    ("plant", "m2", "sprung partial car-body mass [kg]"),
    ("plant", "ck", "suspension stiffness [N/m]"),
    ("plant", "cd", "suspension damping [N*s/m]"),
    ("plant", "g", "gravitational acceleration [m/s^2]"),
    ("plant", "fl", "static load force of the single-mass variant [N]"),
    ("magnet", "km", "analytic force constant [N*m^2/A^2]"),
    ("magnet", "rc", "coil resistance [ohm]"),
    ("magnet", "s_nom", "nominal air gap [m]"),
    ("magnet", "u_max", "voltage deviation bound [V]"),
    ("magnet", "backend", "force/current model: analytic | table"),
    ("magnet", "table_path", "grid file for the table backend"),
    ("guideway", "girder_length", "girder span [m]"),
    ("guideway", "sag_amplitude", "midspan deflection [m]"),
    ("guideway", "stochastic", "enable stochastic irregularities: true | false"),
    ("guideway", "irregularity_rms", "target RMS of the irregularity [m]"),
    ("guideway", "cutoff_wavelength", "low-pass cutoff wavelength [m]"),
    ("guideway", "spacing", "irregularity sample spacing [m]"),
    ("guideway", "seed", "irregularity RNG seed"),
    ("scenario", "speed_kmh", "vehicle speed [km/h]"),
    ("scenario", "duration", "run duration [s]"),
    ("scenario", "controller", "controller name (C1M | C2M | C2ML | custom section)"),
    ("scenario", "plant_step", "plant integration step [s]"),
    ("scenario", "sampling_time", "controller sampling time [s]"),
    ("scenario", "initial", "initial condition: equilibrium | deviation"),
    ("scenario", "initial_ds", "initial gap deviation [m] (initial = deviation)"),
    ("scenario", "initial_dz2", "initial car-body deviation [m]"),
    ("scenario", "initial_v1", "initial magnet velocity [m/s]"),
    ("scenario", "initial_v2", "initial car-body velocity [m/s]"),
    ("scenario", "initial_di", "initial current deviation [A]"),
    ("scenario", "car_body_frame", "car-body deviation reference: inertial | guideway"),
    ("analysis", "segment_len", "Welch segment length (power of two)"),
    ("analysis", "overlap", "Welch overlap fraction [0, 1)"),
    ("analysis", "band_lo", "comfort band lower edge [Hz]"),
    ("analysis", "band_hi", "comfort band upper edge [Hz]"),
    ("analysis", "histogram_bins", "bin count of the report histograms"),
];

const CONTROLLER_KEYS: &[(&str, &str)] = &[
    ("model", "controller model: single_mass | two_mass"),
    ("horizon", "prediction horizon T [s]"),
    ("intervals", "discretization intervals N"),
    ("q", "diagonal output weights, comma separated (5 or 3 values)"),
    ("r", "input weight on u/u_max"),
    ("mode", "solver mode: converge | real_time_iteration"),
];

/// Reference table of every key with its built-in default.
pub fn defaults_table() -> String {
    let mech = MechanicalParams::default();
    let magnet = MagnetParams::default();
    let defaults: Vec<(&str, &str, String)> = vec![
        ("plant", "m1", format!("{}", mech.m1)),
        ("plant", "m2", format!("{}", mech.m2)),
        ("plant", "ck", format!("{}", mech.ck)),
        ("plant", "cd", format!("{}", mech.cd)),
        ("plant", "g", format!("{}", mech.g)),
        ("plant", "fl", format!("{}", mech.fl)),
        ("magnet", "km", format!("{}", magnet.km)),
        ("magnet", "rc", format!("{}", magnet.rc)),
        ("magnet", "s_nom", format!("{}", magnet.s_nom)),
        ("magnet", "u_max", format!("{}", magnet.u_max)),
        ("magnet", "backend", "analytic".into()),
        ("magnet", "table_path", "(none)".into()),
        ("guideway", "girder_length", format!("{DEFAULT_GIRDER_LENGTH}")),
        ("guideway", "sag_amplitude", format!("{DEFAULT_SAG_AMPLITUDE}")),
        ("guideway", "stochastic", "true".into()),
        ("guideway", "irregularity_rms", format!("{DEFAULT_IRREGULARITY_RMS}")),
        ("guideway", "cutoff_wavelength", format!("{DEFAULT_CUTOFF_WAVELENGTH}")),
        ("guideway", "spacing", format!("{DEFAULT_SPACING}")),
        ("guideway", "seed", format!("{DEFAULT_SEED}")),
        ("scenario", "speed_kmh", "600".into()),
        ("scenario", "duration", "30".into()),
        ("scenario", "controller", "C2M".into()),
        ("scenario", "plant_step", "0.0001".into()),
        ("scenario", "sampling_time", "0.001".into()),
        ("scenario", "initial", "equilibrium".into()),
        ("scenario", "initial_ds", "0".into()),
        ("scenario", "initial_dz2", "0".into()),
        ("scenario", "initial_v1", "0".into()),
        ("scenario", "initial_v2", "0".into()),
        ("scenario", "initial_di", "0".into()),
        ("scenario", "car_body_frame", "inertial".into()),
        ("analysis", "segment_len", "65536".into()),
        ("analysis", "overlap", "0.5".into()),
        ("analysis", "band_lo", "0.5".into()),
        ("analysis", "band_hi", "5".into()),
        ("analysis", "histogram_bins", "61".into()),
    ];
    let mut out = String::new();
    let mut section = "";
    for (sec, key, value) in &defaults {
        if *sec != section {
            if !section.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!("[{sec}]\n"));
            section = sec;
        }
        let help = KNOWN_KEYS
            .iter()
            .find(|(s, k, _)| s == sec && k == key)
            .map(|(_, _, h)| *h)
            .unwrap_or("");
        out.push_str(&format!("{key} = {value:<14} # {help}\n"));
    }
    out.push_str("\n# Controllers C1M, C2M and C2ML are predefined; a [controller.<name>]\n");
    out.push_str("# section overrides them or defines a new one with keys:\n");
    for (key, help) in CONTROLLER_KEYS {
        out.push_str(&format!("#   {key:<10} {help}\n"));
    }
    out
}

impl ConfigDocument {
    /// Parses a document, rejecting unknown sections and keys.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut sections: BTreeMap<String, BTreeMap<String, (String, usize)>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_string();
                let base = name.split('.').next().unwrap_or("");
                if !(KNOWN_KEYS.iter().any(|(s, _, _)| *s == base)
                    || (base == "controller" && name.len() > "controller.".len()))
                {
                    return Err(CliError::Config(format!(
                        "line {lineno}: unknown section [{name}]"
                    )));
                }
                sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "line {lineno}: expected `key = value`, got `{line}`"
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            let Some(section) = current.clone() else {
                return Err(CliError::Config(format!(
                    "line {lineno}: key `{key}` appears before any [section]"
                )));
            };
            let known = if section.starts_with("controller.") {
                CONTROLLER_KEYS.iter().any(|(k, _)| *k == key)
            } else {
                KNOWN_KEYS.iter().any(|(s, k, _)| *s == section && *k == key)
            };
            if !known {
                return Err(CliError::Config(format!(
                    "line {lineno}: unknown key `{key}` in section [{section}]"
                )));
            }
            if sections
                .entry(section.clone())
                .or_default()
                .insert(key.clone(), (value, lineno))
                .is_some()
            {
                return Err(CliError::Config(format!(
                    "line {lineno}: key `{key}` set twice in [{section}]"
                )));
            }
        }
        Ok(Self { sections })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    fn get(&self, section: &str, key: &str) -> Option<&(String, usize)> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64, CliError> {
        match self.get(section, key) {
            None => Ok(default),
            Some((v, lineno)) => v.parse::<f64>().map_err(|_| {
                CliError::Config(format!("line {lineno}: `{key}` must be a number, got `{v}`"))
            }),
        }
    }

    fn u64_or(&self, section: &str, key: &str, default: u64) -> Result<u64, CliError> {
        match self.get(section, key) {
            None => Ok(default),
            Some((v, lineno)) => v.parse::<u64>().map_err(|_| {
                CliError::Config(format!(
                    "line {lineno}: `{key}` must be a non-negative integer, got `{v}`"
                ))
            }),
        }
    }

    fn bool_or(&self, section: &str, key: &str, default: bool) -> Result<bool, CliError> {
        match self.get(section, key) {
            None => Ok(default),
            Some((v, lineno)) => match v.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(CliError::Config(format!(
                    "line {lineno}: `{key}` must be true or false, got `{v}`"
                ))),
            },
        }
    }

    fn string_or(&self, section: &str, key: &str, default: &str) -> String {
        self.get(section, key)
            .map(|(v, _)| v.clone())
            .unwrap_or_else(|| default.to_string())
    }

    pub fn mechanical_params(&self) -> Result<MechanicalParams, CliError> {
        let d = MechanicalParams::default();
        let p = MechanicalParams {
            m1: self.f64_or("plant", "m1", d.m1)?,
            m2: self.f64_or("plant", "m2", d.m2)?,
            ck: self.f64_or("plant", "ck", d.ck)?,
            cd: self.f64_or("plant", "cd", d.cd)?,
            g: self.f64_or("plant", "g", d.g)?,
            fl: self.f64_or("plant", "fl", d.fl)?,
        };
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn magnet_params(&self) -> Result<MagnetParams, CliError> {
        let d = MagnetParams::default();
        let backend = match self.string_or("magnet", "backend", "analytic").as_str() {
            "analytic" => MagnetBackendKind::Analytic,
            "table" => MagnetBackendKind::Table,
            other => {
                return Err(CliError::Config(format!(
                    "magnet backend must be `analytic` or `table`, got `{other}`"
                )))
            }
        };
        let p = MagnetParams {
            km: self.f64_or("magnet", "km", d.km)?,
            rc: self.f64_or("magnet", "rc", d.rc)?,
            s_nom: self.f64_or("magnet", "s_nom", d.s_nom)?,
            u_max: self.f64_or("magnet", "u_max", d.u_max)?,
            backend,
        };
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn magnet_model(&self, config_dir: &Path) -> Result<MagnetModel, CliError> {
        let params = self.magnet_params()?;
        match params.backend {
            MagnetBackendKind::Analytic => {
                MagnetModel::analytic(params).map_err(|e| CliError::Config(e.to_string()))
            }
            MagnetBackendKind::Table => {
                let Some((path, _)) = self.get("magnet", "table_path") else {
                    return Err(CliError::Config(
                        "magnet backend `table` needs `table_path`".into(),
                    ));
                };
                let mut full = PathBuf::from(path);
                if full.is_relative() {
                    full = config_dir.join(full);
                }
                MagnetModel::from_table_file(params, &full)
                    .map_err(|e| CliError::Config(e.to_string()))
            }
        }
    }

    /// Builds the guideway profile covering the scenario length.
    pub fn guideway(&self, seed_override: Option<u64>) -> Result<GuidewayProfile, CliError> {
        let speed = self.f64_or("scenario", "speed_kmh", 600.0)? / 3.6;
        let duration = self.f64_or("scenario", "duration", 30.0)?;
        let stochastic = if self.bool_or("guideway", "stochastic", true)? {
            Some(IrregularityPsd {
                cutoff_wavelength: self.f64_or(
                    "guideway",
                    "cutoff_wavelength",
                    DEFAULT_CUTOFF_WAVELENGTH,
                )?,
                target_rms: self.f64_or("guideway", "irregularity_rms", DEFAULT_IRREGULARITY_RMS)?,
            })
        } else {
            None
        };
        let seed = seed_override.unwrap_or(self.u64_or("guideway", "seed", DEFAULT_SEED)?);
        GuidewayProfile::new(
            self.f64_or("guideway", "girder_length", DEFAULT_GIRDER_LENGTH)?,
            self.f64_or("guideway", "sag_amplitude", DEFAULT_SAG_AMPLITUDE)?,
            stochastic,
            seed,
            speed * duration + 100.0,
            self.f64_or("guideway", "spacing", DEFAULT_SPACING)?,
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }

    /// A controller by name: preset (C1M/C2M/C2ML) possibly overridden by a
    /// `[controller.<name>]` section, or fully defined by such a section.
    pub fn controller(&self, name: &str) -> Result<ControllerConfig, CliError> {
        let section = format!("controller.{name}");
        let preset = ControllerConfig::preset(name);
        let has_section = self.sections.contains_key(&section);
        if preset.is_none() && !has_section {
            let mut valid: Vec<String> = ["C1M", "C2M", "C2ML"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            valid.extend(self.sections.keys().filter_map(|s| {
                s.strip_prefix("controller.").map(|n| n.to_string())
            }));
            valid.dedup();
            return Err(CliError::Config(format!(
                "unknown controller `{name}`; valid names: {}",
                valid.join(", ")
            )));
        }
        let mut cfg = preset.unwrap_or_else(|| ControllerConfig {
            name: name.to_string(),
            ..ControllerConfig::c2m()
        });
        cfg.name = name.to_string();
        cfg.sampling_time = self.f64_or("scenario", "sampling_time", 1e-3)?;
        if has_section {
            if let Some((v, lineno)) = self.get(&section, "model") {
                cfg.model = match v.as_str() {
                    "single_mass" => ModelKind::SingleMass,
                    "two_mass" => ModelKind::TwoMass,
                    other => {
                        return Err(CliError::Config(format!(
                            "line {lineno}: model must be single_mass or two_mass, got `{other}`"
                        )))
                    }
                };
            }
            cfg.horizon = self.f64_or(&section, "horizon", cfg.horizon)?;
            cfg.n_intervals = self.u64_or(&section, "intervals", cfg.n_intervals as u64)? as usize;
            cfg.r_weight = self.f64_or(&section, "r", cfg.r_weight)?;
            if let Some((v, lineno)) = self.get(&section, "q") {
                let weights: Result<Vec<f64>, _> =
                    v.split(',').map(|t| t.trim().parse::<f64>()).collect();
                cfg.q_weights = weights.map_err(|_| {
                    CliError::Config(format!(
                        "line {lineno}: `q` must be a comma-separated list of numbers"
                    ))
                })?;
            }
            if let Some((v, lineno)) = self.get(&section, "mode") {
                cfg.mode = match v.as_str() {
                    "converge" => SolveMode::Converge,
                    "real_time_iteration" => SolveMode::RealTimeIteration,
                    other => {
                        return Err(CliError::Config(format!(
                            "line {lineno}: mode must be converge or real_time_iteration, got `{other}`"
                        )))
                    }
                };
            }
        }
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// The scenario's controller name.
    pub fn scenario_controller(&self) -> String {
        self.string_or("scenario", "controller", "C2M")
    }

    /// The full scenario for a given controller name.
    pub fn scenario(
        &self,
        controller: &str,
        config_dir: &Path,
        seed_override: Option<u64>,
    ) -> Result<Scenario, CliError> {
        let mech = self.mechanical_params()?;
        let magnet = self.magnet_model(config_dir)?;
        let guideway = self.guideway(seed_override)?;
        let controller = self.controller(controller)?;
        let initial = match self.string_or("scenario", "initial", "equilibrium").as_str() {
            "equilibrium" => InitialCondition::Equilibrium,
            "deviation" => InitialCondition::Deviation(ControllerState {
                ds: self.f64_or("scenario", "initial_ds", 0.0)?,
                dz2: self.f64_or("scenario", "initial_dz2", 0.0)?,
                v1: self.f64_or("scenario", "initial_v1", 0.0)?,
                v2: self.f64_or("scenario", "initial_v2", 0.0)?,
                di: self.f64_or("scenario", "initial_di", 0.0)?,
            }),
            other => {
                return Err(CliError::Config(format!(
                    "initial must be `equilibrium` or `deviation`, got `{other}`"
                )))
            }
        };
        let car_body_frame = match self
            .string_or("scenario", "car_body_frame", "inertial")
            .as_str()
        {
            "inertial" => CarBodyFrame::Inertial,
            "guideway" => CarBodyFrame::Guideway,
            other => {
                return Err(CliError::Config(format!(
                    "car_body_frame must be `inertial` or `guideway`, got `{other}`"
                )))
            }
        };
        let scenario = Scenario {
            speed: self.f64_or("scenario", "speed_kmh", 600.0)? / 3.6,
            duration: self.f64_or("scenario", "duration", 30.0)?,
            mech,
            magnet,
            guideway,
            controller,
            plant_step: self.f64_or("scenario", "plant_step", 1e-4)?,
            initial,
            car_body_frame,
        };
        scenario
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(scenario)
    }

    /// Analysis parameters.
    pub fn analysis(&self) -> Result<AnalysisConfig, CliError> {
        let cfg = AnalysisConfig {
            segment_len: self.u64_or("analysis", "segment_len", 65536)? as usize,
            overlap: self.f64_or("analysis", "overlap", 0.5)?,
            band: (
                self.f64_or("analysis", "band_lo", 0.5)?,
                self.f64_or("analysis", "band_hi", 5.0)?,
            ),
            histogram_bins: self.u64_or("analysis", "histogram_bins", 61)? as usize,
        };
        if !cfg.segment_len.is_power_of_two() {
            return Err(CliError::Config(format!(
                "analysis segment_len must be a power of two, got {}",
                cfg.segment_len
            )));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AnalysisConfig {
    pub segment_len: usize,
    pub overlap: f64,
    pub band: (f64, f64),
    pub histogram_bins: usize,
}
