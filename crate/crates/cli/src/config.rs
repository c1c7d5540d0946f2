//! Flat `key = value` run configuration.
//!
//! One entry per line, `#` starts a comment, later entries override earlier
//! ones. Every key has a default except `command`. The canonical rendering
//! ([`RunSpec::canonical`]) lists every key in a fixed order and is what the
//! manifest stores and hashes, so a manifest is itself a valid config.

use std::fmt;
use std::path::PathBuf;

use latticemc_core::ensemble::EnsembleConfig;
use latticemc_core::field::ProbeModel;
use latticemc_core::LatticeConfig;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("unknown key `{key}`; valid keys: {}", KEYS.join(", "))]
    UnknownKey { key: String },
    #[error("`{key}`: cannot read `{value}` as {expected}")]
    TypeMismatch { key: String, value: String, expected: &'static str },
    #[error("missing required key `{0}`")]
    MissingRequired(&'static str),
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("override `{0}`: expected `key=value`")]
    BadOverride(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Geometry,
    Single,
    SweepGamma,
    SweepDelta,
    Bunching,
    Spectrum,
    SrScaling,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Geometry,
        Command::Single,
        Command::SweepGamma,
        Command::SweepDelta,
        Command::Bunching,
        Command::Spectrum,
        Command::SrScaling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Geometry => "geometry",
            Command::Single => "single",
            Command::SweepGamma => "sweep-gamma",
            Command::SweepDelta => "sweep-delta",
            Command::Bunching => "bunching",
            Command::Spectrum => "spectrum",
            Command::SrScaling => "sr-scaling",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == text)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Curve a Γ sweep locates its resonance on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeakObservable {
    Xi,
    Dx,
    A,
}

impl PeakObservable {
    pub fn name(self) -> &'static str {
        match self {
            PeakObservable::Xi => "xi",
            PeakObservable::Dx => "d_x",
            PeakObservable::A => "a",
        }
    }
}

pub const KEYS: [&str; 27] = [
    "command",
    "delta0",
    "gamma0",
    "theta_deg",
    "probe_ratio",
    "delta",
    "reference_factor",
    "reference_model",
    "atoms",
    "thermalization",
    "tmax",
    "sampling_interval",
    "seed",
    "init_temperature",
    "eta",
    "jump_recoil",
    "bins",
    "combine_modes",
    "peak_observable",
    "gamma0_grid",
    "delta_ratio_grid",
    "delta0_grid",
    "sr_ratio_grid",
    "spectrum_gamma0_grid",
    "spectrum_atoms",
    "spectrum_tmax",
    "out",
];

/// Fully resolved run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub command: Command,
    /// Light shift Δ₀′ (ω_r), negative.
    pub delta0: f64,
    pub gamma0: f64,
    pub theta_deg: f64,
    pub probe_ratio: f64,
    /// Probe detuning δ (ω_r); `None` puts the probe on the Brillouin resonance `δ = Ω_x`.
    pub delta: Option<f64>,
    /// Reference runs use `δ = reference_factor · Ω_x`; 0 disables them.
    pub reference_factor: f64,
    pub reference_model: ProbeModel,
    pub atoms: usize,
    pub thermalization: Option<f64>,
    pub tmax: f64,
    pub sampling_interval: f64,
    pub seed: u64,
    pub init_temperature: Option<f64>,
    pub eta: f64,
    pub jump_recoil: bool,
    pub bins: usize,
    pub combine_modes: bool,
    pub peak_observable: PeakObservable,
    pub gamma0_grid: Vec<f64>,
    /// Probe detunings in units of Ω_x.
    pub delta_ratio_grid: Vec<f64>,
    pub delta0_grid: Vec<f64>,
    /// Pump rates of the scaling sweep in units of the predicted resonance.
    pub sr_ratio_grid: Vec<f64>,
    pub spectrum_gamma0_grid: Vec<f64>,
    pub spectrum_atoms: usize,
    pub spectrum_tmax: f64,
    pub out: PathBuf,
}

impl RunSpec {
    pub fn with_command(command: Command) -> Self {
        Self {
            command,
            delta0: -50.0,
            gamma0: 6.75,
            theta_deg: 30.0,
            probe_ratio: 0.09,
            delta: None,
            reference_factor: 100.0,
            reference_model: ProbeModel::TimeAveraged,
            atoms: 500,
            thermalization: None,
            tmax: 2000.0,
            sampling_interval: 1.0,
            seed: 0x5eed,
            init_temperature: None,
            eta: 1.0,
            jump_recoil: true,
            bins: 64,
            combine_modes: false,
            peak_observable: PeakObservable::Xi,
            gamma0_grid: vec![2.0, 3.0, 4.5, 6.75, 10.0, 15.0, 22.0],
            delta_ratio_grid: vec![0.5, 0.7, 0.85, 1.0, 1.15, 1.3, 1.5],
            delta0_grid: vec![-50.0, -100.0, -200.0, -400.0],
            sr_ratio_grid: vec![0.3, 0.45, 0.67, 1.0, 1.5, 2.2, 3.3],
            spectrum_gamma0_grid: vec![],
            spectrum_atoms: 100,
            spectrum_tmax: 500.0,
            out: PathBuf::from("out"),
        }
    }

    /// Lattice parameters at the spec's own Γ₀′ and δ.
    pub fn lattice(&self) -> LatticeConfig {
        let mut cfg = LatticeConfig {
            light_shift: self.delta0,
            pump_rate: self.gamma0,
            half_angle: self.theta_deg.to_radians(),
            probe_ratio: self.probe_ratio,
            probe_detuning: 0.0,
        };
        cfg.probe_detuning = self.delta.unwrap_or_else(|| self.omega_x());
        cfg
    }

    pub fn omega_x(&self) -> f64 {
        latticemc_core::geometry::oscillation_frequency(self.delta0, self.theta_deg.to_radians())
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            n_atoms: self.atoms,
            thermalization_time: self.thermalization,
            measurement_time: self.tmax,
            sampling_interval: self.sampling_interval,
            master_seed: self.seed,
            init_temperature: self.init_temperature,
            noise_scale: self.eta,
            jump_recoil: self.jump_recoil,
            probe_model: ProbeModel::Coherent,
        }
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "command" => {
                self.command = Command::parse(v).ok_or_else(|| mismatch(key, v, "a command name"))?
            }
            "delta0" => self.delta0 = float(key, v)?,
            "gamma0" => self.gamma0 = float(key, v)?,
            "theta_deg" => self.theta_deg = float(key, v)?,
            "probe_ratio" => self.probe_ratio = float(key, v)?,
            "delta" => self.delta = optional(key, v, float)?,
            "reference_factor" => self.reference_factor = float(key, v)?,
            "reference_model" => {
                self.reference_model = match v {
                    "time_averaged" => ProbeModel::TimeAveraged,
                    "coherent" => ProbeModel::Coherent,
                    _ => return Err(mismatch(key, v, "`time_averaged` or `coherent`")),
                }
            }
            "atoms" => self.atoms = integer(key, v)?,
            "thermalization" => self.thermalization = optional(key, v, float)?,
            "tmax" => self.tmax = float(key, v)?,
            "sampling_interval" => self.sampling_interval = float(key, v)?,
            "seed" => self.seed = seed(key, v)?,
            "init_temperature" => self.init_temperature = optional(key, v, float)?,
            "eta" => self.eta = float(key, v)?,
            "jump_recoil" => self.jump_recoil = boolean(key, v)?,
            "bins" => self.bins = integer(key, v)?,
            "combine_modes" => self.combine_modes = boolean(key, v)?,
            "peak_observable" => {
                self.peak_observable = match v {
                    "xi" => PeakObservable::Xi,
                    "d_x" => PeakObservable::Dx,
                    "a" => PeakObservable::A,
                    _ => return Err(mismatch(key, v, "`xi`, `d_x` or `a`")),
                }
            }
            "gamma0_grid" => self.gamma0_grid = list(key, v)?,
            "delta_ratio_grid" => self.delta_ratio_grid = list(key, v)?,
            "delta0_grid" => self.delta0_grid = list(key, v)?,
            "sr_ratio_grid" => self.sr_ratio_grid = list(key, v)?,
            "spectrum_gamma0_grid" => self.spectrum_gamma0_grid = list(key, v)?,
            "spectrum_atoms" => self.spectrum_atoms = integer(key, v)?,
            "spectrum_tmax" => self.spectrum_tmax = float(key, v)?,
            "out" => self.out = PathBuf::from(v),
            _ => return Err(ConfigError::UnknownKey { key: key.to_string() }),
        }
        Ok(())
    }

    /// Range checks that the type system does not cover.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if !(self.theta_deg > 0.0 && self.theta_deg < 90.0) {
            return invalid(format!("theta_deg must lie in (0, 90), got {}", self.theta_deg));
        }
        self.lattice().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.ensemble().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.bins < 4 {
            return invalid("bins must be at least 4".into());
        }
        if !(self.reference_factor >= 0.0) {
            return invalid("reference_factor must be non-negative".into());
        }
        let grid = |name: &str, g: &[f64]| -> Result<(), ConfigError> {
            if g.is_empty() {
                return Err(ConfigError::Invalid(format!("{name} must not be empty for {}", self.command)));
            }
            Ok(())
        };
        match self.command {
            Command::SweepGamma => grid("gamma0_grid", &self.gamma0_grid)?,
            Command::SweepDelta => grid("delta_ratio_grid", &self.delta_ratio_grid)?,
            Command::Spectrum => grid("delta_ratio_grid", &self.delta_ratio_grid)?,
            Command::SrScaling => {
                grid("delta0_grid", &self.delta0_grid)?;
                grid("sr_ratio_grid", &self.sr_ratio_grid)?;
            }
            _ => {}
        }
        if self.delta0_grid.iter().any(|d| !(*d < 0.0)) {
            return invalid("delta0_grid entries must be negative".into());
        }
        for (name, g) in [
            ("gamma0_grid", &self.gamma0_grid),
            ("spectrum_gamma0_grid", &self.spectrum_gamma0_grid),
            ("sr_ratio_grid", &self.sr_ratio_grid),
        ] {
            if g.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return invalid(format!("{name} entries must be non-negative"));
            }
        }
        Ok(())
    }

    /// Every key in canonical order, one `key = value` per line.
    pub fn canonical(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "auto".to_string(), |x| x.to_string());
        let list = |g: &[f64]| g.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        let model = |m: ProbeModel| match m {
            ProbeModel::TimeAveraged => "time_averaged",
            ProbeModel::Coherent => "coherent",
        };
        let values: [String; 27] = [
            self.command.to_string(),
            self.delta0.to_string(),
            self.gamma0.to_string(),
            self.theta_deg.to_string(),
            self.probe_ratio.to_string(),
            opt(self.delta),
            self.reference_factor.to_string(),
            model(self.reference_model).to_string(),
            self.atoms.to_string(),
            opt(self.thermalization),
            self.tmax.to_string(),
            self.sampling_interval.to_string(),
            self.seed.to_string(),
            opt(self.init_temperature),
            self.eta.to_string(),
            self.jump_recoil.to_string(),
            self.bins.to_string(),
            self.combine_modes.to_string(),
            self.peak_observable.name().to_string(),
            list(&self.gamma0_grid),
            list(&self.delta_ratio_grid),
            list(&self.delta0_grid),
            list(&self.sr_ratio_grid),
            list(&self.spectrum_gamma0_grid),
            self.spectrum_atoms.to_string(),
            self.spectrum_tmax.to_string(),
            self.out.display().to_string(),
        ];
        KEYS.iter().zip(values).map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn mismatch(key: &str, value: &str, expected: &'static str) -> ConfigError {
    ConfigError::TypeMismatch { key: key.to_string(), value: value.to_string(), expected }
}

fn float(key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| mismatch(key, v, "a finite number"))
}

fn integer(key: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse().map_err(|_| mismatch(key, v, "a non-negative integer"))
}

fn seed(key: &str, v: &str) -> Result<u64, ConfigError> {
    let parsed = match v.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => v.parse().ok(),
    };
    parsed.ok_or_else(|| mismatch(key, v, "a 64-bit unsigned integer"))
}

fn boolean(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(mismatch(key, v, "a boolean")),
    }
}

fn optional<F>(key: &str, v: &str, parse: F) -> Result<Option<f64>, ConfigError>
where
    F: Fn(&str, &str) -> Result<f64, ConfigError>,
{
    if v == "auto" {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

fn list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|item| float(key, item.trim()).map_err(|_| mismatch(key, v, "a comma-separated list of numbers")))
        .collect()
}

/// Splits config text into `(key, value)` pairs, skipping blanks and comments.
pub fn entries(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parses config text, then applies `overrides` (command-line flags and
/// `key=value` arguments) on top. `command` may come from either source.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<RunSpec, ConfigError> {
    let mut all = entries(text)?;
    all.extend(overrides.iter().cloned());
    let command = all
        .iter()
        .rev()
        .find(|(k, _)| k == "command")
        .map(|(_, v)| v.clone())
        .ok_or(ConfigError::MissingRequired("command"))?;
    let command = Command::parse(&command).ok_or_else(|| mismatch("command", &command, "a command name"))?;
    let mut spec = RunSpec::with_command(command);
    for (k, v) in &all {
        spec.set(k, v)?;
    }
    spec.validate()?;
    Ok(spec)
}
