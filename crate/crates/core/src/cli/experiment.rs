//! Experiment specifications: named figure presets and fully explicit
//! custom runs assembled from flags and key=value files.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::analytic::SweepVariable;
use crate::detector::DetectorModel;
use crate::montecarlo::{derive_seed, ReceiverKind, DEFAULT_TRIALS};
use crate::receivers::{AmplitudeCap, FeedbackModel};
use crate::signal::{BinaryAlphabet, SignalEnvelope};

use super::CliError;

/// Pulse duration of every preset, in seconds.
pub const PRESET_DURATION: f64 = 100e-6;

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 1;

/// Keys that fix physics; presets reject them.
pub const PHYSICS_KEYS: [&str; 14] = [
    "receiver",
    "xi1",
    "nbar",
    "eta",
    "duration",
    "dark-rate",
    "dead-time",
    "afterpulse",
    "max-count-rate",
    "delay",
    "phase-error",
    "amplitude-cap",
    "sweep",
    "grid",
];

const RUN_KEYS: [&str; 4] = ["preset", "seed", "trials", "out"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Fig1Amplitude,
    Fig2Efficiency,
    Fig3Realistic,
    Fig4Phase,
    Custom,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fig1Amplitude => "fig1_amplitude",
            Self::Fig2Efficiency => "fig2_efficiency",
            Self::Fig3Realistic => "fig3_realistic",
            Self::Fig4Phase => "fig4_phase",
            Self::Custom => "custom",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "fig1" | "fig1_amplitude" => Ok(Self::Fig1Amplitude),
            "fig2" | "fig2_efficiency" => Ok(Self::Fig2Efficiency),
            "fig3" | "fig3_realistic" => Ok(Self::Fig3Realistic),
            "fig4" | "fig4_phase" => Ok(Self::Fig4Phase),
            "custom" => Ok(Self::Custom),
            other => Err(CliError::Validation(format!("unknown preset '{other}'"))),
        }
    }
}

/// Raw key=value settings; later sources override earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn normalise_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

impl Settings {
    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut settings = Self::default();
        for (index, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Parse(format!(
                    "config line {}: expected key = value, found '{}'",
                    index + 1,
                    raw.trim()
                )));
            };
            let key = normalise_key(key);
            if key.is_empty() {
                return Err(CliError::Parse(format!(
                    "config line {}: empty key",
                    index + 1
                )));
            }
            settings.values.insert(key, value.trim().to_string());
        }
        Ok(settings)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(normalise_key(key), value.into());
    }

    pub fn overlay(&mut self, other: &Settings) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn check_known_keys(&self) -> Result<(), CliError> {
        match self
            .values
            .keys()
            .find(|k| !PHYSICS_KEYS.contains(&k.as_str()) && !RUN_KEYS.contains(&k.as_str()))
        {
            Some(k) => Err(CliError::Validation(format!("unknown setting '{k}'"))),
            None => Ok(()),
        }
    }

    fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key).ok_or_else(|| {
            CliError::Validation(format!(
                "custom experiments need an explicit value for '{key}'"
            ))
        })
    }

    fn float(&self, key: &str) -> Result<f64, CliError> {
        parse_float(key, self.require(key)?)
    }

    fn optional_float(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.get(key).map(|v| parse_float(key, v)).transpose()
    }
}

pub fn parse_float(key: &str, value: &str) -> Result<f64, CliError> {
    let v = value.trim();
    let parsed = match v.to_ascii_lowercase().as_str() {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => v.parse::<f64>(),
    };
    parsed.map_err(|_| CliError::Validation(format!("'{key}' expects a number, got '{value}'")))
}

pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_float(key, s))
        .collect()
}

fn parse_receivers(value: &str) -> Result<Vec<ReceiverKind>, CliError> {
    let mut out = Vec::new();
    for name in value.split(',').filter(|s| !s.trim().is_empty()) {
        let kind = if name.trim() == "all" {
            out.extend(ReceiverKind::ALL);
            continue;
        } else {
            name.parse::<ReceiverKind>()?
        };
        out.push(kind);
    }
    out.sort_by_key(|r| ReceiverKind::ALL.iter().position(|x| x == r));
    out.dedup();
    if out.is_empty() {
        return Err(CliError::Validation("no receiver selected".into()));
    }
    Ok(out)
}

/// One sweep shared by every receiver of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    /// Value of the CSV `sweep_var` column.
    pub label: String,
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub alphabet: BinaryAlphabet,
    pub detector: DetectorModel,
    pub feedback: FeedbackModel,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub receivers: Vec<ReceiverKind>,
    pub series: Vec<Series>,
    pub trials: u64,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Seed of the sweep for `receiver` on series number `series`.
    pub fn sweep_seed(&self, series: usize, receiver: ReceiverKind) -> u64 {
        derive_seed(receiver.derive_seed(self.seed), series as u64)
    }

    pub fn from_settings(settings: &Settings) -> Result<Self, CliError> {
        settings.check_known_keys()?;
        let experiment: Experiment = settings.get("preset").unwrap_or("custom").parse()?;
        let trials = match settings.get("trials") {
            Some(v) => v
                .trim()
                .parse::<u64>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| {
                    CliError::Validation(format!("trials must be a positive integer, got '{v}'"))
                })?,
            None => DEFAULT_TRIALS,
        };
        let seed = match settings.get("seed") {
            Some(v) => v.trim().parse::<u64>().map_err(|_| {
                CliError::Validation(format!("seed must be an unsigned integer, got '{v}'"))
            })?,
            None => DEFAULT_SEED,
        };
        let out = settings.get("out").map(PathBuf::from);

        let (receivers, series) = if experiment == Experiment::Custom {
            custom(settings)?
        } else {
            if let Some(k) = PHYSICS_KEYS.iter().find(|k| settings.contains(k)) {
                return Err(CliError::Validation(format!(
                    "preset {} fixes all physics parameters; '{k}' cannot be overridden",
                    experiment.as_str()
                )));
            }
            preset(experiment)?
        };
        Ok(Self {
            experiment,
            receivers,
            series,
            trials,
            seed,
            out,
        })
    }
}

/// N̄ ∈ {0.1, 0.2, …, 2.0}.
pub fn mean_photon_grid() -> Vec<f64> {
    (1..=20).map(|k| k as f64 / 10.0).collect()
}

/// η ∈ {0.1, 0.2, …, 1.0}.
pub fn efficiency_grid() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

/// δφ from −30° to 30° in 5° steps, in radians.
pub fn phase_grid() -> Vec<f64> {
    (-6..=6).map(|k| (5.0 * k as f64).to_radians()).collect()
}

/// Mean photon numbers of the phase-error preset.
pub const PHASE_PRESET_PHOTONS: [f64; 3] = [0.5, 1.0, 2.0];

/// Feedback delay of the realistic preset, in seconds.
pub const PRESET_DELAY: f64 = 100e-9;

fn equiprobable(nbar: f64) -> Result<BinaryAlphabet, CliError> {
    Ok(BinaryAlphabet::equiprobable(SignalEnvelope::rectangular(
        PRESET_DURATION,
        nbar,
    )?))
}

fn preset(experiment: Experiment) -> Result<(Vec<ReceiverKind>, Vec<Series>), CliError> {
    let all = ReceiverKind::ALL.to_vec();
    let ideal = DetectorModel::ideal();
    let single = |variable: SweepVariable, grid, nbar, detector, feedback| {
        Ok::<_, CliError>(vec![Series {
            label: variable.as_str().to_string(),
            variable,
            grid,
            alphabet: equiprobable(nbar)?,
            detector,
            feedback,
        }])
    };
    Ok(match experiment {
        Experiment::Fig1Amplitude => (
            all,
            single(
                SweepVariable::MeanPhotons,
                mean_photon_grid(),
                1.0,
                ideal,
                FeedbackModel::ideal(),
            )?,
        ),
        Experiment::Fig2Efficiency => (
            all,
            single(
                SweepVariable::Efficiency,
                efficiency_grid(),
                1.0,
                ideal,
                FeedbackModel::ideal(),
            )?,
        ),
        Experiment::Fig3Realistic => (
            all,
            single(
                SweepVariable::MeanPhotons,
                mean_photon_grid(),
                1.0,
                DetectorModel::silicon_apd(),
                FeedbackModel::new(PRESET_DELAY, 0.0),
            )?,
        ),
        Experiment::Fig4Phase => (
            vec![ReceiverKind::Dolinar],
            PHASE_PRESET_PHOTONS
                .iter()
                .map(|&nbar| {
                    Ok(Series {
                        label: format!("{}:nbar={nbar}", SweepVariable::PhaseError.as_str()),
                        variable: SweepVariable::PhaseError,
                        grid: phase_grid(),
                        alphabet: equiprobable(nbar)?,
                        detector: ideal,
                        feedback: FeedbackModel::ideal(),
                    })
                })
                .collect::<Result<_, CliError>>()?,
        ),
        Experiment::Custom => unreachable!("custom experiments are built from settings"),
    })
}

fn custom(s: &Settings) -> Result<(Vec<ReceiverKind>, Vec<Series>), CliError> {
    let receivers = parse_receivers(s.require("receiver")?)?;
    let (variable, grid) = match s.get("sweep") {
        Some(v) => {
            let variable: SweepVariable = v.parse()?;
            (variable, parse_list("grid", s.require("grid")?)?)
        }
        None => {
            if s.contains("grid") {
                return Err(CliError::Validation(
                    "'grid' needs a 'sweep' variable".into(),
                ));
            }
            (SweepVariable::MeanPhotons, vec![s.float("nbar")?])
        }
    };
    let swept = |v: SweepVariable| variable == v;
    let fixed = |key: &str, v: SweepVariable, fallback: f64| -> Result<f64, CliError> {
        if swept(v) {
            Ok(s.optional_float(key)?.unwrap_or(fallback))
        } else {
            s.float(key)
        }
    };

    let xi1 = s.float("xi1")?;
    let nbar = fixed("nbar", SweepVariable::MeanPhotons, grid[0])?;
    let envelope = SignalEnvelope::rectangular(s.float("duration")?, nbar)?;
    let alphabet = BinaryAlphabet::new(envelope, 1.0 - xi1, xi1)?;
    let detector = DetectorModel::new(
        fixed("eta", SweepVariable::Efficiency, grid[0])?,
        s.float("dark-rate")?,
        s.float("dead-time")?,
        s.float("afterpulse")?,
        s.float("max-count-rate")?,
    )?;
    let feedback = if receivers.contains(&ReceiverKind::Dolinar) {
        let mut fb = FeedbackModel::new(
            s.float("delay")?,
            fixed("phase-error", SweepVariable::PhaseError, 0.0)?,
        );
        if let Some(cap) = s.optional_float("amplitude-cap")? {
            fb = fb.with_amplitude_cap(AmplitudeCap::Relative(cap));
        }
        fb.validate(envelope.duration())?;
        fb
    } else {
        if swept(SweepVariable::PhaseError) {
            return Err(CliError::Validation(
                "a phase-error sweep only applies to the Dolinar receiver".into(),
            ));
        }
        FeedbackModel::ideal()
    };
    Ok((
        receivers,
        vec![Series {
            label: variable.as_str().to_string(),
            variable,
            grid,
            alphabet,
            detector,
            feedback,
        }],
    ))
}
