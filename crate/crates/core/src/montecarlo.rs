//! Seeded, parallel Monte Carlo estimation of receiver error rates.
//!
//! Trial `i` draws from its own ChaCha8 stream (`set_stream(i)` on a
//! generator seeded from the master seed), so every trial is a pure function
//! of (configuration, master seed, i). Error counts are summed, which makes
//! the result independent of how trials are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::analytic::{
    dolinar_error, kennedy_error, sh_error_at_optimum, sh_receiver_theta, ReceiverErrorCurve,
    SweepVariable,
};
use crate::detector::{
    apply_imperfections, sample_arrivals, sh_click_count_with, CodewordFlux, DetectorModel,
    PhotonNumberSampler,
};
use crate::error::{Error, Result};
use crate::receivers::{dolinar_run, kennedy_decide, sh_decide, FeedbackModel, Hypothesis};
use crate::signal::{BinaryAlphabet, Codeword};

/// Default confidence level of reported intervals.
pub const DEFAULT_CONFIDENCE: f64 = 0.95;

/// Default number of trials per estimate.
pub const DEFAULT_TRIALS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReceiverKind {
    Kennedy,
    SasakiHirota,
    Dolinar,
}

impl ReceiverKind {
    pub const ALL: [ReceiverKind; 3] = [Self::Kennedy, Self::SasakiHirota, Self::Dolinar];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Kennedy => "kennedy",
            Self::SasakiHirota => "sasaki_hirota",
            Self::Dolinar => "dolinar",
        }
    }

    fn stream_id(self) -> u64 {
        match self {
            Self::Kennedy => 1,
            Self::SasakiHirota => 2,
            Self::Dolinar => 3,
        }
    }

    /// Seed for this receiver's runs derived from an experiment seed, so the
    /// receivers of one experiment never share random streams.
    pub fn derive_seed(self, master_seed: u64) -> u64 {
        derive_seed(master_seed, self.stream_id())
    }
}

impl std::fmt::Display for ReceiverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ReceiverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "kennedy" => Ok(Self::Kennedy),
            "sasaki_hirota" | "sh" => Ok(Self::SasakiHirota),
            "dolinar" => Ok(Self::Dolinar),
            other => Err(Error::Configuration(format!("unknown receiver '{other}'"))),
        }
    }
}

/// One Monte Carlo experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialConfig {
    pub receiver: ReceiverKind,
    pub alphabet: BinaryAlphabet,
    pub detector: DetectorModel,
    /// Present exactly when the receiver is Dolinar.
    pub feedback: Option<FeedbackModel>,
    pub trials: u64,
    pub master_seed: u64,
    pub confidence: f64,
}

impl TrialConfig {
    /// Kennedy or Sasaki-Hirota experiment.
    pub fn open_loop(
        receiver: ReceiverKind,
        alphabet: BinaryAlphabet,
        detector: DetectorModel,
        trials: u64,
        master_seed: u64,
    ) -> Self {
        Self {
            receiver,
            alphabet,
            detector,
            feedback: None,
            trials,
            master_seed,
            confidence: DEFAULT_CONFIDENCE,
        }
    }

    pub fn dolinar(
        alphabet: BinaryAlphabet,
        detector: DetectorModel,
        feedback: FeedbackModel,
        trials: u64,
        master_seed: u64,
    ) -> Self {
        Self {
            receiver: ReceiverKind::Dolinar,
            alphabet,
            detector,
            feedback: Some(feedback),
            trials,
            master_seed,
            confidence: DEFAULT_CONFIDENCE,
        }
    }

    /// Builds the configuration for `receiver`, attaching `feedback` only
    /// when it is the Dolinar receiver.
    pub fn for_receiver(
        receiver: ReceiverKind,
        alphabet: BinaryAlphabet,
        detector: DetectorModel,
        feedback: FeedbackModel,
        trials: u64,
        master_seed: u64,
    ) -> Self {
        match receiver {
            ReceiverKind::Dolinar => {
                Self::dolinar(alphabet, detector, feedback, trials, master_seed)
            }
            open => Self::open_loop(open, alphabet, detector, trials, master_seed),
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Configuration(
                "at least one trial is required".into(),
            ));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::OutOfRange {
                name: "confidence level",
                value: self.confidence,
            });
        }
        self.detector.validate()?;
        match (self.receiver, &self.feedback) {
            (ReceiverKind::Dolinar, Some(fb)) => fb.validate(self.alphabet.envelope.duration()),
            (ReceiverKind::Dolinar, None) => Err(Error::Configuration(
                "the Dolinar receiver needs a feedback model".into(),
            )),
            (_, Some(_)) => Err(Error::Configuration(format!(
                "the {} receiver has no feedback loop",
                self.receiver
            ))),
            (_, None) => Ok(()),
        }
    }
}

/// Monte Carlo error-rate estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEstimate {
    pub trials: u64,
    pub errors: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Closed-form error probability for the same configuration, if one exists.
    pub analytic_ref: Option<f64>,
}

impl ErrorEstimate {
    pub fn new(errors: u64, trials: u64, confidence: f64, analytic_ref: Option<f64>) -> Self {
        let (ci_low, ci_high) = wilson_interval(errors, trials, confidence);
        Self {
            trials,
            errors,
            p_hat: errors as f64 / trials as f64,
            ci_low,
            ci_high,
            analytic_ref,
        }
    }

    /// Binomial standard deviation of p̂ if the true error rate is `p`.
    pub fn binomial_sigma(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    /// Plug-in standard error of p̂.
    pub fn standard_error(&self) -> f64 {
        self.binomial_sigma(self.p_hat)
    }

    /// |p̂ − p| in units of the binomial standard deviation at `p`.
    pub fn deviation_in_sigmas(&self, p: f64) -> f64 {
        let sigma = self.binomial_sigma(p);
        if sigma == 0.0 {
            if self.p_hat == p {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.p_hat - p).abs() / sigma
        }
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(errors: u64, trials: u64, confidence: f64) -> (f64, f64) {
    assert!(
        trials >= 1 && errors <= trials,
        "need 0 <= errors <= trials, trials >= 1"
    );
    let z = Normal::standard().inverse_cdf(0.5 + 0.5 * confidence);
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2n = z * z / n;
    let centre = (p + 0.5 * z2n) / (1.0 + z2n);
    let half = z * (p * (1.0 - p) / n + 0.25 * z2n / n).sqrt() / (1.0 + z2n);
    let low = if errors == 0 {
        0.0
    } else {
        (centre - half).clamp(0.0, p)
    };
    let high = if errors == trials {
        1.0
    } else {
        (centre + half).clamp(p, 1.0)
    };
    (low, high)
}

/// SplitMix64 finaliser.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed number `index` of `master_seed`.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index))
}

/// The random generator driving trial `index` of an experiment.
pub fn trial_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Closed-form error probability of the configured receiver, defined when
/// the only detector imperfection is finite efficiency and (for Dolinar)
/// the feedback loop has no delay, phase error, or gain perturbation.
pub fn analytic_ref(config: &TrialConfig) -> Option<f64> {
    let d = &config.detector;
    let efficiency_only = d.dark_rate == 0.0
        && d.dead_time == 0.0
        && d.afterpulse_prob == 0.0
        && d.max_count_rate == f64::INFINITY;
    if !efficiency_only {
        return None;
    }
    closed_form(config)
}

fn closed_form(config: &TrialConfig) -> Option<f64> {
    let a = &config.alphabet;
    let (xi0, xi1, nbar, eta) = (
        a.xi0(),
        a.xi1(),
        a.envelope.mean_photons(),
        config.detector.efficiency,
    );
    match config.receiver {
        ReceiverKind::Kennedy => kennedy_error(xi1, nbar, eta).ok(),
        ReceiverKind::SasakiHirota => sh_error_at_optimum(xi0, xi1, nbar, eta).ok(),
        ReceiverKind::Dolinar => {
            let fb = config.feedback?;
            let ideal_loop = fb.delay == 0.0 && fb.phase_error == 0.0 && fb.gain == 1.0;
            if ideal_loop {
                dolinar_error(xi0, xi1, nbar, eta).ok()
            } else {
                None
            }
        }
    }
}

/// Trials handed to a worker at a time.
const BLOCK: u64 = 512;

/// Per-experiment state shared by all trials.
enum Simulator {
    Kennedy,
    SasakiHirota([PhotonNumberSampler; 2]),
    Dolinar(FeedbackModel),
}

impl Simulator {
    fn prepare(config: &TrialConfig) -> Result<Self> {
        let a = &config.alphabet;
        Ok(match config.receiver {
            ReceiverKind::Kennedy => Self::Kennedy,
            ReceiverKind::SasakiHirota => {
                let nbar = a.envelope.mean_photons();
                let theta = sh_receiver_theta(a.xi0(), a.xi1(), nbar)?;
                if nbar == 0.0 {
                    Self::SasakiHirota([
                        PhotonNumberSampler::vacuum(),
                        PhotonNumberSampler::vacuum(),
                    ])
                } else {
                    Self::SasakiHirota([
                        PhotonNumberSampler::rotated(Codeword::Rho0, theta, nbar)?,
                        PhotonNumberSampler::rotated(Codeword::Rho1, theta, nbar)?,
                    ])
                }
            }
            ReceiverKind::Dolinar => Self::Dolinar(config.feedback.ok_or_else(|| {
                Error::Configuration("the Dolinar receiver needs a feedback model".into())
            })?),
        })
    }

    fn decide<G: Rng>(
        &self,
        truth: Codeword,
        config: &TrialConfig,
        rng: &mut G,
    ) -> Result<Hypothesis> {
        let a = &config.alphabet;
        let duration = a.envelope.duration();
        Ok(match self {
            Self::Kennedy => {
                let flux = CodewordFlux {
                    envelope: &a.envelope,
                    codeword: truth,
                };
                let ideal = sample_arrivals(&flux, duration, rng)?;
                kennedy_decide(&apply_imperfections(
                    &ideal,
                    &config.detector,
                    duration,
                    rng,
                ))
            }
            Self::SasakiHirota(samplers) => {
                let sampler = match truth {
                    Codeword::Rho0 => &samplers[0],
                    Codeword::Rho1 => &samplers[1],
                };
                sh_decide(sh_click_count_with(
                    sampler,
                    duration,
                    &config.detector,
                    rng,
                )?)
            }
            Self::Dolinar(feedback) => dolinar_run(truth, a, &config.detector, feedback, rng)?.0,
        })
    }
}

fn count_errors(config: &TrialConfig) -> Result<u64> {
    config.validate()?;
    let simulator = Simulator::prepare(config)?;
    let xi1 = config.alphabet.xi1();
    let trial = |i: u64| -> Result<u64> {
        let mut rng = trial_rng(config.master_seed, i);
        let truth = if rng.random::<f64>() < xi1 {
            Codeword::Rho1
        } else {
            Codeword::Rho0
        };
        let decision = simulator.decide(truth, config, &mut rng)?;
        Ok(u64::from(!decision.is_correct_for(truth)))
    };
    let blocks = config.trials.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let end = ((b + 1) * BLOCK).min(config.trials);
            (b * BLOCK..end).try_fold(0, |acc, i| Ok(acc + trial(i)?))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

fn with_threads<T: Send>(
    threads: Option<usize>,
    job: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    match threads {
        None => job(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Configuration(format!("cannot start worker pool: {e}")))?
            .install(job),
    }
}

/// Runs the experiment on the global worker pool.
pub fn run_trials(config: &TrialConfig) -> Result<ErrorEstimate> {
    run_trials_with_threads(config, None)
}

/// Runs the experiment on `threads` workers (`None`: the global pool).
pub fn run_trials_with_threads(
    config: &TrialConfig,
    threads: Option<usize>,
) -> Result<ErrorEstimate> {
    let errors = with_threads(threads, || count_errors(config))?;
    Ok(ErrorEstimate::new(
        errors,
        config.trials,
        config.confidence,
        analytic_ref(config),
    ))
}

/// Estimates at each grid point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub variable: SweepVariable,
    pub receiver: ReceiverKind,
    pub points: Vec<(f64, ErrorEstimate)>,
}

impl SweepResult {
    pub fn curve(&self) -> Result<ReceiverErrorCurve> {
        ReceiverErrorCurve::new(
            self.variable,
            self.points.iter().map(|(x, e)| (*x, e.p_hat)).collect(),
        )
    }
}

/// `base` with `variable` set to `value`.
pub fn with_sweep_value(
    base: &TrialConfig,
    variable: SweepVariable,
    value: f64,
) -> Result<TrialConfig> {
    let mut config = *base;
    match variable {
        SweepVariable::MeanPhotons => {
            config.alphabet.envelope = config.alphabet.envelope.with_mean_photons(value)?;
        }
        SweepVariable::Efficiency => {
            config.detector = config.detector.with_efficiency(value)?;
        }
        SweepVariable::PhaseError => {
            let fb = config.feedback.as_mut().ok_or_else(|| {
                Error::Configuration(format!(
                    "phase error only applies to the Dolinar receiver, not {}",
                    base.receiver
                ))
            })?;
            fb.phase_error = value;
        }
    }
    Ok(config)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Configuration("sweep grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|x| !x.is_finite()) {
        return Err(Error::Configuration(format!(
            "sweep grid value {bad} is not finite"
        )));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Configuration(
            "sweep grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// One experiment per grid point, each with its own derived seed.
pub fn sweep(base: &TrialConfig, variable: SweepVariable, grid: &[f64]) -> Result<SweepResult> {
    sweep_with_threads(base, variable, grid, None)
}

pub fn sweep_with_threads(
    base: &TrialConfig,
    variable: SweepVariable,
    grid: &[f64],
    threads: Option<usize>,
) -> Result<SweepResult> {
    check_grid(grid)?;
    let points = grid
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let mut config = with_sweep_value(base, variable, x)?;
            config.master_seed = derive_seed(base.master_seed, k as u64);
            Ok((x, run_trials_with_threads(&config, threads)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        variable,
        receiver: base.receiver,
        points,
    })
}
