//! Closed-loop Dolinar receiver simulated event by event.

use std::collections::VecDeque;

use num_complex::Complex64;
use rand::Rng;

use super::likelihood::{ConditionalPair, FeedbackRecord, LikelihoodTracker};
use super::Hypothesis;
use crate::analytic::DolinarPolicy;
use crate::detector::{
    next_arrival, next_dark_count, Click, ClickRecord, ClickSource, DetectorModel, RateFunction,
};
use crate::error::{Error, Result};
use crate::numerics::OdeTolerance;
use crate::signal::{BinaryAlphabet, Codeword};

/// Step control for replaying a trajectory's likelihoods.
const TRACKING_TOLERANCE: OdeTolerance = OdeTolerance {
    relative: 1e-12,
    absolute: 1e-15,
};

/// Limit on the local-oscillator magnitude |u|.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AmplitudeCap {
    /// A multiple of the peak signal amplitude.
    Relative(f64),
    /// An absolute amplitude in √(counts/s).
    Absolute(f64),
}

impl AmplitudeCap {
    /// Resolves the cap for a pulse of peak amplitude `peak`.
    pub fn resolve(self, peak: f64) -> f64 {
        let cap = match self {
            Self::Relative(k) => k * peak,
            Self::Absolute(u) => u,
        };
        cap.max(f64::MIN_POSITIVE)
    }

    fn value(self) -> f64 {
        match self {
            Self::Relative(v) | Self::Absolute(v) => v,
        }
    }
}

impl Default for AmplitudeCap {
    fn default() -> Self {
        Self::Relative(1e3)
    }
}

/// Imperfections of the feedback loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackModel {
    /// Latency τ between a click and the corresponding control switch.
    pub delay: f64,
    /// Phase δφ of the received pulse relative to the local oscillator.
    pub phase_error: f64,
    pub amplitude_cap: AmplitudeCap,
    /// Multiplier on the control law; 1.0 is the optimal policy.
    pub gain: f64,
}

impl FeedbackModel {
    pub fn ideal() -> Self {
        Self {
            delay: 0.0,
            phase_error: 0.0,
            amplitude_cap: AmplitudeCap::default(),
            gain: 1.0,
        }
    }

    pub fn new(delay: f64, phase_error: f64) -> Self {
        Self {
            delay,
            phase_error,
            ..Self::ideal()
        }
    }

    pub fn with_amplitude_cap(mut self, cap: AmplitudeCap) -> Self {
        self.amplitude_cap = cap;
        self
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn validate(&self, duration: f64) -> Result<()> {
        if !(self.delay.is_finite() && self.delay >= 0.0 && self.delay < duration) {
            return Err(Error::OutOfRange {
                name: "feedback delay",
                value: self.delay,
            });
        }
        if !self.phase_error.is_finite() {
            return Err(Error::OutOfRange {
                name: "phase error",
                value: self.phase_error,
            });
        }
        let cap = self.amplitude_cap.value();
        if !(cap.is_finite() && cap > 0.0) {
            return Err(Error::OutOfRange {
                name: "amplitude cap",
                value: cap,
            });
        }
        if !(self.gain.is_finite() && self.gain >= 0.0) {
            return Err(Error::OutOfRange {
                name: "policy gain",
                value: self.gain,
            });
        }
        Ok(())
    }

    /// The control law this feedback loop applies.
    pub fn policy(&self, alphabet: &BinaryAlphabet, eta: f64) -> Result<DolinarPolicy> {
        let cap = self
            .amplitude_cap
            .resolve(alphabet.envelope.peak_amplitude());
        DolinarPolicy::new(alphabet, eta, cap)?.with_gain(self.gain)
    }
}

impl Default for FeedbackModel {
    fn default() -> Self {
        Self::ideal()
    }
}

/// Detected intensity η|ψ(t)e^{iδφ} + u(t)|² while the control law follows
/// one hypothesis branch.
#[derive(Debug, Clone, Copy)]
pub struct DolinarRate<'a> {
    policy: &'a DolinarPolicy,
    hypothesis: Hypothesis,
    signal: Complex64,
    eta: f64,
}

impl<'a> DolinarRate<'a> {
    pub fn new(
        policy: &'a DolinarPolicy,
        hypothesis: Hypothesis,
        truth: Codeword,
        phase_error: f64,
        eta: f64,
    ) -> Self {
        let signal = if truth.carries_pulse() {
            Complex64::from_polar(1.0, phase_error)
        } else {
            Complex64::new(0.0, 0.0)
        };
        Self {
            policy,
            hypothesis,
            signal,
            eta,
        }
    }
}

impl RateFunction for DolinarRate<'_> {
    fn rate(&self, t: f64) -> f64 {
        let psi = self.policy.envelope().amplitude(t) * self.signal;
        self.eta * (psi + self.policy.amplitude(t, self.hypothesis)).norm_sqr()
    }

    fn max_rate_on(&self, t0: f64, _t1: f64) -> f64 {
        let psi = self.signal.norm() * self.policy.envelope().peak_amplitude();
        self.eta * (psi + self.policy.magnitude_bound_from(t0)).powi(2)
    }
}

/// An interval during which the control followed one hypothesis branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSegment {
    pub start: f64,
    pub end: f64,
    pub hypothesis: Hypothesis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryClick {
    pub time: f64,
    pub source: ClickSource,
    /// Branch the control was following when the click arrived.
    pub hypothesis: Hypothesis,
}

/// Everything recorded during one run of the Dolinar receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct DolinarTrajectory {
    policy: DolinarPolicy,
    phase_error: f64,
    initial: Hypothesis,
    decision: Hypothesis,
    clicks: Vec<TrajectoryClick>,
    segments: Vec<ControlSegment>,
}

impl DolinarTrajectory {
    pub fn initial_hypothesis(&self) -> Hypothesis {
        self.initial
    }

    /// Decision after the last click: the initial hypothesis flipped once
    /// per registered click.
    pub fn decision(&self) -> Hypothesis {
        self.decision
    }

    pub fn clicks(&self) -> &[TrajectoryClick] {
        &self.clicks
    }

    pub fn segments(&self) -> &[ControlSegment] {
        &self.segments
    }

    pub fn policy(&self) -> &DolinarPolicy {
        &self.policy
    }

    pub fn click_record(&self) -> ClickRecord {
        ClickRecord::from_clicks_unchecked(
            self.policy.envelope().duration(),
            self.clicks
                .iter()
                .map(|c| Click {
                    time: c.time,
                    source: c.source,
                })
                .collect(),
        )
    }

    pub fn control_record(&self) -> FeedbackRecord {
        FeedbackRecord::new(self.policy, self.segments.clone())
            .expect("segments produced by dolinar_run tile the interval")
    }

    fn tracker(&self, alphabet: &BinaryAlphabet) -> LikelihoodTracker<FeedbackRecord> {
        LikelihoodTracker::new(self.control_record(), alphabet, self.eta())
            .with_phase_error(self.phase_error)
            .with_tolerance(TRACKING_TOLERANCE)
    }

    fn eta(&self) -> f64 {
        self.policy.efficiency()
    }

    /// (ln Λ(tk⁻), ln Λ(tk⁺)) at every click.
    pub fn likelihood_jumps(&self, alphabet: &BinaryAlphabet) -> Result<Vec<(f64, f64)>> {
        let mut tracker = self.tracker(alphabet);
        let mut out = Vec::with_capacity(self.clicks.len());
        for c in &self.clicks {
            tracker.advance_to(c.time)?;
            let left = tracker.log_ratio();
            tracker.click();
            out.push((left, tracker.log_ratio()));
        }
        Ok(out)
    }

    /// ln Λ over the full interval.
    pub fn log_likelihood_ratio(&self, alphabet: &BinaryAlphabet) -> Result<f64> {
        let mut tracker = self.tracker(alphabet);
        for c in &self.clicks {
            tracker.advance_to(c.time)?;
            tracker.click();
        }
        tracker.advance_to(self.policy.envelope().duration())?;
        Ok(tracker.log_ratio())
    }

    /// Posterior cost J just before and just after every click, each for
    /// the branch in force on that side of the click.
    pub fn cost_jumps(&self, alphabet: &BinaryAlphabet) -> Result<Vec<(f64, f64)>> {
        let record = self.control_record();
        let mut tracker = self.tracker(alphabet);
        let mut out = Vec::with_capacity(self.clicks.len());
        for c in &self.clicks {
            tracker.advance_to(c.time)?;
            let left = tracker.cost(c.hypothesis);
            tracker.click();
            let after = branch_after(&record, c.time);
            out.push((left, tracker.cost(after)));
        }
        Ok(out)
    }

    /// Posterior conditional-error pair p(t) on a nondecreasing time grid.
    pub fn conditional_probabilities(
        &self,
        alphabet: &BinaryAlphabet,
        grid: &[f64],
    ) -> Result<Vec<ConditionalPair>> {
        let record = self.control_record();
        let mut tracker = self.tracker(alphabet);
        let mut clicks = self.clicks.iter().peekable();
        let mut out = Vec::with_capacity(grid.len());
        for &t in grid {
            while let Some(c) = clicks.next_if(|c| c.time <= t) {
                tracker.advance_to(c.time)?;
                tracker.click();
            }
            tracker.advance_to(t)?;
            out.push(tracker.conditional_pair(branch_after(&record, t)));
        }
        Ok(out)
    }

    /// Posterior cost J(t) on a nondecreasing time grid.
    pub fn cost_profile(&self, alphabet: &BinaryAlphabet, grid: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .conditional_probabilities(alphabet, grid)?
            .iter()
            .map(|p| p.cost(alphabet.xi0(), alphabet.xi1()))
            .collect())
    }
}

fn branch_after(record: &FeedbackRecord, t: f64) -> Hypothesis {
    let segments = record.segments();
    let i = segments.partition_point(|s| s.end <= t);
    segments[i.min(segments.len() - 1)].hypothesis
}

/// Simulates one Dolinar measurement of codeword `truth`.
///
/// The receiver starts on the hypothesis favoured by the priors (H1 on a
/// tie) and reverses its decision at every registered click. The control
/// envelope follows the pre-computed policy in real time, while the branch
/// switch for each click takes effect `delay` later. Clicks are generated
/// online: detected signal photons at η|ψe^{iδφ} + u|², dark counts, dead
/// time after every click, afterpulses at dead-time expiry, and
/// saturation once the maximum count is reached.
pub fn dolinar_run<G: Rng + ?Sized>(
    truth: Codeword,
    alphabet: &BinaryAlphabet,
    detector: &DetectorModel,
    feedback: &FeedbackModel,
    rng: &mut G,
) -> Result<(Hypothesis, DolinarTrajectory)> {
    detector.validate()?;
    let duration = alphabet.envelope.duration();
    feedback.validate(duration)?;
    let policy = feedback.policy(alphabet, detector.efficiency)?;
    let cap = detector.saturation_count(duration);
    let initial = Hypothesis::a_priori(alphabet.xi0(), alphabet.xi1());

    let mut decision = initial;
    let mut applied = initial;
    let mut segment_start = 0.0;
    let mut segments = Vec::new();
    let mut clicks = Vec::new();
    let mut pending_flips: VecDeque<f64> = VecDeque::new();
    let mut dead_until = f64::NEG_INFINITY;
    let mut afterpulse: Option<f64> = None;
    let mut t = 0.0;

    loop {
        while let Some(&f) = pending_flips.front() {
            if f > t || f > duration {
                break;
            }
            pending_flips.pop_front();
            segments.push(ControlSegment {
                start: segment_start,
                end: f,
                hypothesis: applied,
            });
            segment_start = f;
            applied = applied.flip();
        }
        if t >= duration {
            break;
        }
        let segment_end = pending_flips
            .front()
            .copied()
            .unwrap_or(f64::INFINITY)
            .min(duration);

        let event = if clicks.len() >= cap {
            None
        } else if let Some(ap) = afterpulse {
            (ap < segment_end).then_some((ap, ClickSource::Afterpulse))
        } else {
            let live_from = t.max(dead_until);
            if live_from >= segment_end {
                None
            } else {
                let rate = DolinarRate::new(
                    &policy,
                    applied,
                    truth,
                    feedback.phase_error,
                    detector.efficiency,
                );
                let signal = next_arrival(&rate, live_from, segment_end, rng)?;
                let dark = next_dark_count(detector, live_from, rng);
                match signal {
                    Some(s) if s <= dark => Some((s, ClickSource::Signal)),
                    _ => (dark < segment_end).then_some((dark, ClickSource::Dark)),
                }
            }
        };

        let Some((time, source)) = event else {
            t = segment_end;
            continue;
        };
        if source == ClickSource::Afterpulse {
            afterpulse = None;
        }
        clicks.push(TrajectoryClick {
            time,
            source,
            hypothesis: applied,
        });
        decision = decision.flip();
        pending_flips.push_back(time + feedback.delay);
        dead_until = time + detector.dead_time;
        if detector.afterpulse_prob > 0.0
            && rng.random::<f64>() < detector.afterpulse_prob
            && dead_until <= duration
        {
            afterpulse = Some(dead_until);
        }
        t = time;
    }
    segments.push(ControlSegment {
        start: segment_start,
        end: duration,
        hypothesis: applied,
    });

    let trajectory = DolinarTrajectory {
        policy,
        phase_error: feedback.phase_error,
        initial,
        decision,
        clicks,
        segments,
    };
    Ok((decision, trajectory))
}
