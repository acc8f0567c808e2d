//! Likelihood-ratio bookkeeping for photon-counting receivers with a
//! time-dependent local oscillator.
//!
//! For codeword i the click intensity is Φi(t) = |ψi(t) + u(t)|², with ψ0 = 0.
//! A click record {t1, …, tn} has likelihood
//! ηⁿ Πk Φi(tk) · exp(−η∫₀ᵀ Φi), so
//! ln Λ = ln(ξ1/ξ0) + Σk ln[Φ1(tk)/Φ0(tk)] − η∫₀ᵀ (Φ1 − Φ0).

use num_complex::Complex64;

use super::dolinar::ControlSegment;
use super::Hypothesis;
use crate::analytic::DolinarPolicy;
use crate::detector::{ClickRecord, RateFunction};
use crate::error::{Error, Result};
use crate::numerics::{dormand_prince, OdeTolerance};
use crate::signal::{BinaryAlphabet, SignalEnvelope};

/// A local-oscillator amplitude u(t) known on the whole interval.
pub trait ControlSignal {
    /// Left-continuous amplitude: at a switching time this is the value in
    /// force just before the switch.
    fn amplitude(&self, t: f64) -> Complex64;

    /// Right-continuous amplitude.
    fn amplitude_after(&self, t: f64) -> Complex64 {
        self.amplitude(t)
    }

    /// Times strictly inside (t0, t1) at which the amplitude is not smooth.
    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64>;
}

impl<C: ControlSignal + ?Sized> ControlSignal for &C {
    fn amplitude(&self, t: f64) -> Complex64 {
        (**self).amplitude(t)
    }

    fn amplitude_after(&self, t: f64) -> Complex64 {
        (**self).amplitude_after(t)
    }

    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        (**self).breakpoints(t0, t1)
    }
}

/// No local oscillator (direct detection).
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroControl;

impl ControlSignal for ZeroControl {
    fn amplitude(&self, _t: f64) -> Complex64 {
        Complex64::new(0.0, 0.0)
    }

    fn breakpoints(&self, _t0: f64, _t1: f64) -> Vec<f64> {
        Vec::new()
    }
}

/// The control actually applied during a Dolinar run: the policy evaluated
/// on piecewise-constant hypothesis segments.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRecord {
    policy: DolinarPolicy,
    segments: Vec<ControlSegment>,
}

impl FeedbackRecord {
    /// `segments` must tile the measurement interval in order.
    pub fn new(policy: DolinarPolicy, segments: Vec<ControlSegment>) -> Result<Self> {
        let duration = policy.envelope().duration();
        let first_ok = segments.first().is_some_and(|s| s.start == 0.0);
        let last_ok = segments.last().is_some_and(|s| s.end == duration);
        let tiled = segments
            .windows(2)
            .all(|w| w[0].end == w[1].start && w[0].hypothesis != w[1].hypothesis);
        let ordered = segments.iter().all(|s| s.start <= s.end);
        if !(first_ok && last_ok && tiled && ordered) {
            return Err(Error::Domain(
                "control segments must tile [0, T] with alternating hypotheses".into(),
            ));
        }
        Ok(Self { policy, segments })
    }

    pub fn policy(&self) -> &DolinarPolicy {
        &self.policy
    }

    pub fn segments(&self) -> &[ControlSegment] {
        &self.segments
    }

    fn hypothesis_left(&self, t: f64) -> Hypothesis {
        let i = self.segments.partition_point(|s| s.end < t);
        self.segments[i.min(self.segments.len() - 1)].hypothesis
    }

    fn hypothesis_right(&self, t: f64) -> Hypothesis {
        let i = self.segments.partition_point(|s| s.end <= t);
        self.segments[i.min(self.segments.len() - 1)].hypothesis
    }
}

impl ControlSignal for FeedbackRecord {
    fn amplitude(&self, t: f64) -> Complex64 {
        self.policy.amplitude(t, self.hypothesis_left(t))
    }

    fn amplitude_after(&self, t: f64) -> Complex64 {
        self.policy.amplitude(t, self.hypothesis_right(t))
    }

    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut points: Vec<f64> = self
            .segments
            .iter()
            .map(|s| s.start)
            .chain(
                [Hypothesis::H0, Hypothesis::H1]
                    .into_iter()
                    .filter_map(|h| self.policy.clamp_release_time(h)),
            )
            .filter(|&p| p > t0 && p < t1)
            .collect();
        points.sort_by(f64::total_cmp);
        points.dedup();
        points
    }
}

/// The conditional error pair p = (p[H1|ρ0], p[H0|ρ1]); the cost is
/// J = ξ0·p0 + ξ1·p1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalPair {
    pub p0: f64,
    pub p1: f64,
}

impl ConditionalPair {
    pub fn new(p0: f64, p1: f64) -> Self {
        Self { p0, p1 }
    }

    pub fn cost(&self, xi0: f64, xi1: f64) -> f64 {
        xi0 * self.p0 + xi1 * self.p1
    }
}

/// Which of the two smooth-evolution systems applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodBranch {
    /// Λ > 1: the receiver currently favours H1.
    FavoursH1,
    /// Λ < 1: the receiver currently favours H0.
    FavoursH0,
}

impl From<Hypothesis> for LikelihoodBranch {
    fn from(h: Hypothesis) -> Self {
        match h {
            Hypothesis::H1 => Self::FavoursH1,
            Hypothesis::H0 => Self::FavoursH0,
        }
    }
}

fn positive_rate<R: RateFunction + ?Sized>(rate: &R, t: f64) -> Result<f64> {
    let r = rate.rate(t);
    if r > 0.0 && r.is_finite() {
        Ok(r)
    } else {
        Err(Error::Domain(format!(
            "intensity {r} at t = {t} must be strictly positive and finite"
        )))
    }
}

/// Evolves p between clicks with
///
/// Λ > 1: ṗ0 = η p0 [d/dt ln Φ0 − Φ0],  ṗ1 = η p1 [Φ1 − d/dt ln Φ1],
/// Λ < 1: ṗ0 = η p0 [Φ0 − d/dt ln Φ0],  ṗ1 = η p1 [d/dt ln Φ1 − Φ1].
///
/// The logarithmic-derivative terms integrate exactly to η ln[Φ(t_end)/Φ(t_start)];
/// the intensity integrals are computed with adaptive Dormand-Prince steps.
pub fn propagate_conditional_probabilities<R0, R1>(
    p: ConditionalPair,
    t_start: f64,
    t_end: f64,
    phi0: &R0,
    phi1: &R1,
    branch: LikelihoodBranch,
    eta: f64,
) -> Result<ConditionalPair>
where
    R0: RateFunction + ?Sized,
    R1: RateFunction + ?Sized,
{
    if t_end < t_start {
        return Err(Error::Domain(format!(
            "cannot propagate backwards from {t_start} to {t_end}"
        )));
    }
    if t_end == t_start {
        return Ok(p);
    }
    let start = [positive_rate(phi0, t_start)?, positive_rate(phi1, t_start)?];
    let end = [positive_rate(phi0, t_end)?, positive_rate(phi1, t_end)?];
    let integrals = dormand_prince(
        |t, _| Ok([positive_rate(phi0, t)?, positive_rate(phi1, t)?]),
        t_start,
        [0.0, 0.0],
        t_end,
        OdeTolerance::default(),
    )?;
    let log_growth = |i: usize| eta * ((end[i] / start[i]).ln() - integrals[i]);
    let (g0, g1) = match branch {
        LikelihoodBranch::FavoursH1 => (log_growth(0), -log_growth(1)),
        LikelihoodBranch::FavoursH0 => (-log_growth(0), log_growth(1)),
    };
    Ok(ConditionalPair::new(p.p0 * g0.exp(), p.p1 * g1.exp()))
}

/// Walks forward in time accumulating the log-likelihoods ln Li of a click
/// record under both codewords.
#[derive(Debug, Clone)]
pub struct LikelihoodTracker<C: ControlSignal> {
    control: C,
    envelope: SignalEnvelope,
    xi0: f64,
    xi1: f64,
    eta: f64,
    signal_rotation: Complex64,
    tolerance: OdeTolerance,
    time: f64,
    log_likelihood: [f64; 2],
}

impl<C: ControlSignal> LikelihoodTracker<C> {
    pub fn new(control: C, alphabet: &BinaryAlphabet, eta: f64) -> Self {
        Self {
            control,
            envelope: alphabet.envelope,
            xi0: alphabet.xi0(),
            xi1: alphabet.xi1(),
            eta,
            signal_rotation: Complex64::new(1.0, 0.0),
            tolerance: OdeTolerance::default(),
            time: 0.0,
            log_likelihood: [0.0, 0.0],
        }
    }

    /// Rotates the received pulse by δφ relative to the local oscillator.
    pub fn with_phase_error(mut self, phase_error: f64) -> Self {
        self.signal_rotation = Complex64::from_polar(1.0, phase_error);
        self
    }

    pub fn with_tolerance(mut self, tolerance: OdeTolerance) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// (ln L0, ln L1), omitting the common ηⁿ factor.
    pub fn log_likelihoods(&self) -> [f64; 2] {
        self.log_likelihood
    }

    fn intensities(&self, t: f64, u: Complex64) -> [f64; 2] {
        let psi = self.envelope.amplitude(t) * self.signal_rotation;
        [u.norm_sqr(), (psi + u).norm_sqr()]
    }

    /// Integrates dLi/dt = −ηΦi from the current time to `t`.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if t < self.time {
            return Err(Error::Domain(format!(
                "likelihood tracker cannot move back from {} to {t}",
                self.time
            )));
        }
        if t == self.time {
            return Ok(());
        }
        let mut edges = vec![self.time];
        edges.extend(self.control.breakpoints(self.time, t));
        edges.push(t);
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let eta = self.eta;
            let this = &*self;
            let rhs = |s: f64, _: &[f64; 2]| {
                let u = if s <= a {
                    this.control.amplitude_after(s)
                } else {
                    this.control.amplitude(s)
                };
                let [f0, f1] = this.intensities(s, u);
                Ok([-eta * f0, -eta * f1])
            };
            self.log_likelihood = dormand_prince(rhs, a, self.log_likelihood, b, self.tolerance)?;
        }
        self.time = t;
        Ok(())
    }

    /// Multiplies in the click densities Φi at the current time, using the
    /// intensity in force just before the click.
    pub fn click(&mut self) {
        let u = self.control.amplitude(self.time);
        let rates = self.intensities(self.time, u);
        for (l, r) in self.log_likelihood.iter_mut().zip(rates) {
            *l += (self.eta * r).ln();
        }
    }

    /// ln Λ = ln(ξ1 L1 / ξ0 L0); ±∞ when one codeword is ruled out.
    pub fn log_ratio(&self) -> f64 {
        let [l0, l1] = self.log_likelihood;
        (self.xi1.ln() + l1) - (self.xi0.ln() + l0)
    }

    /// Posterior conditional errors for the hypothesis the receiver favours.
    pub fn conditional_pair(&self, favoured: Hypothesis) -> ConditionalPair {
        let [l0, l1] = self.log_likelihood;
        let w0 = self.xi0.ln() + l0;
        let w1 = self.xi1.ln() + l1;
        let m = w0.max(w1);
        let log_norm = m + ((w0 - m).exp() + (w1 - m).exp()).ln();
        match favoured {
            Hypothesis::H1 => ConditionalPair::new((l0 - log_norm).exp(), 0.0),
            Hypothesis::H0 => ConditionalPair::new(0.0, (l1 - log_norm).exp()),
        }
    }

    /// Posterior probability that the favoured hypothesis is wrong.
    pub fn cost(&self, favoured: Hypothesis) -> f64 {
        self.conditional_pair(favoured).cost(self.xi0, self.xi1)
    }
}

/// ln Λ over a window [0, `horizon`] for the clicks it contains.
pub fn log_likelihood_ratio_until<C: ControlSignal>(
    clicks: &ClickRecord,
    control: C,
    alphabet: &BinaryAlphabet,
    eta: f64,
    horizon: f64,
) -> Result<f64> {
    let mut tracker = LikelihoodTracker::new(control, alphabet, eta);
    for &t in clicks.times().iter().filter(|&&t| t <= horizon) {
        tracker.advance_to(t)?;
        tracker.click();
    }
    tracker.advance_to(horizon)?;
    Ok(tracker.log_ratio())
}

/// ln Λ for the full measurement interval.
pub fn log_likelihood_ratio<C: ControlSignal>(
    clicks: &ClickRecord,
    control: C,
    alphabet: &BinaryAlphabet,
    eta: f64,
) -> Result<f64> {
    log_likelihood_ratio_until(clicks, control, alphabet, eta, alphabet.envelope.duration())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{BoundedRate, ConstantRate};

    fn alphabet(nbar: f64) -> BinaryAlphabet {
        BinaryAlphabet::equiprobable(SignalEnvelope::rectangular(1.0, nbar).unwrap())
    }

    #[test]
    fn silent_direct_detection() {
        let a = alphabet(1.0);
        let empty = ClickRecord::empty(1.0);
        let l = log_likelihood_ratio(&empty, ZeroControl, &a, 1.0).unwrap();
        assert!((l + 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_window_carries_no_evidence() {
        let a = alphabet(1.0);
        let empty = ClickRecord::empty(1.0);
        let l = log_likelihood_ratio_until(&empty, ZeroControl, &a, 1.0, 0.0).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn click_without_oscillator_rules_out_vacuum() {
        let a = alphabet(1.0);
        let one = ClickRecord::from_times(1.0, &[0.3]).unwrap();
        let l = log_likelihood_ratio(&one, ZeroControl, &a, 1.0).unwrap();
        assert_eq!(l, f64::INFINITY);
    }

    #[test]
    fn constant_rate_propagation_is_exponential() {
        let p = ConditionalPair::new(0.3, 0.2);
        let (f0, f1, eta, dt) = (2.0, 5.0, 0.7, 0.4);
        let out = propagate_conditional_probabilities(
            p,
            0.1,
            0.1 + dt,
            &ConstantRate(f0),
            &ConstantRate(f1),
            LikelihoodBranch::FavoursH1,
            eta,
        )
        .unwrap();
        assert!((out.p0 - 0.3 * (-eta * f0 * dt).exp()).abs() < 1e-9);
        assert!((out.p1 - 0.2 * (eta * f1 * dt).exp()).abs() < 1e-9);

        let back = propagate_conditional_probabilities(
            out,
            0.1,
            0.1 + dt,
            &ConstantRate(f0),
            &ConstantRate(f1),
            LikelihoodBranch::FavoursH0,
            eta,
        )
        .unwrap();
        assert!((back.p0 - 0.3).abs() < 1e-9);
        assert!((back.p1 - 0.2).abs() < 1e-9);
    }

    #[test]
    fn zero_step_leaves_pair_unchanged() {
        let p = ConditionalPair::new(0.3, 0.2);
        let out = propagate_conditional_probabilities(
            p,
            0.5,
            0.5,
            &ConstantRate(1.0),
            &ConstantRate(1.0),
            LikelihoodBranch::FavoursH0,
            1.0,
        )
        .unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn log_derivative_terms_integrate_exactly() {
        let phi = BoundedRate::new(|t: f64| 1.0 + t * t, 2.0);
        let out = propagate_conditional_probabilities(
            ConditionalPair::new(1.0, 1.0),
            0.0,
            1.0,
            &phi,
            &phi,
            LikelihoodBranch::FavoursH1,
            1.0,
        )
        .unwrap();
        let expected = 2.0 * (-(1.0 + 1.0 / 3.0_f64)).exp();
        assert!((out.p0 - expected).abs() < 1e-9);
    }

    #[test]
    fn non_positive_intensity_is_rejected() {
        let err = propagate_conditional_probabilities(
            ConditionalPair::new(0.5, 0.5),
            0.0,
            1.0,
            &BoundedRate::new(|t: f64| 0.5 - t, 1.0),
            &ConstantRate(1.0),
            LikelihoodBranch::FavoursH1,
            1.0,
        );
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn cost_of_priors_alone() {
        let a =
            BinaryAlphabet::new(SignalEnvelope::rectangular(1.0, 1.0).unwrap(), 0.3, 0.7).unwrap();
        let tracker = LikelihoodTracker::new(ZeroControl, &a, 1.0);
        assert!((tracker.cost(Hypothesis::H1) - 0.3).abs() < 1e-15);
        assert!((tracker.cost(Hypothesis::H0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn feedback_record_rejects_gaps() {
        let a = alphabet(1.0);
        let policy = DolinarPolicy::new(&a, 1.0, 1e3).unwrap();
        let seg = |start, end, hypothesis| ControlSegment {
            start,
            end,
            hypothesis,
        };
        assert!(FeedbackRecord::new(policy, vec![seg(0.0, 1.0, Hypothesis::H1)]).is_ok());
        assert!(FeedbackRecord::new(
            policy,
            vec![seg(0.0, 0.4, Hypothesis::H1), seg(0.5, 1.0, Hypothesis::H0)]
        )
        .is_err());
        let record = FeedbackRecord::new(
            policy,
            vec![seg(0.0, 0.4, Hypothesis::H1), seg(0.4, 1.0, Hypothesis::H0)],
        )
        .unwrap();
        assert_eq!(record.amplitude(0.4), policy.amplitude(0.4, Hypothesis::H1));
        assert_eq!(
            record.amplitude_after(0.4),
            policy.amplitude(0.4, Hypothesis::H0)
        );
        assert!(record.breakpoints(0.0, 1.0).contains(&0.4));
    }
}
