//! Stochastic photodetection.
//!
//! Ideal photon arrivals are drawn from an inhomogeneous Poisson process by
//! thinning, then pushed through an avalanche-photodiode model:
//! efficiency thinning, dark counts, non-paralysable dead time, afterpulsing
//! at dead-time expiry, and hard saturation of the total count.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp};

use crate::analytic::sh_photon_number_probabilities;
use crate::error::{check_probability, Error, Result};
use crate::signal::{Codeword, SignalEnvelope};

/// Fock-space truncation used when sampling rotated photon numbers.
pub const FOCK_CUTOFF: usize = 40;

/// Avalanche photodiode parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    /// Quantum efficiency η.
    pub efficiency: f64,
    /// Dark counts per second.
    pub dark_rate: f64,
    /// Seconds after a click during which nothing is registered.
    pub dead_time: f64,
    /// Probability that a click is followed by a ghost click at dead-time expiry.
    pub afterpulse_prob: f64,
    /// Counts per second above which the detector saturates.
    pub max_count_rate: f64,
}

impl DetectorModel {
    pub fn new(
        efficiency: f64,
        dark_rate: f64,
        dead_time: f64,
        afterpulse_prob: f64,
        max_count_rate: f64,
    ) -> Result<Self> {
        let model = Self {
            efficiency,
            dark_rate,
            dead_time,
            afterpulse_prob,
            max_count_rate,
        };
        model.validate()?;
        Ok(model)
    }

    /// Perfect photon counter.
    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            dark_rate: 0.0,
            dead_time: 0.0,
            afterpulse_prob: 0.0,
            max_count_rate: f64::INFINITY,
        }
    }

    /// Perfect photon counter apart from its efficiency.
    pub fn with_efficiency_only(efficiency: f64) -> Result<Self> {
        Self::ideal().with_efficiency(efficiency)
    }

    /// Silicon single-photon counting module: η = 50 %, 250 dark counts/s,
    /// 50 ns dead time, 1 % afterpulsing, saturation at 10⁷ counts/s.
    pub fn silicon_apd() -> Self {
        Self {
            efficiency: 0.5,
            dark_rate: 250.0,
            dead_time: 50e-9,
            afterpulse_prob: 0.01,
            max_count_rate: 1e7,
        }
    }

    pub fn with_efficiency(mut self, efficiency: f64) -> Result<Self> {
        self.efficiency = efficiency;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("efficiency", self.efficiency)?;
        if !(self.dark_rate.is_finite() && self.dark_rate >= 0.0) {
            return Err(Error::OutOfRange {
                name: "dark count rate",
                value: self.dark_rate,
            });
        }
        if !(self.dead_time.is_finite() && self.dead_time >= 0.0) {
            return Err(Error::OutOfRange {
                name: "dead time",
                value: self.dead_time,
            });
        }
        if !(0.0..1.0).contains(&self.afterpulse_prob) {
            return Err(Error::OutOfRange {
                name: "afterpulse probability",
                value: self.afterpulse_prob,
            });
        }
        if self.afterpulse_prob > 0.0 && self.dead_time == 0.0 {
            return Err(Error::Configuration(
                "afterpulsing requires a positive dead time (ghost clicks occur at dead-time expiry)"
                    .into(),
            ));
        }
        if !(self.max_count_rate > 0.0) {
            return Err(Error::OutOfRange {
                name: "maximum count rate",
                value: self.max_count_rate,
            });
        }
        Ok(())
    }

    /// Largest number of clicks registered in a window of length `duration`.
    pub fn saturation_count(&self, duration: f64) -> usize {
        let cap = (self.max_count_rate * duration).floor();
        if cap.is_finite() && cap < usize::MAX as f64 {
            cap as usize
        } else {
            usize::MAX
        }
    }

    pub fn is_ideal(&self) -> bool {
        *self == Self::ideal()
    }
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self::silicon_apd()
    }
}

/// Origin of a registered click. Diagnostic only; receivers never see it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClickSource {
    Signal,
    Dark,
    Afterpulse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Click {
    pub time: f64,
    pub source: ClickSource,
}

/// Strictly increasing click times inside [0, T].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClickRecord {
    duration: f64,
    clicks: Vec<Click>,
}

impl ClickRecord {
    pub fn empty(duration: f64) -> Self {
        Self {
            duration,
            clicks: Vec::new(),
        }
    }

    /// Builds a record of signal clicks, checking order and range.
    pub fn from_times(duration: f64, times: &[f64]) -> Result<Self> {
        let record = Self {
            duration,
            clicks: times
                .iter()
                .map(|&time| Click {
                    time,
                    source: ClickSource::Signal,
                })
                .collect(),
        };
        record.check(0.0)?;
        Ok(record)
    }

    pub(crate) fn from_clicks_unchecked(duration: f64, clicks: Vec<Click>) -> Self {
        Self { duration, clicks }
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn clicks(&self) -> &[Click] {
        &self.clicks
    }

    pub fn times(&self) -> Vec<f64> {
        self.clicks.iter().map(|c| c.time).collect()
    }

    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }

    pub fn count_from(&self, source: ClickSource) -> usize {
        self.clicks.iter().filter(|c| c.source == source).count()
    }

    /// Checks strict ordering, range, and a minimum gap of `dead_time`.
    pub fn check(&self, dead_time: f64) -> Result<()> {
        for c in &self.clicks {
            if !(0.0..=self.duration).contains(&c.time) {
                return Err(Error::Domain(format!(
                    "click at {} outside [0, {}]",
                    c.time, self.duration
                )));
            }
        }
        for w in self.clicks.windows(2) {
            if !(w[1].time > w[0].time) || w[1].time < w[0].time + dead_time {
                return Err(Error::Domain(format!(
                    "clicks at {} and {} violate ordering or dead time {dead_time}",
                    w[0].time, w[1].time
                )));
            }
        }
        Ok(())
    }
}

/// Intensity Φ(t) (events per second) with a bound usable for thinning.
pub trait RateFunction {
    fn rate(&self, t: f64) -> f64;

    /// Upper bound on `rate` over [t0, t1].
    fn max_rate_on(&self, t0: f64, t1: f64) -> f64;
}

/// Time-independent intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantRate(pub f64);

impl RateFunction for ConstantRate {
    fn rate(&self, _t: f64) -> f64 {
        self.0
    }

    fn max_rate_on(&self, _t0: f64, _t1: f64) -> f64 {
        self.0
    }
}

/// A closure with a declared global upper bound.
pub struct BoundedRate<F> {
    f: F,
    max: f64,
}

impl<F: Fn(f64) -> f64> BoundedRate<F> {
    pub fn new(f: F, max: f64) -> Self {
        Self { f, max }
    }
}

impl<F: Fn(f64) -> f64> RateFunction for BoundedRate<F> {
    fn rate(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    fn max_rate_on(&self, _t0: f64, _t1: f64) -> f64 {
        self.max
    }
}

/// Incident photon flux of a codeword with no local oscillator.
#[derive(Debug, Clone, Copy)]
pub struct CodewordFlux<'a> {
    pub envelope: &'a SignalEnvelope,
    pub codeword: Codeword,
}

impl RateFunction for CodewordFlux<'_> {
    fn rate(&self, t: f64) -> f64 {
        if self.codeword.carries_pulse() {
            self.envelope.flux(t)
        } else {
            0.0
        }
    }

    fn max_rate_on(&self, _t0: f64, _t1: f64) -> f64 {
        if self.codeword.carries_pulse() {
            self.envelope.peak_amplitude().powi(2)
        } else {
            0.0
        }
    }
}

const BOUND_SLACK: f64 = 1e-9;

fn checked_rate<R: RateFunction + ?Sized>(rate: &R, t: f64, bound: f64) -> Result<f64> {
    let r = rate.rate(t);
    if r.is_nan() || r < 0.0 {
        return Err(Error::Domain(format!(
            "rate {r} at t = {t} is not a non-negative number"
        )));
    }
    if r > bound * (1.0 + BOUND_SLACK) {
        return Err(Error::RateBoundExceeded {
            time: t,
            rate: r,
            bound,
        });
    }
    Ok(r)
}

/// Arrival times of an inhomogeneous Poisson process on [0, T], sampled by
/// thinning a homogeneous process at the declared bound Φ_max.
pub fn sample_arrivals<R, G>(rate: &R, duration: f64, rng: &mut G) -> Result<ClickRecord>
where
    R: RateFunction + ?Sized,
    G: Rng + ?Sized,
{
    let bound = rate.max_rate_on(0.0, duration);
    if !bound.is_finite() || bound < 0.0 {
        return Err(Error::Configuration(format!(
            "rate bound {bound} is not finite"
        )));
    }
    let mut clicks = Vec::new();
    if bound == 0.0 {
        return Ok(ClickRecord::from_clicks_unchecked(duration, clicks));
    }
    let gap = Exp::new(bound).map_err(|e| Error::Configuration(e.to_string()))?;
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t > duration {
            break;
        }
        let r = checked_rate(rate, t, bound)?;
        if rng.random::<f64>() * bound < r {
            clicks.push(Click {
                time: t,
                source: ClickSource::Signal,
            });
        }
    }
    Ok(ClickRecord::from_clicks_unchecked(duration, clicks))
}

/// First arrival of an inhomogeneous Poisson process in [from, until), or
/// `None`. The thinning bound is refreshed from the current candidate time
/// onwards, so rates that fall steeply (by orders of magnitude) stay cheap.
pub fn next_arrival<R, G>(rate: &R, from: f64, until: f64, rng: &mut G) -> Result<Option<f64>>
where
    R: RateFunction + ?Sized,
    G: Rng + ?Sized,
{
    let mut t = from;
    while t < until {
        let bound = rate.max_rate_on(t, until);
        if !bound.is_finite() || bound < 0.0 {
            return Err(Error::Configuration(format!(
                "rate bound {bound} at t = {t} is not finite"
            )));
        }
        if bound == 0.0 {
            return Ok(None);
        }
        let e: f64 = rng.sample(rand_distr::Exp1);
        t += e / bound;
        if t >= until {
            return Ok(None);
        }
        let r = checked_rate(rate, t, bound)?;
        if rng.random::<f64>() * bound < r {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// Homogeneous Poisson arrival times at `rate` on [0, duration].
fn poisson_times<G: Rng + ?Sized>(rate: f64, duration: f64, rng: &mut G) -> Vec<f64> {
    let mut out = Vec::new();
    if rate <= 0.0 {
        return out;
    }
    let mut t = 0.0;
    loop {
        let e: f64 = rng.sample(rand_distr::Exp1);
        t += e / rate;
        if t > duration {
            return out;
        }
        out.push(t);
    }
}

/// Passes an ideal arrival record through the detector model.
///
/// Stages, in order: Bernoulli thinning at η; merge with a homogeneous dark
/// count stream; a time-ordered sweep that drops any click closer than the
/// dead time to the last surviving click; after every surviving click, with
/// the afterpulse probability, one ghost click exactly at dead-time expiry
/// (itself a surviving click); truncation once the saturation count is
/// reached.
pub fn apply_imperfections<G: Rng + ?Sized>(
    ideal: &ClickRecord,
    model: &DetectorModel,
    duration: f64,
    rng: &mut G,
) -> ClickRecord {
    let mut merged: Vec<Click> = ideal
        .clicks()
        .iter()
        .filter(|_| model.efficiency >= 1.0 || rng.random::<f64>() < model.efficiency)
        .copied()
        .collect();
    let darks = poisson_times(model.dark_rate, duration, rng);
    if !darks.is_empty() {
        merged.extend(darks.into_iter().map(|time| Click {
            time,
            source: ClickSource::Dark,
        }));
        merged.sort_by(|a, b| a.time.total_cmp(&b.time));
    }

    let cap = model.saturation_count(duration);
    let mut out: Vec<Click> = Vec::with_capacity(merged.len());
    let mut pending_afterpulse: Option<f64> = None;
    let mut events = merged.into_iter().peekable();
    while out.len() < cap {
        let next_time = events.peek().map(|c| c.time);
        let take_afterpulse = match (pending_afterpulse, next_time) {
            (Some(ap), Some(t)) => ap <= t,
            (Some(_), None) => true,
            (None, _) => false,
        };
        let candidate = if take_afterpulse {
            Click {
                time: pending_afterpulse.take().expect("checked above"),
                source: ClickSource::Afterpulse,
            }
        } else if let Some(c) = events.next() {
            c
        } else {
            break;
        };
        if let Some(last) = out.last() {
            if !(candidate.time > last.time) || candidate.time < last.time + model.dead_time {
                continue;
            }
        }
        out.push(candidate);
        if model.afterpulse_prob > 0.0 && rng.random::<f64>() < model.afterpulse_prob {
            let at = candidate.time + model.dead_time;
            if at <= duration {
                pending_afterpulse = Some(at);
            }
        }
    }
    ClickRecord::from_clicks_unchecked(duration, out)
}

/// Draws the time of the next dark count at or after `from`.
pub(crate) fn next_dark_count<G: Rng + ?Sized>(
    model: &DetectorModel,
    from: f64,
    rng: &mut G,
) -> f64 {
    if model.dark_rate <= 0.0 {
        return f64::INFINITY;
    }
    let e: f64 = rng.sample(rand_distr::Exp1);
    from + e / model.dark_rate
}

/// Cumulative distribution of the rotated photon number, ready for sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonNumberSampler {
    cdf: Vec<f64>,
}

impl PhotonNumberSampler {
    /// Truncates at [`FOCK_CUTOFF`] and renormalises; fails if the discarded
    /// tail carries more than 1e-9 of the probability.
    pub fn rotated(codeword: Codeword, theta: f64, nbar: f64) -> Result<Self> {
        let probs = sh_photon_number_probabilities(codeword, theta, nbar, FOCK_CUTOFF)?;
        let mass: f64 = probs.iter().sum();
        if 1.0 - mass > 1e-9 {
            return Err(Error::Configuration(format!(
                "photon-number truncation at n = {FOCK_CUTOFF} loses {:.3e} of the probability; \
                 mean photon number {nbar} is too large",
                1.0 - mass
            )));
        }
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p / mass;
                acc
            })
            .collect();
        Ok(Self { cdf })
    }

    /// A codeword that never contains photons.
    pub fn vacuum() -> Self {
        Self { cdf: vec![1.0] }
    }

    pub fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> usize {
        let u: f64 = rng.random();
        self.cdf
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cdf.len() - 1)
    }
}

/// Sasaki-Hirota click count for a codeword after rotation by `theta`.
///
/// The photon number is drawn from the rotated state's Fock distribution,
/// thinned at η, and the surviving clicks are placed uniformly in [0, T]
/// before the remaining detector effects are applied.
pub fn sample_sh_click_count<G: Rng + ?Sized>(
    codeword: Codeword,
    theta: f64,
    envelope: &SignalEnvelope,
    model: &DetectorModel,
    rng: &mut G,
) -> Result<usize> {
    let sampler = PhotonNumberSampler::rotated(codeword, theta, envelope.mean_photons())?;
    sh_click_count_with(&sampler, envelope.duration(), model, rng)
}

pub(crate) fn sh_click_count_with<G: Rng + ?Sized>(
    sampler: &PhotonNumberSampler,
    duration: f64,
    model: &DetectorModel,
    rng: &mut G,
) -> Result<usize> {
    let photons = sampler.sample(rng);
    let surviving = if photons == 0 || model.efficiency >= 1.0 {
        photons
    } else {
        Binomial::new(photons as u64, model.efficiency)
            .map_err(|e| Error::Configuration(e.to_string()))?
            .sample(rng) as usize
    };
    let only_efficiency = model.dark_rate == 0.0
        && model.dead_time == 0.0
        && model.afterpulse_prob == 0.0
        && model.saturation_count(duration) == usize::MAX;
    if only_efficiency {
        return Ok(surviving);
    }
    let mut times: Vec<f64> = (0..surviving)
        .map(|_| rng.random::<f64>() * duration)
        .collect();
    times.sort_by(f64::total_cmp);
    let placed = ClickRecord::from_clicks_unchecked(
        duration,
        times
            .into_iter()
            .map(|time| Click {
                time,
                source: ClickSource::Signal,
            })
            .collect(),
    );
    let electronics = DetectorModel {
        efficiency: 1.0,
        ..*model
    };
    Ok(apply_imperfections(&placed, &electronics, duration, rng).len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn apd_preset_matches_datasheet_values() {
        let m = DetectorModel::default();
        assert_eq!(m.efficiency, 0.5);
        assert_eq!(m.dark_rate, 250.0);
        assert_eq!(m.dead_time, 50e-9);
        assert_eq!(m.afterpulse_prob, 0.01);
        assert_eq!(m.max_count_rate, 1e7);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn model_validation() {
        assert!(DetectorModel::new(1.2, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(DetectorModel::new(0.5, -1.0, 0.0, 0.0, 1.0).is_err());
        assert!(DetectorModel::new(0.5, 0.0, 0.0, 1.0, 1.0).is_err());
        assert!(DetectorModel::new(0.5, 0.0, 0.0, 0.1, 1.0).is_err());
        assert!(DetectorModel::new(0.5, 0.0, 1e-9, 0.1, 0.0).is_err());
        assert!(DetectorModel::new(0.5, 0.0, 1e-9, 0.1, 1e3).is_ok());
    }

    #[test]
    fn zero_intensity_gives_empty_record() {
        let r = sample_arrivals(&ConstantRate(0.0), 1.0, &mut rng(1)).unwrap();
        assert!(r.is_empty());
        assert_eq!(
            next_arrival(&ConstantRate(0.0), 0.0, 1.0, &mut rng(1)).unwrap(),
            None
        );
    }

    #[test]
    fn thinning_detects_bound_violation() {
        let lying = BoundedRate::new(|_| 10.0, 1.0);
        let err = sample_arrivals(&lying, 100.0, &mut rng(2)).unwrap_err();
        assert!(matches!(err, Error::RateBoundExceeded { .. }));
    }

    #[test]
    fn arrivals_are_sorted_and_in_range() {
        let rate = BoundedRate::new(|t: f64| 5.0 + 4.0 * (7.0 * t).sin(), 9.0);
        let r = sample_arrivals(&rate, 3.0, &mut rng(3)).unwrap();
        assert!(r.check(0.0).is_ok());
        assert!(!r.is_empty());
    }

    #[test]
    fn ideal_detector_is_identity() {
        let ideal = ClickRecord::from_times(1.0, &[0.1, 0.2, 0.2000001, 0.9]).unwrap();
        let out = apply_imperfections(&ideal, &DetectorModel::ideal(), 1.0, &mut rng(4));
        assert_eq!(out, ideal);
    }

    #[test]
    fn dead_time_prunes_close_pair() {
        let ideal = ClickRecord::from_times(1e-6, &[100e-9, 120e-9]).unwrap();
        let model = DetectorModel::new(1.0, 0.0, 50e-9, 0.0, f64::INFINITY).unwrap();
        let out = apply_imperfections(&ideal, &model, 1e-6, &mut rng(5));
        assert_eq!(out.times(), vec![100e-9]);
    }

    #[test]
    fn dead_time_boundary_is_inclusive() {
        let ideal = ClickRecord::from_times(1.0, &[0.25, 0.5]).unwrap();
        let model = DetectorModel::new(1.0, 0.0, 0.25, 0.0, f64::INFINITY).unwrap();
        let out = apply_imperfections(&ideal, &model, 1.0, &mut rng(6));
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn afterpulse_lands_at_dead_time_expiry() {
        let ideal = ClickRecord::from_times(1e-6, &[100e-9]).unwrap();
        let model = DetectorModel::new(1.0, 0.0, 50e-9, 0.999_999, f64::INFINITY).unwrap();
        let out = apply_imperfections(&ideal, &model, 1e-6, &mut rng(7));
        assert!(out.len() >= 2);
        assert_eq!(out.clicks()[1].source, ClickSource::Afterpulse);
        assert!((out.clicks()[1].time - 150e-9).abs() < 1e-18);
        assert!(out.check(50e-9).is_ok());
    }

    #[test]
    fn afterpulse_blocks_following_photon() {
        // Photon at 160 ns falls inside the dead time of the 150 ns ghost click.
        let ideal = ClickRecord::from_times(1e-6, &[100e-9, 160e-9]).unwrap();
        let model = DetectorModel::new(1.0, 0.0, 50e-9, 0.999_999, 2.0 / 1e-6).unwrap();
        let out = apply_imperfections(&ideal, &model, 1e-6, &mut rng(8));
        assert_eq!(out.len(), 2);
        assert!(out.clicks().iter().all(|c| c.time != 160e-9));
    }

    #[test]
    fn saturation_truncates() {
        let times: Vec<f64> = (1..=50).map(|i| i as f64 * 1e-3).collect();
        let ideal = ClickRecord::from_times(0.1, &times).unwrap();
        let model = DetectorModel::new(1.0, 0.0, 0.0, 0.0, 100.0).unwrap();
        let out = apply_imperfections(&ideal, &model, 0.1, &mut rng(9));
        assert_eq!(out.len(), 10);
        assert_eq!(out.times(), times[..10].to_vec());
    }

    #[test]
    fn pipeline_output_respects_invariants() {
        let model = DetectorModel {
            dark_rate: 2e5,
            ..DetectorModel::silicon_apd()
        };
        let mut g = rng(10);
        for _ in 0..200 {
            let ideal = sample_arrivals(&ConstantRate(3e7), 2e-6, &mut g).unwrap();
            let out = apply_imperfections(&ideal, &model, 2e-6, &mut g);
            out.check(model.dead_time).unwrap();
            assert!(out.len() <= model.saturation_count(2e-6));
        }
    }

    #[test]
    fn vacuum_never_clicks_without_rotation() {
        let env = SignalEnvelope::rectangular(1e-6, 1.0).unwrap();
        let mut g = rng(11);
        for _ in 0..1000 {
            let k =
                sample_sh_click_count(Codeword::Rho0, 0.0, &env, &DetectorModel::ideal(), &mut g)
                    .unwrap();
            assert_eq!(k, 0);
        }
    }

    #[test]
    fn sh_sampler_rejects_truncation_loss() {
        let env = SignalEnvelope::rectangular(1e-6, 30.0).unwrap();
        let err = sample_sh_click_count(
            Codeword::Rho1,
            -0.01,
            &env,
            &DetectorModel::ideal(),
            &mut rng(12),
        );
        assert!(matches!(err, Err(Error::Configuration(_))));
    }
}
