//! The two-codeword alphabet: vacuum for logical 0, a coherent pulse for 1.
//!
//! All quantities are baseband: the pulse is ψ1(t)·e^{-iφ} with the carrier
//! frequency carried only as metadata.

use num_complex::Complex64;

use crate::error::{check_priors, Error, Result};

/// Pulse shape of codeword 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnvelopeShape {
    /// Constant photon flux N̄/T on [0, T].
    #[default]
    Rectangular,
}

/// Baseband envelope ψ1(t) of the logical-1 pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalEnvelope {
    shape: EnvelopeShape,
    duration: f64,
    mean_photons: f64,
    carrier_phase: f64,
    carrier_frequency: f64,
}

impl SignalEnvelope {
    pub fn new(shape: EnvelopeShape, duration: f64, mean_photons: f64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::OutOfRange {
                name: "duration",
                value: duration,
            });
        }
        if !(mean_photons.is_finite() && mean_photons >= 0.0) {
            return Err(Error::OutOfRange {
                name: "mean photon number",
                value: mean_photons,
            });
        }
        Ok(Self {
            shape,
            duration,
            mean_photons,
            carrier_phase: 0.0,
            carrier_frequency: 0.0,
        })
    }

    pub fn rectangular(duration: f64, mean_photons: f64) -> Result<Self> {
        Self::new(EnvelopeShape::Rectangular, duration, mean_photons)
    }

    pub fn with_carrier_phase(mut self, phase: f64) -> Self {
        self.carrier_phase = phase;
        self
    }

    /// Optical carrier frequency (rad/s). Never used numerically.
    pub fn with_carrier_frequency(mut self, omega: f64) -> Self {
        self.carrier_frequency = omega;
        self
    }

    /// Copy of this envelope with a different mean photon number.
    pub fn with_mean_photons(self, mean_photons: f64) -> Result<Self> {
        Self::new(self.shape, self.duration, mean_photons).map(|e| Self {
            carrier_phase: self.carrier_phase,
            carrier_frequency: self.carrier_frequency,
            ..e
        })
    }

    pub fn shape(&self) -> EnvelopeShape {
        self.shape
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn mean_photons(&self) -> f64 {
        self.mean_photons
    }

    pub fn carrier_phase(&self) -> f64 {
        self.carrier_phase
    }

    pub fn carrier_frequency(&self) -> f64 {
        self.carrier_frequency
    }

    /// Photon flux |ψ1(t)|² in photons per second; zero outside [0, T].
    pub fn flux(&self, t: f64) -> f64 {
        if !(0.0..=self.duration).contains(&t) {
            return 0.0;
        }
        match self.shape {
            EnvelopeShape::Rectangular => self.mean_photons / self.duration,
        }
    }

    /// Complex baseband amplitude ψ1(t)·e^{-iφ}.
    pub fn amplitude(&self, t: f64) -> Complex64 {
        Complex64::from_polar(self.flux(t).sqrt(), -self.carrier_phase)
    }

    /// Upper bound on |ψ1(t)| over the whole pulse.
    pub fn peak_amplitude(&self) -> f64 {
        match self.shape {
            EnvelopeShape::Rectangular => (self.mean_photons / self.duration).sqrt(),
        }
    }

    /// n̄(t) = ∫₀ᵗ |ψ1|², the mean photon number delivered by time `t`.
    pub fn mean_photons_by(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(Error::Domain(format!(
                "time {t} outside the measurement interval [0, {}]",
                self.duration
            )));
        }
        Ok(self.mean_photons_by_unchecked(t))
    }

    pub(crate) fn mean_photons_by_unchecked(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.duration);
        if t == self.duration {
            return self.mean_photons;
        }
        match self.shape {
            EnvelopeShape::Rectangular => self.mean_photons * (t / self.duration),
        }
    }

    /// Earliest time at which n̄(t) reaches `photons`, or `None` beyond N̄.
    pub fn time_to_reach(&self, photons: f64) -> Option<f64> {
        if photons <= 0.0 {
            return Some(0.0);
        }
        if photons > self.mean_photons {
            return None;
        }
        match self.shape {
            EnvelopeShape::Rectangular => Some(self.duration * (photons / self.mean_photons)),
        }
    }

    /// Overlap ⟨Ψ1|Ψ0⟩ with the vacuum codeword.
    pub fn overlap(&self) -> f64 {
        coherent_overlap(self.mean_photons)
    }
}

/// c0 = e^{-N̄/2}, the vacuum overlap of a coherent state with mean photon number N̄.
pub fn coherent_overlap(mean_photons: f64) -> f64 {
    (-0.5 * mean_photons).exp()
}

/// Which codeword the channel actually carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Codeword {
    /// Vacuum, logical 0.
    Rho0,
    /// Pulse ψ1, logical 1.
    Rho1,
}

impl Codeword {
    pub fn carries_pulse(self) -> bool {
        matches!(self, Codeword::Rho1)
    }
}

/// {vacuum, pulse} with prior probabilities ξ0, ξ1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryAlphabet {
    pub envelope: SignalEnvelope,
    xi0: f64,
    xi1: f64,
}

impl BinaryAlphabet {
    pub fn new(envelope: SignalEnvelope, xi0: f64, xi1: f64) -> Result<Self> {
        check_priors(xi0, xi1)?;
        Ok(Self { envelope, xi0, xi1 })
    }

    pub fn equiprobable(envelope: SignalEnvelope) -> Self {
        Self {
            envelope,
            xi0: 0.5,
            xi1: 0.5,
        }
    }

    pub fn xi0(&self) -> f64 {
        self.xi0
    }

    pub fn xi1(&self) -> f64 {
        self.xi1
    }

    pub fn prior(&self, codeword: Codeword) -> f64 {
        match codeword {
            Codeword::Rho0 => self.xi0,
            Codeword::Rho1 => self.xi1,
        }
    }

    /// Baseband amplitude of `codeword` at time `t`; identically zero for the vacuum.
    pub fn amplitude(&self, codeword: Codeword, t: f64) -> Complex64 {
        match codeword {
            Codeword::Rho0 => Complex64::new(0.0, 0.0),
            Codeword::Rho1 => self.envelope.amplitude(t),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrate;
    use proptest::prelude::*;

    #[test]
    fn mean_photons_by_examples() {
        let env = SignalEnvelope::rectangular(1.0, 1.0).unwrap();
        assert!((env.mean_photons_by(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(env.mean_photons_by(0.0).unwrap(), 0.0);
        assert_eq!(env.mean_photons_by(1.0).unwrap(), 1.0);
    }

    #[test]
    fn mean_photons_by_rejects_outside_interval() {
        let env = SignalEnvelope::rectangular(1.0, 1.0).unwrap();
        assert!(matches!(env.mean_photons_by(-1e-9), Err(Error::Domain(_))));
        assert!(matches!(env.mean_photons_by(1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(coherent_overlap(0.0), 1.0);
        assert!((coherent_overlap(1.0) - 0.606_530_659_712_633_4).abs() < 1e-12);
        assert!((coherent_overlap(4.0) - 0.135_335_283_236_612_7).abs() < 1e-12);
    }

    #[test]
    fn flux_integrates_to_mean_photons() {
        for &(t, n) in &[(1.0, 1.0), (1e-3, 2.5), (7e-6, 0.3)] {
            let env = SignalEnvelope::rectangular(t, n).unwrap();
            let total = integrate(|s| env.flux(s), 0.0, t, 1e-14, 1e-14).unwrap();
            assert!((total - n).abs() <= 1e-12 * n);
            assert_eq!(env.flux(-1e-12), 0.0);
            assert_eq!(env.flux(t * 1.000001), 0.0);
        }
    }

    #[test]
    fn alphabet_validates_priors() {
        let env = SignalEnvelope::rectangular(1.0, 1.0).unwrap();
        assert!(BinaryAlphabet::new(env, 0.3, 0.7).is_ok());
        assert!(BinaryAlphabet::new(env, 0.3, 0.6).is_err());
        assert!(BinaryAlphabet::new(env, -0.1, 1.1).is_err());
        let a = BinaryAlphabet::equiprobable(env);
        assert_eq!(a.amplitude(Codeword::Rho0, 0.3), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn envelope_rejects_bad_parameters() {
        assert!(SignalEnvelope::rectangular(0.0, 1.0).is_err());
        assert!(SignalEnvelope::rectangular(1.0, -1.0).is_err());
        assert!(SignalEnvelope::rectangular(f64::NAN, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn mean_photons_is_monotone(n in 0.0f64..10.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let env = SignalEnvelope::rectangular(2e-6, n).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let t = env.duration();
            prop_assert!(env.mean_photons_by(lo * t).unwrap() <= env.mean_photons_by(hi * t).unwrap());
        }

        #[test]
        fn overlap_strictly_decreasing(n in 0.0f64..20.0, dn in 1e-6f64..5.0) {
            prop_assert!(coherent_overlap(n + dn) < coherent_overlap(n));
            prop_assert!(coherent_overlap(n) > 0.0 && coherent_overlap(n) <= 1.0);
        }
    }
}
