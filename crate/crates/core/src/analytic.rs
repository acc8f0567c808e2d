//! Closed-form error probabilities for the three receivers and the Helstrom
//! bound, the optimal Sasaki-Hirota rotation, and the Dolinar control law.
//!
//! These functions are the reference against which the Monte Carlo engine is
//! checked. Efficiency η enters everywhere as an ideal detector behind a
//! beam splitter of transmissivity η, so `c0^{2η} = e^{-ηN̄}`.

use num_complex::Complex64;

use crate::error::{check_priors, check_probability, Error, Result};
use crate::receivers::Hypothesis;
use crate::signal::{coherent_overlap, BinaryAlphabet, Codeword, SignalEnvelope};

/// Which parameter a sweep or curve varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepVariable {
    MeanPhotons,
    Efficiency,
    PhaseError,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::MeanPhotons => "mean_photons",
            SweepVariable::Efficiency => "efficiency",
            SweepVariable::PhaseError => "phase_error",
        }
    }
}

impl std::str::FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_photons" | "nbar" => Ok(SweepVariable::MeanPhotons),
            "efficiency" | "eta" => Ok(SweepVariable::Efficiency),
            "phase_error" | "phase" => Ok(SweepVariable::PhaseError),
            other => Err(Error::Configuration(format!(
                "unknown sweep variable {other:?}"
            ))),
        }
    }
}

/// Error probability as a function of one swept parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverErrorCurve {
    pub variable: SweepVariable,
    points: Vec<(f64, f64)>,
}

impl ReceiverErrorCurve {
    pub fn new(variable: SweepVariable, points: Vec<(f64, f64)>) -> Result<Self> {
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Domain(
                "curve abscissae must be strictly increasing".into(),
            ));
        }
        for &(_, p) in &points {
            check_probability("error probability", p)?;
        }
        Ok(Self { variable, points })
    }

    /// Tabulates `f` over `grid`.
    pub fn tabulate<F>(variable: SweepVariable, grid: &[f64], mut f: F) -> Result<Self>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let points = grid
            .iter()
            .map(|&x| f(x).map(|p| (x, p)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(variable, points)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

fn check_efficiency(eta: f64) -> Result<f64> {
    check_probability("efficiency", eta)
}

fn check_mean_photons(nbar: f64) -> Result<f64> {
    if nbar.is_finite() && nbar >= 0.0 {
        Ok(nbar)
    } else {
        Err(Error::OutOfRange {
            name: "mean photon number",
            value: nbar,
        })
    }
}

/// Minimum error probability over all measurements, for a detector of
/// efficiency η: ½(1 − √(1 − 4ξ0ξ1 e^{−ηN̄})).
pub fn helstrom_bound(xi0: f64, xi1: f64, nbar: f64, eta: f64) -> Result<f64> {
    check_priors(xi0, xi1)?;
    check_mean_photons(nbar)?;
    check_efficiency(eta)?;
    Ok(helstrom_expr(xi0, xi1, eta * nbar))
}

/// ½(1 − √(1 − 4ξ0ξ1 e^{−s})) evaluated without cancellation for small `s`.
fn helstrom_expr(xi0: f64, xi1: f64, s: f64) -> f64 {
    0.5 * (1.0 - discriminant(xi0, xi1, s))
}

/// √(1 − 4ξ0ξ1 e^{−s}), written as √((1 − a) − a·expm1(−s)).
fn discriminant(xi0: f64, xi1: f64, s: f64) -> f64 {
    let a = 4.0 * xi0 * xi1;
    ((1.0 - a) - a * (-s).exp_m1()).max(0.0).sqrt()
}

/// Kennedy receiver error ξ1·e^{−ηN̄}: only missed pulses cost anything.
pub fn kennedy_error(xi1: f64, nbar: f64, eta: f64) -> Result<f64> {
    check_probability("prior xi1", xi1)?;
    check_mean_photons(nbar)?;
    check_efficiency(eta)?;
    Ok(xi1 * (-eta * nbar).exp())
}

/// Probability that `n` incident photons produce exactly `k` clicks.
pub fn bernoulli_pmf(n: u32, k: u32, eta: f64) -> Result<f64> {
    check_efficiency(eta)?;
    if k > n {
        return Err(Error::Domain(format!(
            "click count {k} exceeds photon count {n}"
        )));
    }
    // Exact edge cases keep 0^0 = 1 semantics.
    if eta == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if eta == 1.0 {
        return Ok(if k == n { 1.0 } else { 0.0 });
    }
    let ln_choose = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    Ok((ln_choose + k as f64 * eta.ln() + (n - k) as f64 * (-eta).ln_1p()).exp())
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Rotation angle minimising the Sasaki-Hirota error at unit efficiency.
pub fn sh_optimal_theta(xi0: f64, xi1: f64, c0: f64) -> Result<f64> {
    check_priors(xi0, xi1)?;
    if !(c0 > 0.0 && c0 < 1.0) {
        return Err(Error::Domain(format!(
            "overlap c0 = {c0} must lie strictly inside (0, 1) for a rotation to be defined"
        )));
    }
    let c2 = c0 * c0;
    let overlap_term = 4.0 * xi0 * xi1 * c2;
    if overlap_term >= 1.0 {
        return Err(Error::Domain("4·xi0·xi1·c0² must be below 1".into()));
    }
    let root = (1.0 - overlap_term).sqrt();
    let num = (root - 1.0 + 2.0 * xi1 * c2).max(0.0);
    let den = root + 1.0 - 2.0 * xi1 * c2;
    Ok(-(num / den).sqrt().atan())
}

/// (c0^{2η} − 1)/(c0² − 1): the fraction of the non-vacuum Fock weight that
/// survives an efficiency-η detector as at least one click.
fn efficiency_factor(c0: f64, eta: f64) -> Result<f64> {
    if !(c0 > 0.0 && c0 < 1.0) {
        return Err(Error::Domain(format!(
            "overlap c0 = {c0} must lie strictly inside (0, 1)"
        )));
    }
    check_efficiency(eta)?;
    let nbar = -2.0 * c0.ln();
    Ok((-eta * nbar).exp_m1() / (-nbar).exp_m1())
}

/// False-positive probability p(H1|ρ0) of the rotated vacuum.
pub fn sh_click_prob_given_rho0(theta: f64, c0: f64, eta: f64) -> Result<f64> {
    Ok(efficiency_factor(c0, eta)? * theta.sin().powi(2))
}

/// Detection probability p(H1|ρ1) of the rotated pulse.
pub fn sh_click_prob_given_rho1(theta: f64, c0: f64, eta: f64) -> Result<f64> {
    let s = (1.0 - c0 * c0).sqrt();
    Ok(efficiency_factor(c0, eta)? * (c0 * theta.sin() - s * theta.cos()).powi(2))
}

/// Sasaki-Hirota error ξ0·p(H1|ρ0) + ξ1·(1 − p(H1|ρ1)) at rotation `theta`.
pub fn sh_error(xi0: f64, xi1: f64, nbar: f64, eta: f64, theta: f64) -> Result<f64> {
    check_priors(xi0, xi1)?;
    check_mean_photons(nbar)?;
    let c0 = coherent_overlap(nbar);
    Ok(xi0 * sh_click_prob_given_rho0(theta, c0, eta)?
        + xi1 * (1.0 - sh_click_prob_given_rho1(theta, c0, eta)?))
}

/// Rotation actually applied by the receiver: the closed-form optimum, or no
/// rotation at all when the codewords coincide (N̄ = 0) or are numerically
/// orthogonal (c0 underflows).
pub fn sh_receiver_theta(xi0: f64, xi1: f64, nbar: f64) -> Result<f64> {
    check_mean_photons(nbar)?;
    let c0 = coherent_overlap(nbar);
    if nbar == 0.0 || c0 == 0.0 {
        check_priors(xi0, xi1)?;
        return Ok(0.0);
    }
    sh_optimal_theta(xi0, xi1, c0)
}

/// Sasaki-Hirota error at the rotation returned by [`sh_receiver_theta`].
pub fn sh_error_at_optimum(xi0: f64, xi1: f64, nbar: f64, eta: f64) -> Result<f64> {
    let theta = sh_receiver_theta(xi0, xi1, nbar)?;
    if theta == 0.0 {
        return kennedy_error(xi1, nbar, eta);
    }
    sh_error(xi0, xi1, nbar, eta, theta)
}

/// Dolinar receiver error under the optimal feedback policy. Identical to
/// [`helstrom_bound`] for every efficiency.
pub fn dolinar_error(xi0: f64, xi1: f64, nbar: f64, eta: f64) -> Result<f64> {
    helstrom_bound(xi0, xi1, nbar, eta)
}

/// Photon-number distribution |⟨n|Û[θ]|Ψi⟩|², n = 0..=n_max, of a codeword
/// after the Sasaki-Hirota rotation.
pub fn sh_photon_number_probabilities(
    codeword: Codeword,
    theta: f64,
    nbar: f64,
    n_max: usize,
) -> Result<Vec<f64>> {
    check_mean_photons(nbar)?;
    let c0 = coherent_overlap(nbar);
    if !(c0 > 0.0 && c0 < 1.0) {
        return Err(Error::Domain(format!(
            "overlap c0 = {c0} must lie strictly inside (0, 1)"
        )));
    }
    let s = (-(-nbar).exp_m1()).sqrt();
    let (sin, cos) = theta.sin_cos();
    let (vacuum, coherent_weight) = match codeword {
        Codeword::Rho0 => (cos * cos, (sin / s).powi(2)),
        Codeword::Rho1 => (
            (s * sin + c0 * cos).powi(2),
            ((s * cos - c0 * sin) / s).powi(2),
        ),
    };
    let mut probs = Vec::with_capacity(n_max + 1);
    probs.push(vacuum);
    // Poisson weights e^{-N̄} N̄^n / n!, built up multiplicatively.
    let mut poisson = (-nbar).exp();
    for n in 1..=n_max {
        poisson *= nbar / n as f64;
        probs.push(coherent_weight * poisson);
    }
    Ok(probs)
}

/// The optimal closed-loop control law of the Dolinar receiver.
///
/// With J(t) = ½(1 − √(1 − 4ξ0ξ1 e^{−ηn̄(t)})) and g = J/(1 − 2J) the local
/// field is −ψ1(t)(1 + g) while the receiver favours H1 and +ψ1(t)·g while it
/// favours H0. The magnitude is capped at `u_max`; an optional `gain`
/// multiplies the whole law (1.0 is optimal) before the cap is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DolinarPolicy {
    envelope: SignalEnvelope,
    xi0: f64,
    xi1: f64,
    eta: f64,
    u_max: f64,
    gain: f64,
}

impl DolinarPolicy {
    pub fn new(alphabet: &BinaryAlphabet, eta: f64, u_max: f64) -> Result<Self> {
        check_efficiency(eta)?;
        if !(u_max > 0.0) || u_max.is_nan() {
            return Err(Error::OutOfRange {
                name: "amplitude cap",
                value: u_max,
            });
        }
        Ok(Self {
            envelope: alphabet.envelope,
            xi0: alphabet.xi0(),
            xi1: alphabet.xi1(),
            eta,
            u_max,
            gain: 1.0,
        })
    }

    pub fn with_gain(mut self, gain: f64) -> Result<Self> {
        if !(gain.is_finite() && gain >= 0.0) {
            return Err(Error::OutOfRange {
                name: "policy gain",
                value: gain,
            });
        }
        self.gain = gain;
        Ok(self)
    }

    pub fn envelope(&self) -> &SignalEnvelope {
        &self.envelope
    }

    pub fn efficiency(&self) -> f64 {
        self.eta
    }

    pub fn amplitude_cap(&self) -> f64 {
        self.u_max
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    fn photon_clock(&self, t: f64) -> f64 {
        self.eta * self.envelope.mean_photons_by_unchecked(t)
    }

    /// Closed-form conditional error J(t) under the optimal policy.
    pub fn cost(&self, t: f64) -> f64 {
        helstrom_expr(self.xi0, self.xi1, self.photon_clock(t))
    }

    /// g(t) = J/(1 − 2J); infinite at the equal-priors singularity.
    pub fn feedback_gain(&self, t: f64) -> f64 {
        let q = discriminant(self.xi0, self.xi1, self.photon_clock(t));
        if q <= f64::EPSILON * 1e-3 {
            return f64::INFINITY;
        }
        (1.0 - q) / (2.0 * q)
    }

    fn multiplier(&self, t: f64, hypothesis: Hypothesis) -> f64 {
        let g = self.feedback_gain(t);
        self.gain
            * match hypothesis {
                Hypothesis::H1 => -(1.0 + g),
                Hypothesis::H0 => g,
            }
    }

    /// Local-oscillator amplitude u(t) for the hypothesis currently favoured.
    pub fn amplitude(&self, t: f64, hypothesis: Hypothesis) -> Complex64 {
        let psi = self.envelope.amplitude(t);
        let psi_abs = psi.norm();
        if psi_abs == 0.0 || self.gain == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let m = self.multiplier(t, hypothesis);
        let magnitude = psi_abs * m.abs();
        if !magnitude.is_finite() || magnitude > self.u_max {
            psi * (m.signum() * self.u_max / psi_abs)
        } else {
            psi * m
        }
    }

    /// Upper bound on |u(s)| for all s ≥ t and either hypothesis.
    pub fn magnitude_bound_from(&self, t: f64) -> f64 {
        let raw = self.gain * self.envelope.peak_amplitude() * (1.0 + self.feedback_gain(t));
        if raw.is_finite() {
            raw.min(self.u_max)
        } else {
            self.u_max
        }
    }

    /// Time after which the amplitude cap stops binding for `hypothesis`, if
    /// it binds at all inside the pulse.
    pub fn clamp_release_time(&self, hypothesis: Hypothesis) -> Option<f64> {
        let psi = self.envelope.peak_amplitude();
        if psi == 0.0 || self.gain == 0.0 || self.eta == 0.0 {
            return None;
        }
        let ratio = self.u_max / (self.gain * psi);
        let g_star = match hypothesis {
            Hypothesis::H1 => ratio - 1.0,
            Hypothesis::H0 => ratio,
        };
        if g_star <= 0.0 || self.feedback_gain(0.0) <= g_star {
            return None;
        }
        let q = 1.0 / (1.0 + 2.0 * g_star);
        let a = 4.0 * self.xi0 * self.xi1;
        let s = a.ln() - (-q * q).ln_1p();
        self.envelope.time_to_reach(s / self.eta)
    }
}

/// Evaluates the optimal Dolinar control at time `t` for the favoured
/// hypothesis, capped in magnitude at `u_max`.
pub fn dolinar_control(
    t: f64,
    hypothesis: Hypothesis,
    envelope: &SignalEnvelope,
    xi0: f64,
    xi1: f64,
    eta: f64,
    u_max: f64,
) -> Result<Complex64> {
    envelope.mean_photons_by(t)?;
    let alphabet = BinaryAlphabet::new(*envelope, xi0, xi1)?;
    Ok(DolinarPolicy::new(&alphabet, eta, u_max)?.amplitude(t, hypothesis))
}
