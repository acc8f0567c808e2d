//! Binary coherent-state discrimination with photon-counting receivers.
//!
//! The crate models the vacuum/pulse alphabet, the closed-form error
//! probabilities of the Kennedy, Sasaki-Hirota and Dolinar receivers, a
//! stochastic avalanche-photodiode front end, and a deterministic Monte Carlo
//! engine that ties them together. Everything is computed in the rotating
//! frame of the optical carrier: only complex baseband amplitudes enter.
//!
//! Module map:
//!
//! * [`signal`]: pulse envelope and two-codeword alphabet.
//! * [`analytic`]: Helstrom bound and receiver error formulas, optimal
//!   rotation angle and the closed-loop control law.
//! * [`detector`]: inhomogeneous Poisson sampling and detector imperfections.
//! * [`receivers`]: decision rules, the Dolinar feedback loop and its
//!   likelihood bookkeeping.
//! * [`montecarlo`]: seeded parallel trial engine and parameter sweeps.
//! * [`cli`]: the `receiver-sim` command line.

pub mod analytic;
pub mod cli;
pub mod detector;
mod error;
pub mod montecarlo;
pub mod numerics;
pub mod receivers;
pub mod signal;

pub use error::{Error, Result};
pub use signal::{BinaryAlphabet, Codeword, EnvelopeShape, SignalEnvelope};
