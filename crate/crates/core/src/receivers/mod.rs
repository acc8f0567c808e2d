//! Decision logic for the Kennedy, Sasaki-Hirota and Dolinar receivers.

mod dolinar;
mod likelihood;

pub use dolinar::{
    dolinar_run, AmplitudeCap, ControlSegment, DolinarRate, DolinarTrajectory, FeedbackModel,
    TrajectoryClick,
};
pub use likelihood::{
    log_likelihood_ratio, log_likelihood_ratio_until, propagate_conditional_probabilities,
    ConditionalPair, ControlSignal, FeedbackRecord, LikelihoodBranch, LikelihoodTracker,
    ZeroControl,
};

use crate::detector::ClickRecord;
use crate::signal::Codeword;

/// The receiver's guess about which codeword was sent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    /// Vacuum.
    H0,
    /// Pulse.
    H1,
}

impl Hypothesis {
    pub fn flip(self) -> Self {
        match self {
            Self::H0 => Self::H1,
            Self::H1 => Self::H0,
        }
    }

    /// The codeword this hypothesis asserts.
    pub fn codeword(self) -> Codeword {
        match self {
            Self::H0 => Codeword::Rho0,
            Self::H1 => Codeword::Rho1,
        }
    }

    pub fn is_correct_for(self, truth: Codeword) -> bool {
        self.codeword() == truth
    }

    /// Hypothesis favoured by the priors alone; H1 on a tie.
    pub fn a_priori(xi0: f64, xi1: f64) -> Self {
        if xi1 >= xi0 {
            Self::H1
        } else {
            Self::H0
        }
    }
}

/// Kennedy decision: H0 iff the detector stayed silent.
pub fn kennedy_decide(clicks: &ClickRecord) -> Hypothesis {
    sh_decide(clicks.len())
}

/// Sasaki-Hirota decision on the click count of the rotated state.
pub fn sh_decide(count: usize) -> Hypothesis {
    if count == 0 {
        Hypothesis::H0
    } else {
        Hypothesis::H1
    }
}
