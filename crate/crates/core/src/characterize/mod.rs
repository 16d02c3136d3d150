//! Blind estimators that turn gate logs into detector figures of merit,
//! plus coupling-loss arithmetic and per-pixel bias balancing.

mod coupling;
mod crosstalk;
mod estimators;
mod report;
mod specificity;

use serde::{Deserialize, Serialize};

pub use coupling::{balance_biases, coupling_loss, BalancedBiases, BiasCurve, CouplingLoss};
pub use crosstalk::{measure_crosstalk, CrosstalkMatrices, PairEstimate, LOW_CONFIDENCE_AGGRESSORS};
pub use estimators::{
    estimate_apr, estimate_dcr, estimate_spde, spde_from_probabilities, AprEstimate, DcrEstimate,
    SpdeEstimate,
};
pub use report::{characterize, CharacterizationReport, PixelReport};
pub use specificity::{specificity_from_logs, specificity_matrix, SpecificityMatrix};

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64) -> Self {
        Self { value, stderr }
    }

    /// Distance from `truth` in units of the standard error.
    pub fn z(&self, truth: f64) -> f64 {
        (self.value - truth) / self.stderr
    }
}
