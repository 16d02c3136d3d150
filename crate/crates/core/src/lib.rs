//! Simulation and analysis of GHz-gated SPAD arrays and the decoy-state
//! BB84 link built on them.
//!
//! The analytic modules ([`link`], [`keyrate`], parts of [`characterize`])
//! are generic over [`Real`]; the aliases at the crate root fix the scalar
//! to `f64`. The Monte Carlo modules ([`spad`], [`protocol`]) use `f64`.

// `!(x > 0.0)` style checks are there to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod characterize;
pub mod config;
pub mod error;
pub mod keyrate;
pub mod link;
pub mod protocol;
pub mod rng;
pub mod scalar;
pub mod spad;
pub mod units;

pub use config::{
    ArrayConfig, ChannelConfig, CharacterizationConfig, Concentration, DetectorConfig,
    FiniteKeyConfig, Intensity, Preset, ProtocolConfig, ReceiverConfig, SystemConfig,
};
pub use error::{Error, Result, ValidationReport};
pub use rng::RngSpec;
pub use scalar::Real;
pub use units::{binary_entropy, db_to_transmittance, equivalent_km, transmittance_to_db};

pub use keyrate::{DecoyAnalysis, VacuumWeakDecoy};
pub use link::OperatingPoint;

pub type BlockCounts = link::BlockCounts<f64>;
pub type DecoyBounds = keyrate::DecoyBounds<f64>;
pub type KeyRateReport = keyrate::KeyRateReport<f64>;
pub type LinkSolution = link::LinkSolution<f64>;
pub type RateBreakdown = link::RateBreakdown<f64>;
pub type PulseMix = link::PulseMix<f64>;
pub type Crosstalk = link::Crosstalk<f64>;
pub type CouplingLoss = characterize::CouplingLoss<f64>;
pub type BiasCurve = characterize::BiasCurve<f64>;
pub type BalancedBiases = characterize::BalancedBiases<f64>;
