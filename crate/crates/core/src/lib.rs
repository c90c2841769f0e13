//! Average-cost policy-gradient learning for plug-in electric vehicle
//! charging when infrastructure information can be knocked out and the
//! driver may buy insurance that guarantees informed prices.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the double-precision instantiation used by the CLI.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod econ;
pub mod exact;
pub mod harness;
pub mod learning;
pub mod linalg;
pub mod model;
pub mod policy;
pub mod scalar;
pub mod stats;
pub mod voi;

pub use model::{
    ActionMask, ActionPair, CostBreakdown, CostModel, EnergyAction, EnvConfig, FullEnvState,
    InsuranceAction, ModelError, PevState, PriceSchedule, RiskModel, NUM_ACTIONS,
};
pub use policy::{ParamTable, PolicyParams, StochasticPolicy};
pub use scalar::Scalar;

pub type EnvConfig64 = EnvConfig<f64>;
pub type EnvConfig32 = EnvConfig<f32>;
pub type PolicyParams64 = PolicyParams<f64>;
pub type PolicyParams32 = PolicyParams<f32>;
pub type LearnerState64 = learning::LearnerState<f64>;
pub type LearnerConfig64 = learning::LearnerConfig<f64>;
pub type MdpAnalysis64 = exact::MdpAnalysis<f64>;



pub use econ::{IdsInstance, Utility};
pub use harness::ExperimentConfig;
pub use voi::{Topology, VehicleParams};
