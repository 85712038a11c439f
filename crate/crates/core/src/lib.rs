//! Deep sparse coding for energy disaggregation.
//!
//! Each appliance is modelled by a cascade of dictionaries `D₁ D₂ … D_N` with a
//! sparse, non-negative code at the bottom. Cascades are learned per appliance
//! ([`shallow`], [`greedy`], [`exact`]) and an aggregate signal is split by
//! coding it jointly over all appliances' effective dictionaries ([`disagg`]).

pub mod data;
pub mod disagg;
pub mod error;
pub mod exact;
pub mod greedy;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod shallow;
pub mod sparse_ops;
pub mod training;

pub use disagg::{disaggregate, effective_dictionary, DisaggConfig, DisaggregationResult};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use metrics::{disagg_accuracy, evaluate, normalized_error, EvalReport};
pub use model::{
    validate, ApplianceModel, DeepDictionary, EnergySeries, LayerDictionary, SignalMatrix, SolverKind,
    SparseCode, TrainingConfig,
};
pub use training::{train_appliance, TrainOutcome, TrainTrace};
