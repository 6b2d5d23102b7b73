//! Discrete-time simulator of a UAV-relayed semantic communication network
//! and a truncated-quantile-critics learner for its joint trajectory,
//! task-split and compression control.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod energy;
pub mod env;
pub mod error;
pub mod harness;
pub mod mobility;
pub mod nn;
pub mod objective;
pub mod scalar;
pub mod semantics;
pub mod tqc;
pub mod types;

pub use config::{validate_config, ScenarioConfig};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DenseNet32 = nn::DenseNet<f32>;
pub type DenseNet64 = nn::DenseNet<f64>;
pub type Actor32 = tqc::StochasticActor<f32>;
pub type Actor64 = tqc::StochasticActor<f64>;
pub type Tqc32 = tqc::Tqc<f32>;
pub type Tqc64 = tqc::Tqc<f64>;
