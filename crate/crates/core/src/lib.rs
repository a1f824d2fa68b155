//! Partial local entropy training engine.
//!
//! A small from-scratch neural network library ([`nn`]) with exact
//! backpropagation, the smoothed losses PLA, PLEA and M ([`entropic`]),
//! per-layer gradient telemetry ([`telemetry`]), a momentum-SGD loop
//! ([`trainer`]) and dataset ingestion ([`data`]).
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`).

pub mod data;
pub mod entropic;
pub mod error;
pub mod nn;
pub mod scalar;
pub mod telemetry;
pub mod trainer;

pub use data::{AugmentSpec, Dataset};
pub use entropic::{KernelFamily, LossKind, Objective, SmoothingSpec, WeightMask};
pub use error::{Error, Result};
pub use nn::{FlatGradient, LayerKind, LayerSpec, Network, Tensor};
pub use scalar::Scalar;
pub use telemetry::{LayerSignalRecord, RegimeReport};
pub use trainer::{OptimizerState, TrainOptions, TrainReport, TrainSchedule};

pub type Network32 = Network<f32>;
pub type Network64 = Network<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type FlatGradient32 = FlatGradient<f32>;
pub type FlatGradient64 = FlatGradient<f64>;
pub type OptimizerState32 = OptimizerState<f32>;
pub type OptimizerState64 = OptimizerState<f64>;
