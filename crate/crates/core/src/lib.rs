//! Deterministic federated-learning simulator for QUIC service classification.
//!
//! The crate models flow records, derives per-direction flow features, trains a
//! from-scratch fully connected classifier, and runs synchronous federated rounds
//! with optional client-side FIFO buffering. Numeric code is generic over
//! [`Scalar`] (`f32` or `f64`); the aliases below name the common instantiations.

pub mod error;
pub mod features;
pub mod fed;
pub mod flowdata;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod synthgen;

pub use error::{Error, Result};
pub use features::{FeatureProfile, FeatureSchema, FeatureVector, RawVector, Scaler};
pub use fed::{Aggregator, FifoBuffer, RoundReport, Scenario, Strategy};
pub use flowdata::{Direction, FlowRecord, PacketMeta, RoundIndex, ServiceLabel};
pub use metrics::{ConfusionMatrix, StabilityStats};
pub use nn::{Dataset, Model, TrainConfig};
pub use scalar::Scalar;
pub use synthgen::GenConfig;

/// Single-precision model, the default for experiment runs.
pub type Model32 = nn::Model<f32>;
/// Double-precision model, used for gradient checks and exact algebra tests.
pub type Model64 = nn::Model<f64>;
pub type Dataset32 = nn::Dataset<f32>;
pub type Dataset64 = nn::Dataset<f64>;
pub type FeatureVector32 = features::FeatureVector<f32>;
pub type FeatureVector64 = features::FeatureVector<f64>;

/// Number of service classes.
pub const NUM_CLASSES: usize = 7;
/// Packets of per-packet information retained per flow.
pub const MAX_PACKETS: usize = 30;
/// Length of one federated round in seconds (3 hours).
pub const ROUND_SECONDS: f64 = 10_800.0;
