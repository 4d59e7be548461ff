//! Synchronous federated rounds: client buffering, local training, server
//! aggregation and per-round evaluation.

pub mod aggregate;
pub mod buffer;
pub mod client;
pub mod experiment;
pub mod report;

pub use aggregate::{aggregate_fedavg, weighted_mean, Aggregator, ServerHyper, ServerState};
pub use buffer::FifoBuffer;
pub use client::{local_round, BufferCapacities, ClientState, ClientUpdate, RoundSets, ScaledSets, Strategy};
pub use experiment::{
    central_data, run_experiment, CentralData, CentralSummary, ClientRoundMetrics, ExperimentConfig,
    ExperimentOutcome, RoundHook, RoundReport, ScalerPolicy, Scenario,
};
pub use report::{load_round_series, read_round_series, save_round_reports, write_round_reports, RoundSeries};
