//! Classification metrics, round-series stability and feature importance.

pub mod confusion;
pub mod importance;
pub mod stability;

pub use confusion::{macro_f1, per_class_report, write_class_report, ClassMetrics, ConfusionMatrix};
pub use importance::{permutation_importance, write_importance, FeatureImportance};
pub use stability::{stability, StabilityStats};
