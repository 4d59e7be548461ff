//! Fully connected classifier trained from scratch: `N -> 2N -> 3N -> 3N -> 4N -> 7`
//! with batch norm, LeakyReLU and inverted dropout in every hidden block.

pub mod adam;
pub mod checkpoint;
pub mod dataset;
pub mod mlp;
pub mod model;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dataset::{batch_indices, Dataset};
pub use mlp::{backward, cross_entropy, eval_logits, forward, loss_and_grad, update_running_stats, ForwardPass, LayerHyper, Mode};
pub use model::{layer_widths, Model, Tensor, TensorRole};
pub use train::{argmax_rows, dataset_logits, eval_loss, predict, train_local, Proximal, TrainConfig, TrainOutcome};
