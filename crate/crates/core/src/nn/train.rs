use rand::Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::dataset::{batch_indices, Dataset};
use super::mlp::{eval_logits, loss_and_grad, update_running_stats, LayerHyper};
use super::model::Model;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::NUM_CLASSES;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_p: f64,
    pub leaky_slope: f64,
    pub adam: AdamConfig,
    /// Epochs without validation improvement before stopping.
    pub early_stop_patience: usize,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl TrainConfig {
    /// Client-side defaults: lr 0.001, batch 64, 10 epochs.
    pub fn federated() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 64,
            epochs: 10,
            dropout_p: 0.15,
            leaky_slope: 0.1,
            adam: AdamConfig::default(),
            early_stop_patience: 3,
            bn_momentum: 0.1,
            bn_epsilon: 1e-5,
        }
    }

    /// Centralized baseline: lr 0.01, batch 1024.
    pub fn centralized() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 1024,
            ..Self::federated()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.dropout_p) {
            return fail("dropout must lie in [0, 1)");
        }
        if self.batch_size < 1 {
            return fail("batch_size must be >= 1");
        }
        if self.epochs < 1 {
            return fail("epochs must be >= 1");
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be > 0");
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return fail("adam betas must lie in [0, 1)");
        }
        if !(self.adam.epsilon > 0.0 && self.bn_epsilon > 0.0) {
            return fail("epsilons must be > 0");
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return fail("bn_momentum must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn layer_hyper(&self) -> LayerHyper {
        LayerHyper {
            leaky_slope: self.leaky_slope,
            dropout_p: self.dropout_p,
            bn_epsilon: self.bn_epsilon,
        }
    }
}

/// FedProx anchor: adds `(mu / 2) * ||theta - anchor||^2` to the local loss.
#[derive(Clone, Copy, Debug)]
pub struct Proximal<'a, S> {
    pub anchor: &'a Model<S>,
    pub mu: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub epochs_run: usize,
    pub best_val_loss: Option<f64>,
    /// Mean training loss of the last epoch run.
    pub train_loss: f64,
}

fn add_proximal<S: Scalar>(model: &Model<S>, grads: &mut Model<S>, prox: &Proximal<'_, S>) -> f64 {
    let mu = S::lit(prox.mu);
    let mut sq = 0.0;
    for (i, g) in grads.tensors_mut().iter_mut().enumerate() {
        if !g.role.is_trainable() {
            continue;
        }
        let theta = &model.tensors()[i].data;
        let anchor = &prox.anchor.tensors()[i].data;
        for k in 0..g.data.len() {
            let d = theta[k] - anchor[k];
            sq += d.as_f64() * d.as_f64();
            g.data[k] = g.data[k] + mu * d;
        }
    }
    0.5 * prox.mu * sq
}

/// Local training with shuffled mini-batches and Adam.
///
/// When `val` is non-empty, the validation loss is checked after every epoch,
/// training stops after `early_stop_patience` epochs without improvement, and
/// the model is left at its best-validation snapshot.
pub fn train_local<S: Scalar, R: Rng>(
    model: &mut Model<S>,
    train: &Dataset<S>,
    val: Option<&Dataset<S>>,
    cfg: &TrainConfig,
    proximal: Option<Proximal<'_, S>>,
    rng: &mut R,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "training data has {} features, model expects {}",
            train.dim(),
            model.input_dim()
        )));
    }
    if train.len() < 2 {
        return Err(Error::BatchTooSmall(train.len()));
    }
    if let Some(p) = &proximal {
        model.check_same_shape(p.anchor)?;
    }
    let proximal = proximal.filter(|p| p.mu > 0.0);
    let val = val.filter(|v| !v.is_empty());
    let hyper = cfg.layer_hyper();
    let mut adam = AdamState::new(model);

    let mut best: Option<(f64, Model<S>)> = None;
    let mut stale = 0usize;
    let mut epochs_run = 0;
    let mut train_loss = 0.0;

    for _ in 0..cfg.epochs {
        epochs_run += 1;
        let mut loss_sum = 0.0;
        for batch in batch_indices(train.len(), cfg.batch_size, rng) {
            let (x, y) = train.gather(&batch);
            let (mut loss, mut grads, pass) = loss_and_grad(model, &x, &y, &hyper, rng)?;
            if let Some(p) = &proximal {
                loss += add_proximal(model, &mut grads, p);
            }
            adam_step(model, &mut adam, &grads, cfg.learning_rate, &cfg.adam);
            update_running_stats(model, &pass, cfg.bn_momentum);
            loss_sum += loss * batch.len() as f64;
        }
        train_loss = loss_sum / train.len() as f64;

        if let Some(val) = val {
            let vl = eval_loss(model, val, &hyper)?;
            match &best {
                Some((b, _)) if vl >= *b || vl.is_nan() => {
                    stale += 1;
                    if stale >= cfg.early_stop_patience {
                        break;
                    }
                }
                _ => {
                    best = Some((vl, model.clone()));
                    stale = 0;
                }
            }
        }
    }

    let best_val_loss = best.map(|(loss, snapshot)| {
        *model = snapshot;
        loss
    });
    Ok(TrainOutcome {
        epochs_run,
        best_val_loss,
        train_loss,
    })
}

const EVAL_CHUNK: usize = 4096;

/// Eval-mode logits for a whole dataset, computed in fixed-size chunks.
pub fn dataset_logits<S: Scalar>(model: &Model<S>, data: &Dataset<S>, hyper: &LayerHyper) -> Result<Vec<S>> {
    if data.dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "data has {} features, model expects {}",
            data.dim(),
            model.input_dim()
        )));
    }
    let mut out = Vec::with_capacity(data.len() * NUM_CLASSES);
    for chunk in data.features().chunks(EVAL_CHUNK * data.dim()) {
        out.extend(eval_logits(model, chunk, chunk.len() / data.dim(), hyper)?);
    }
    Ok(out)
}

/// Mean cross-entropy in Eval mode.
pub fn eval_loss<S: Scalar>(model: &Model<S>, data: &Dataset<S>, hyper: &LayerHyper) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let logits = dataset_logits(model, data, hyper)?;
    Ok(super::mlp::cross_entropy(&logits, data.labels()).0)
}

/// Argmax of each row; ties go to the lowest class code.
pub fn argmax_rows<S: Scalar>(logits: &[S]) -> Vec<u8> {
    logits
        .chunks_exact(NUM_CLASSES)
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}

pub fn predict<S: Scalar>(model: &Model<S>, data: &Dataset<S>, hyper: &LayerHyper) -> Result<Vec<u8>> {
    Ok(argmax_rows(&dataset_logits(model, data, hyper)?))
}
