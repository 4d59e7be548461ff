use super::model::Model;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per trainable tensor
/// (running-statistic tensors keep empty buffers).
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub m: Vec<Vec<S>>,
    pub v: Vec<Vec<S>>,
    pub step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(model: &Model<S>) -> Self {
        let zeros = |t: &super::model::Tensor<S>| {
            if t.role.is_trainable() {
                vec![S::zero(); t.data.len()]
            } else {
                Vec::new()
            }
        };
        AdamState {
            m: model.tensors().iter().map(zeros).collect(),
            v: model.tensors().iter().map(zeros).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of every trainable tensor.
pub fn adam_step<S: Scalar>(
    model: &mut Model<S>,
    state: &mut AdamState<S>,
    grads: &Model<S>,
    lr: f64,
    cfg: &AdamConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let b1 = S::lit(cfg.beta1);
    let b2 = S::lit(cfg.beta2);
    let one_b1 = S::lit(1.0 - cfg.beta1);
    let one_b2 = S::lit(1.0 - cfg.beta2);
    let inv_bc1 = S::lit(1.0 / (1.0 - cfg.beta1.powi(t)));
    let inv_bc2 = S::lit(1.0 / (1.0 - cfg.beta2.powi(t)));
    let eps = S::lit(cfg.epsilon);
    let lr = S::lit(lr);
    for (i, tensor) in model.tensors_mut().iter_mut().enumerate() {
        if !tensor.role.is_trainable() {
            continue;
        }
        let g = &grads.tensors()[i].data;
        let params = tensor.data.iter_mut().zip(state.m[i].iter_mut()).zip(state.v[i].iter_mut());
        for (((p, m), v), &g) in params.zip(g) {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *p = *p - lr * (*m * inv_bc1) / ((*v * inv_bc2).sqrt() + eps);
        }
    }
}
