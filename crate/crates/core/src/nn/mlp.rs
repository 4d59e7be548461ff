//! Forward and backward passes.
//!
//! Hidden block: affine -> batch norm -> LeakyReLU -> inverted dropout.
//! The output layer is affine only; the loss is mean softmax cross-entropy.

use rand::Rng;

use super::model::Model;
use crate::error::{Error, Result};
use crate::linalg::{gemm, Op};
use crate::scalar::Scalar;
use crate::NUM_CLASSES;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-layer constants that are not parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerHyper {
    pub leaky_slope: f64,
    pub dropout_p: f64,
    pub bn_epsilon: f64,
}

impl Default for LayerHyper {
    fn default() -> Self {
        LayerHyper {
            leaky_slope: 0.1,
            dropout_p: 0.15,
            bn_epsilon: 1e-5,
        }
    }
}

#[inline]
pub fn leaky_relu<S: Scalar>(x: S, slope: S) -> S {
    if x > S::zero() {
        x
    } else {
        x * slope
    }
}

struct HiddenCache<S> {
    xhat: Vec<S>,
    /// Batch-norm output before the activation.
    pre_act: Vec<S>,
    /// Dropout multiplier per element (0 or 1/(1-p)); empty when dropout is off.
    mask: Vec<S>,
    inv_std: Vec<S>,
}

/// Batch statistics of one hidden block (biased variance).
#[derive(Clone, Debug)]
pub struct BatchStats<S> {
    pub mean: Vec<S>,
    pub var: Vec<S>,
}

/// Everything backward needs, plus the logits.
pub struct ForwardPass<S> {
    pub rows: usize,
    pub logits: Vec<S>,
    pub batch_stats: Vec<BatchStats<S>>,
    /// `activations[l]` is the input to layer `l`; index 0 is the batch itself.
    activations: Vec<Vec<S>>,
    hidden: Vec<HiddenCache<S>>,
}

impl<S: Scalar> ForwardPass<S> {
    /// Smallest distance of any hidden pre-activation from the LeakyReLU kink.
    pub fn min_abs_pre_activation(&self) -> f64 {
        self.hidden
            .iter()
            .flat_map(|h| h.pre_act.iter())
            .map(|v| v.as_f64().abs())
            .fold(f64::INFINITY, f64::min)
    }
}

fn affine<S: Scalar>(x: &[S], rows: usize, w: &[S], b: &[S], fan_in: usize, out: usize) -> Vec<S> {
    let mut z = Vec::with_capacity(rows * out);
    for _ in 0..rows {
        z.extend_from_slice(b);
    }
    gemm(Op::N, Op::N, rows, fan_in, out, S::one(), x, w, S::one(), &mut z);
    z
}

/// Inverted-dropout multipliers: element dropped when its uniform 32-bit draw
/// falls below `p * 2^32`.
fn dropout_mask<S: Scalar, R: Rng>(len: usize, p: f64, keep_scale: S, rng: &mut R) -> Vec<S> {
    let threshold = (p * 4_294_967_296.0).min(u32::MAX as f64) as u32;
    let mut bits = vec![0u32; len];
    rng.fill(&mut bits[..]);
    bits.into_iter()
        .map(|u| if u < threshold { S::zero() } else { keep_scale })
        .collect()
}

/// Runs the network on `rows` inputs laid out row-major in `x`.
///
/// Train mode normalizes with batch statistics (returned in the pass so the
/// caller can fold them into the running estimates) and draws dropout masks
/// from `rng`. Eval mode uses running statistics and never touches `rng`.
pub fn forward<S: Scalar, R: Rng>(
    model: &Model<S>,
    x: &[S],
    rows: usize,
    mode: Mode,
    hyper: &LayerHyper,
    rng: &mut R,
) -> Result<ForwardPass<S>> {
    let widths = model.widths();
    if rows == 0 || x.len() != rows * widths[0] {
        return Err(Error::Shape(format!(
            "input of {} values is not {rows} rows of width {}",
            x.len(),
            widths[0]
        )));
    }
    if mode == Mode::Train && rows < 2 {
        return Err(Error::BatchTooSmall(rows));
    }
    let slope = S::lit(hyper.leaky_slope);
    let eps = S::lit(hyper.bn_epsilon);
    let keep_scale = S::lit(1.0 / (1.0 - hyper.dropout_p));
    let n_rows = S::lit(rows as f64);

    let mut activations = vec![x.to_vec()];
    let mut hidden = Vec::with_capacity(model.hidden_layers());
    let mut batch_stats = Vec::new();

    for l in 0..model.hidden_layers() {
        let base = Model::<S>::hidden_base(l);
        let (fan_in, out) = (widths[l], widths[l + 1]);
        let z = affine(&activations[l], rows, model.t(base), model.t(base + 1), fan_in, out);
        let gain = model.t(base + 2);
        let shift = model.t(base + 3);

        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![S::zero(); out];
                for row in z.chunks_exact(out) {
                    for (m, &v) in mean.iter_mut().zip(row) {
                        *m = *m + v;
                    }
                }
                mean.iter_mut().for_each(|m| *m = *m / n_rows);
                let mut var = vec![S::zero(); out];
                for row in z.chunks_exact(out) {
                    for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
                        let d = x - m;
                        *v = *v + d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v = *v / n_rows);
                (mean, var)
            }
            Mode::Eval => (model.t(base + 4).to_vec(), model.t(base + 5).to_vec()),
        };
        let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();

        let mut xhat = z;
        let mut pre_act = vec![S::zero(); rows * out];
        let mut act = vec![S::zero(); rows * out];
        let rows_iter = xhat
            .chunks_exact_mut(out)
            .zip(pre_act.chunks_exact_mut(out))
            .zip(act.chunks_exact_mut(out));
        for ((xr, pr), ar) in rows_iter {
            let cols = xr.iter_mut().zip(pr.iter_mut()).zip(ar.iter_mut());
            let params = mean.iter().zip(&inv_std).zip(gain.iter().zip(shift));
            for (((x, p), a), ((&m, &is), (&g, &b))) in cols.zip(params) {
                let h = (*x - m) * is;
                *x = h;
                let y = g * h + b;
                *p = y;
                *a = leaky_relu(y, slope);
            }
        }
        let mask = if mode == Mode::Train && hyper.dropout_p > 0.0 {
            let mask = dropout_mask(rows * out, hyper.dropout_p, keep_scale, rng);
            act.iter_mut().zip(&mask).for_each(|(a, &m)| *a = *a * m);
            mask
        } else {
            Vec::new()
        };
        if mode == Mode::Train {
            batch_stats.push(BatchStats { mean, var });
        }
        hidden.push(HiddenCache {
            xhat,
            pre_act,
            mask,
            inv_std,
        });
        activations.push(act);
    }

    let ob = model.output_base();
    let last = model.hidden_layers();
    let logits = affine(
        &activations[last],
        rows,
        model.t(ob),
        model.t(ob + 1),
        widths[last],
        widths[last + 1],
    );
    Ok(ForwardPass {
        rows,
        logits,
        batch_stats,
        activations,
        hidden,
    })
}

/// Eval-mode logits for any number of rows (no dropout, running statistics).
pub fn eval_logits<S: Scalar>(model: &Model<S>, x: &[S], rows: usize, hyper: &LayerHyper) -> Result<Vec<S>> {
    if rows == 0 {
        return Ok(Vec::new());
    }
    let mut unused = rand::rngs::mock::StepRng::new(0, 0);
    Ok(forward(model, x, rows, Mode::Eval, hyper, &mut unused)?.logits)
}

/// Row-wise softmax, numerically stabilized.
pub fn softmax_rows<S: Scalar>(logits: &[S], classes: usize) -> Vec<S> {
    let mut out = logits.to_vec();
    for row in out.chunks_exact_mut(classes) {
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        row.iter_mut().for_each(|v| *v = *v / sum);
    }
    out
}

/// Mean cross-entropy (computed in f64) and its gradient w.r.t. the logits.
pub fn cross_entropy<S: Scalar>(logits: &[S], targets: &[u8]) -> (f64, Vec<S>) {
    let rows = targets.len();
    let probs = softmax_rows(logits, NUM_CLASSES);
    let mut loss = 0.0;
    let mut grad = probs;
    let inv = S::lit(1.0 / rows as f64);
    for (i, &t) in targets.iter().enumerate() {
        let row = &logits[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
        loss += lse - row[t as usize].as_f64();
        let g = &mut grad[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
        g[t as usize] = g[t as usize] - S::one();
        g.iter_mut().for_each(|v| *v = *v * inv);
    }
    (loss / rows as f64, grad)
}

/// Gradients of every parameter given the gradient of the loss w.r.t. logits.
/// Running-statistic tensors get zero gradient.
pub fn backward<S: Scalar>(
    model: &Model<S>,
    pass: &ForwardPass<S>,
    dlogits: &[S],
    hyper: &LayerHyper,
) -> Model<S> {
    let rows = pass.rows;
    let widths = model.widths();
    let slope = S::lit(hyper.leaky_slope);
    let n_rows = S::lit(rows as f64);
    let mut grads = model.zeros_like();

    let last = model.hidden_layers();
    let ob = model.output_base();
    let (fan_in, out) = (widths[last], widths[last + 1]);
    gemm(Op::T, Op::N, fan_in, rows, out, S::one(), &pass.activations[last], dlogits, S::zero(), grads.t_mut(ob));
    sum_rows(dlogits, out, grads.t_mut(ob + 1));
    let mut d_act = vec![S::zero(); rows * fan_in];
    gemm(Op::N, Op::T, rows, out, fan_in, S::one(), dlogits, model.t(ob), S::zero(), &mut d_act);

    for l in (0..last).rev() {
        let base = Model::<S>::hidden_base(l);
        let (fan_in, out) = (widths[l], widths[l + 1]);
        let cache = &pass.hidden[l];
        let gain = model.t(base + 2);

        // through dropout and the activation
        let mut dz = d_act;
        if !cache.mask.is_empty() {
            dz.iter_mut().zip(&cache.mask).for_each(|(d, &m)| *d = *d * m);
        }
        for (d, &y) in dz.iter_mut().zip(&cache.pre_act) {
            if y <= S::zero() {
                *d = *d * slope;
            }
        }

        // batch-norm backward with batch statistics:
        // dz = inv_std / B * (B * dxhat - sum(dxhat) - xhat * sum(dxhat * xhat))
        let mut d_gain = vec![S::zero(); out];
        let mut d_shift = vec![S::zero(); out];
        for (dr, xr) in dz.chunks_exact(out).zip(cache.xhat.chunks_exact(out)) {
            let acc = d_gain.iter_mut().zip(d_shift.iter_mut());
            for (((dg, ds), &d), &xh) in acc.zip(dr).zip(xr) {
                *dg = *dg + d * xh;
                *ds = *ds + d;
            }
        }
        // sum(dxhat) = gain * d_shift, sum(dxhat * xhat) = gain * d_gain
        let coef: Vec<(S, S, S)> = (0..out)
            .map(|j| {
                let scale = cache.inv_std[j] / n_rows;
                (scale * n_rows * gain[j], scale * gain[j] * d_shift[j], scale * gain[j] * d_gain[j])
            })
            .collect();
        for (dr, xr) in dz.chunks_exact_mut(out).zip(cache.xhat.chunks_exact(out)) {
            for ((d, &xh), &(a, b, c)) in dr.iter_mut().zip(xr).zip(&coef) {
                *d = a * *d - b - xh * c;
            }
        }

        gemm(Op::T, Op::N, fan_in, rows, out, S::one(), &pass.activations[l], &dz, S::zero(), grads.t_mut(base));
        sum_rows(&dz, out, grads.t_mut(base + 1));
        grads.t_mut(base + 2).copy_from_slice(&d_gain);
        grads.t_mut(base + 3).copy_from_slice(&d_shift);

        let mut d_in = vec![S::zero(); rows * fan_in];
        if l > 0 {
            gemm(Op::N, Op::T, rows, out, fan_in, S::one(), &dz, model.t(base), S::zero(), &mut d_in);
        }
        d_act = d_in;
    }
    grads
}

fn sum_rows<S: Scalar>(m: &[S], cols: usize, out: &mut [S]) {
    out.iter_mut().for_each(|v| *v = S::zero());
    for row in m.chunks_exact(cols) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = *o + v;
        }
    }
}

/// Train-mode loss and gradients for one batch. The dropout mask drawn in the
/// forward pass is reused by the backward pass.
pub fn loss_and_grad<S: Scalar, R: Rng>(
    model: &Model<S>,
    x: &[S],
    targets: &[u8],
    hyper: &LayerHyper,
    rng: &mut R,
) -> Result<(f64, Model<S>, ForwardPass<S>)> {
    let pass = forward(model, x, targets.len(), Mode::Train, hyper, rng)?;
    let (loss, dlogits) = cross_entropy(&pass.logits, targets);
    if !loss.is_finite() {
        return Err(Error::Divergence(loss));
    }
    let grads = backward(model, &pass, &dlogits, hyper);
    Ok((loss, grads, pass))
}

/// Folds batch statistics into the running estimates:
/// `running = (1 - momentum) * running + momentum * batch`, with the unbiased
/// batch variance.
pub fn update_running_stats<S: Scalar>(model: &mut Model<S>, pass: &ForwardPass<S>, momentum: f64) {
    let mom = S::lit(momentum);
    let keep = S::lit(1.0 - momentum);
    let unbias = S::lit(pass.rows as f64 / (pass.rows as f64 - 1.0));
    for (l, stats) in pass.batch_stats.iter().enumerate() {
        let base = Model::<S>::hidden_base(l);
        for (r, &m) in model.t_mut(base + 4).iter_mut().zip(&stats.mean) {
            *r = keep * *r + mom * m;
        }
        for (r, &v) in model.t_mut(base + 5).iter_mut().zip(&stats.var) {
            *r = keep * *r + mom * v * unbias;
        }
    }
}
