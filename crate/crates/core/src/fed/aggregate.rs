use std::fmt;
use std::str::FromStr;

use super::client::ClientUpdate;
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::scalar::Scalar;

/// Server-side combination rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Aggregator {
    FedAvg,
    FedProx,
    FedAdagrad,
    FedYogi,
    FedAdam,
}

impl Aggregator {
    pub const ALL: [Aggregator; 5] = [
        Aggregator::FedAvg,
        Aggregator::FedProx,
        Aggregator::FedAdagrad,
        Aggregator::FedYogi,
        Aggregator::FedAdam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Aggregator::FedAvg => "fedavg",
            Aggregator::FedProx => "fedprox",
            Aggregator::FedAdagrad => "fedadagrad",
            Aggregator::FedYogi => "fedyogi",
            Aggregator::FedAdam => "fedadam",
        }
    }

    /// Whether the server applies an adaptive optimizer to the averaged delta.
    pub fn is_adaptive(self) -> bool {
        matches!(self, Aggregator::FedAdagrad | Aggregator::FedYogi | Aggregator::FedAdam)
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|a| a.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Aggregator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|a| a.name() == lower)
            .ok_or_else(|| Error::Config(format!("unknown aggregator `{s}`; valid: {}", Self::valid_names())))
    }
}

/// Adaptive server optimizer constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServerHyper {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub tau: f64,
}

impl Default for ServerHyper {
    fn default() -> Self {
        ServerHyper {
            eta: 0.01,
            beta1: 0.9,
            beta2: 0.99,
            tau: 1e-3,
        }
    }
}

impl ServerHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eta > 0.0
            && self.tau > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "server optimizer needs eta > 0, tau > 0 and betas in [0, 1): {self:?}"
            )))
        }
    }
}

/// Sample-weighted mean of models, accumulated incrementally:
/// `theta += (theta_k - theta) * n_k / cum`. Exact for a single model and for
/// identical inputs.
pub fn weighted_mean<S: Scalar>(models: &[(&Model<S>, usize)]) -> Result<Model<S>> {
    let ((first, n0), rest) = models.split_first().ok_or(Error::Empty("no models to average"))?;
    let mut out = (*first).clone();
    let mut cum = *n0 as f64;
    for (m, n) in rest {
        out.check_same_shape(m)?;
        cum += *n as f64;
        if cum == 0.0 {
            continue;
        }
        let w = S::lit(*n as f64 / cum);
        for (acc, t) in out.tensors_mut().iter_mut().zip(m.tensors()) {
            for (a, &x) in acc.data.iter_mut().zip(&t.data) {
                *a = *a + (x - *a) * w;
            }
        }
    }
    Ok(out)
}

fn participants<S>(updates: &[ClientUpdate<S>]) -> Vec<(&Model<S>, usize, u16)> {
    let mut p: Vec<_> = updates
        .iter()
        .filter_map(|u| u.params.as_ref().filter(|_| u.participated).map(|m| (m, u.n_train, u.client_id)))
        .collect();
    p.sort_by_key(|&(_, _, id)| id);
    p
}

/// FedAvg over participating clients in ascending client order. `None` when
/// nobody participated (the round stalls).
pub fn aggregate_fedavg<S: Scalar>(updates: &[ClientUpdate<S>], global: &Model<S>) -> Result<Option<Model<S>>> {
    let p = participants(updates);
    if p.is_empty() {
        return Ok(None);
    }
    for (m, _, _) in &p {
        global.check_same_shape(m)?;
    }
    let pairs: Vec<_> = p.iter().map(|&(m, n, _)| (m, n)).collect();
    weighted_mean(&pairs).map(Some)
}

/// Global model plus adaptive-optimizer moments.
#[derive(Clone, Debug)]
pub struct ServerState<S> {
    pub global: Model<S>,
    pub aggregator: Aggregator,
    pub hyper: ServerHyper,
    m: Option<Vec<Vec<f64>>>,
    v: Option<Vec<Vec<f64>>>,
}

impl<S: Scalar> ServerState<S> {
    pub fn new(global: Model<S>, aggregator: Aggregator, hyper: ServerHyper) -> Self {
        ServerState {
            global,
            aggregator,
            hyper,
            m: None,
            v: None,
        }
    }

    /// Combines one round of updates into a new global model. Returns false
    /// when no client participated and the global model is unchanged.
    pub fn aggregate(&mut self, updates: &[ClientUpdate<S>]) -> Result<bool> {
        let next = if self.aggregator.is_adaptive() {
            self.aggregate_adaptive(updates)?
        } else {
            aggregate_fedavg(updates, &self.global)?
        };
        match next {
            Some(g) => {
                self.global = g;
                Ok(true)
            }
            None => Ok(false),
        }
    }

    /// Averaged delta fed to Adagrad/Yogi/Adam moments without bias correction.
    /// Batch-norm running statistics are averaged directly.
    fn aggregate_adaptive(&mut self, updates: &[ClientUpdate<S>]) -> Result<Option<Model<S>>> {
        let p = participants(updates);
        if p.is_empty() {
            return Ok(None);
        }
        for (m, _, _) in &p {
            self.global.check_same_shape(m)?;
        }
        let pairs: Vec<_> = p.iter().map(|&(m, n, _)| (m, n)).collect();
        let mean = weighted_mean(&pairs)?;
        let h = self.hyper;
        let shapes = || -> Vec<Vec<f64>> {
            self.global
                .tensors()
                .iter()
                .map(|t| if t.role.is_trainable() { vec![0.0; t.data.len()] } else { Vec::new() })
                .collect()
        };
        let mut m = self.m.take().unwrap_or_else(shapes);
        let mut v = self.v.take().unwrap_or_else(shapes);
        let mut next = self.global.clone();
        for (i, t) in next.tensors_mut().iter_mut().enumerate() {
            let avg = &mean.tensors()[i].data;
            if !t.role.is_trainable() {
                t.data.copy_from_slice(avg);
                continue;
            }
            for k in 0..t.data.len() {
                let theta = t.data[k].as_f64();
                let delta = avg[k].as_f64() - theta;
                let mk = h.beta1 * m[i][k] + (1.0 - h.beta1) * delta;
                let d2 = delta * delta;
                let vk = match self.aggregator {
                    Aggregator::FedAdagrad => v[i][k] + d2,
                    Aggregator::FedYogi => {
                        let s = v[i][k] - d2;
                        let sign = if s > 0.0 {
                            1.0
                        } else if s < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        v[i][k] - (1.0 - h.beta2) * d2 * sign
                    }
                    _ => h.beta2 * v[i][k] + (1.0 - h.beta2) * d2,
                };
                m[i][k] = mk;
                v[i][k] = vk;
                t.data[k] = S::lit(theta + h.eta * mk / (vk.sqrt() + h.tau));
            }
        }
        self.m = Some(m);
        self.v = Some(v);
        Ok(Some(next))
    }
}
