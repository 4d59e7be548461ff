use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use super::buffer::FifoBuffer;
use super::Aggregator;
use crate::error::{Error, Result};
use crate::features::{RawVector, Scaler};
use crate::nn::{train_local, Dataset, Model, Proximal, TrainConfig};
use crate::scalar::Scalar;

/// How a client turns each round's arrivals into train/val/test sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Use only this round's flows, split 70/10/20.
    Unbuffered,
    /// Route flows into FIFO buffers; train once the training buffer is full.
    Buffered,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Unbuffered => "unbuffered",
            Strategy::Buffered => "buffered",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unbuffered" => Ok(Strategy::Unbuffered),
            "buffered" => Ok(Strategy::Buffered),
            other => Err(Error::Config(format!(
                "unknown strategy `{other}`; valid: unbuffered, buffered"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BufferCapacities {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for BufferCapacities {
    fn default() -> Self {
        BufferCapacities {
            train: 6400,
            val: 914,
            test: 1828,
        }
    }
}

/// One round's data as seen by a client.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundSets {
    pub train: Vec<RawVector>,
    pub val: Vec<RawVector>,
    pub test: Vec<RawVector>,
    /// False means the client sits this round out.
    pub ready: bool,
}

/// Per-client state carried across rounds. Buffers hold unscaled vectors; the
/// scaler is fitted on the training set of the client's first ready round and
/// frozen afterwards.
#[derive(Clone, Debug)]
pub struct ClientState {
    pub client_id: u16,
    pub train_buf: FifoBuffer<RawVector>,
    pub val_buf: FifoBuffer<RawVector>,
    pub test_buf: FifoBuffer<RawVector>,
    pub scaler: Option<Scaler>,
}

impl ClientState {
    pub fn new(client_id: u16, caps: BufferCapacities) -> Self {
        ClientState {
            client_id,
            train_buf: FifoBuffer::new(caps.train),
            val_buf: FifoBuffer::new(caps.val),
            test_buf: FifoBuffer::new(caps.test),
            scaler: None,
        }
    }

    pub fn ingest_round<R: Rng>(&mut self, mut new_flows: Vec<RawVector>, strategy: Strategy, rng: &mut R) -> RoundSets {
        match strategy {
            Strategy::Unbuffered => {
                let n = new_flows.len();
                new_flows.shuffle(rng);
                let n_train = 7 * n / 10;
                let n_val = n / 10;
                let test = new_flows.split_off(n_train + n_val);
                let val = new_flows.split_off(n_train);
                RoundSets {
                    ready: new_flows.len() >= 2,
                    train: new_flows,
                    val,
                    test,
                }
            }
            Strategy::Buffered => {
                let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
                for v in new_flows {
                    let u: f64 = rng.gen();
                    if u < 0.7 {
                        train.push(v);
                    } else if u < 0.8 {
                        val.push(v);
                    } else {
                        test.push(v);
                    }
                }
                self.train_buf.push(train);
                self.val_buf.push(val);
                self.test_buf.push(test);
                RoundSets {
                    ready: self.train_buf.is_full() && self.train_buf.capacity() > 0,
                    train: self.train_buf.iter().cloned().collect(),
                    val: self.val_buf.iter().cloned().collect(),
                    test: self.test_buf.iter().cloned().collect(),
                }
            }
        }
    }
}

/// Scaled datasets for one local round.
#[derive(Clone, Debug)]
pub struct ScaledSets<S> {
    pub train: Dataset<S>,
    pub val: Dataset<S>,
    pub test: Dataset<S>,
}

pub fn scale_set<S: Scalar>(scaler: &Scaler, vectors: &[RawVector]) -> Result<Dataset<S>> {
    let mut ds = Dataset::new(scaler.dim());
    let mut row = vec![S::zero(); scaler.dim()];
    for v in vectors {
        if v.values.len() != scaler.dim() {
            return Err(Error::Shape(format!(
                "vector has {} features, scaler expects {}",
                v.values.len(),
                scaler.dim()
            )));
        }
        for (j, (&x, r)) in v.values.iter().zip(row.iter_mut()).enumerate() {
            *r = S::lit(scaler.scale_value(j, x));
        }
        ds.push(&row, v.label.code() as u8)?;
    }
    Ok(ds)
}

impl RoundSets {
    pub fn scaled<S: Scalar>(&self, scaler: &Scaler) -> Result<ScaledSets<S>> {
        Ok(ScaledSets {
            train: scale_set(scaler, &self.train)?,
            val: scale_set(scaler, &self.val)?,
            test: scale_set(scaler, &self.test)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClientUpdate<S> {
    pub client_id: u16,
    /// Present iff the client participated.
    pub params: Option<Model<S>>,
    pub n_train: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub participated: bool,
    /// Why a ready client failed to produce an update.
    pub failure: Option<String>,
}

impl<S> ClientUpdate<S> {
    pub fn skipped(client_id: u16) -> Self {
        ClientUpdate {
            client_id,
            params: None,
            n_train: 0,
            train_loss: f64::NAN,
            val_loss: None,
            participated: false,
            failure: None,
        }
    }
}

/// Local training from the broadcast model. FedProx adds the proximal pull
/// towards `global`; validation below `min_val` rows disables early stopping.
#[allow(clippy::too_many_arguments)]
pub fn local_round<S: Scalar, R: Rng>(
    client_id: u16,
    data: &ScaledSets<S>,
    global: &Model<S>,
    cfg: &TrainConfig,
    aggregator: Aggregator,
    mu: f64,
    min_val: usize,
    rng: &mut R,
) -> ClientUpdate<S> {
    let mut params = global.clone();
    let proximal = (aggregator == Aggregator::FedProx).then_some(Proximal { anchor: global, mu });
    let val = (data.val.len() >= min_val.max(1)).then_some(&data.val);
    match train_local(&mut params, &data.train, val, cfg, proximal, rng) {
        Ok(out) => ClientUpdate {
            client_id,
            params: Some(params),
            n_train: data.train.len(),
            train_loss: out.train_loss,
            val_loss: out.best_val_loss,
            participated: true,
            failure: None,
        },
        Err(e) => ClientUpdate {
            failure: Some(e.to_string()),
            ..ClientUpdate::skipped(client_id)
        },
    }
}
