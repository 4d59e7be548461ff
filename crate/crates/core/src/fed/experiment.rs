use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::aggregate::{Aggregator, ServerHyper, ServerState};
use super::client::{local_round, scale_set, BufferCapacities, ClientState, ClientUpdate, Strategy};
use crate::error::{Error, Result};
use crate::features::{extract, FeatureSchema, RawVector, Scaler};
use crate::flowdata::{partition_by_round, FlowRecord, RoundIndex};
use crate::metrics::{macro_f1, per_class_report, ClassMetrics, ConfusionMatrix};
use crate::nn::{eval_loss, predict, train_local, Dataset, Model, TrainConfig};
use crate::rng::{substream, Stream};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    Centralized,
    FedUnbuffered,
    FedBuffered,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Centralized, Scenario::FedUnbuffered, Scenario::FedBuffered];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Centralized => "centralized",
            Scenario::FedUnbuffered => "fed-unbuffered",
            Scenario::FedBuffered => "fed-buffered",
        }
    }

    pub fn strategy(self) -> Option<Strategy> {
        match self {
            Scenario::Centralized => None,
            Scenario::FedUnbuffered => Some(Strategy::Unbuffered),
            Scenario::FedBuffered => Some(Strategy::Buffered),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown scenario `{s}`; valid: centralized, fed-unbuffered, fed-buffered"
            ))
        })
    }
}

/// Where federated clients get their min-max bounds from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalerPolicy {
    /// Each client fits on its own first ready training set.
    PerClient,
    /// One scaler fitted on every flow in the simulated horizon.
    Global,
}

impl fmt::Display for ScalerPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalerPolicy::PerClient => "per-client",
            ScalerPolicy::Global => "global",
        })
    }
}

impl FromStr for ScalerPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-client" => Ok(ScalerPolicy::PerClient),
            "global" => Ok(ScalerPolicy::Global),
            other => Err(Error::Config(format!(
                "unknown scaler policy `{other}`; valid: per-client, global"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub aggregator: Aggregator,
    pub seed: u64,
    pub n_clients: u16,
    pub n_rounds: u32,
    pub round_seconds: f64,
    pub schema: FeatureSchema,
    pub fed_train: TrainConfig,
    pub central_train: TrainConfig,
    pub server: ServerHyper,
    pub mu: f64,
    pub capacities: BufferCapacities,
    /// Validation sets smaller than this disable early stopping.
    pub min_val_for_early_stop: usize,
    pub scaler_policy: ScalerPolicy,
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, aggregator: Aggregator, schema: FeatureSchema) -> Self {
        ExperimentConfig {
            scenario,
            aggregator,
            seed: 42,
            n_clients: 14,
            n_rounds: 112,
            round_seconds: crate::ROUND_SECONDS,
            schema,
            fed_train: TrainConfig::federated(),
            central_train: TrainConfig::centralized(),
            server: ServerHyper::default(),
            mu: 0.01,
            capacities: BufferCapacities::default(),
            min_val_for_early_stop: 64,
            scaler_policy: ScalerPolicy::PerClient,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 || self.n_rounds == 0 {
            return Err(Error::Config("need at least one client and one round".into()));
        }
        if !(self.round_seconds > 0.0) {
            return Err(Error::Config("round length must be positive".into()));
        }
        if self.mu < 0.0 || !self.mu.is_finite() {
            return Err(Error::Config(format!("proximal mu must be >= 0, got {}", self.mu)));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        self.fed_train.validate()?;
        self.central_train.validate()?;
        self.server.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClientRoundMetrics {
    pub client_id: u16,
    pub participated: bool,
    pub n_train: usize,
    pub n_test: usize,
    pub macro_f1: Option<f64>,
    pub loss: Option<f64>,
    /// Reason a ready client produced no update.
    pub failure: Option<String>,
}

/// Per-round outcome. System metrics are test-size-weighted means over the
/// clients evaluated this round; `None` when nobody was evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundReport {
    pub round: u32,
    pub scenario: Scenario,
    pub aggregator: Option<Aggregator>,
    pub clients: Vec<ClientRoundMetrics>,
    pub system_f1: Option<f64>,
    pub system_loss: Option<f64>,
    pub stalled: bool,
}

impl RoundReport {
    pub fn participants(&self) -> usize {
        self.clients.iter().filter(|c| c.participated).count()
    }
}

/// Centralized baseline scores on its fixed splits.
#[derive(Clone, Debug, PartialEq)]
pub struct CentralSummary {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub epochs_run: usize,
    pub train_f1: f64,
    pub val_f1: Option<f64>,
    pub test_f1: f64,
    pub test_loss: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome<S> {
    pub reports: Vec<RoundReport>,
    pub model: Model<S>,
    /// Confusion of the final model over the last evaluated test sets.
    pub final_confusion: Option<ConfusionMatrix>,
    pub central: Option<CentralSummary>,
}

impl<S> ExperimentOutcome<S> {
    /// System macro-F1 per round, NaN where nothing was evaluated.
    pub fn f1_series(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.system_f1.unwrap_or(f64::NAN)).collect()
    }

    pub fn per_class(&self) -> Option<Vec<ClassMetrics>> {
        self.final_confusion.as_ref().map(per_class_report)
    }
}

/// Fixed 70/10/20 split of the pooled corpus with one scaler fitted on the
/// training part.
#[derive(Clone, Debug)]
pub struct CentralData<S> {
    pub train: Dataset<S>,
    pub val: Dataset<S>,
    pub test: Dataset<S>,
    pub scaler: Scaler,
}

fn in_horizon<'a>(flows: &'a [FlowRecord], cfg: &ExperimentConfig) -> impl Iterator<Item = &'a FlowRecord> + 'a {
    let (rounds, len, clients) = (cfg.n_rounds, cfg.round_seconds, cfg.n_clients);
    flows
        .iter()
        .filter(move |f| RoundIndex::of(f.start_time, len).0 < rounds && f.client_id < clients)
}

pub fn central_data<S: Scalar>(flows: &[FlowRecord], cfg: &ExperimentConfig) -> Result<CentralData<S>> {
    let pool: Vec<&FlowRecord> = in_horizon(flows, cfg).collect();
    if pool.len() < 10 {
        return Err(Error::Empty("too few flows for a centralized split"));
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut substream(cfg.seed, Stream::CentralSplit, 0, 0));
    let n = pool.len();
    let (n_train, n_val) = (7 * n / 10, n / 10);
    let raw = |idx: &[usize]| -> Vec<RawVector> {
        idx.par_iter()
            .map(|&i| extract(&cfg.schema, pool[i], cfg.round_seconds))
            .collect()
    };
    let train_raw = raw(&order[..n_train]);
    let scaler = Scaler::fit(&train_raw)?;
    let train = scale_set(&scaler, &train_raw)?;
    drop(train_raw);
    let val = scale_set(&scaler, &raw(&order[n_train..n_train + n_val]))?;
    let test = scale_set(&scaler, &raw(&order[n_train + n_val..]))?;
    Ok(CentralData {
        train,
        val,
        test,
        scaler,
    })
}

/// Called after every federated round with the new global model.
pub type RoundHook<'a, S> = dyn FnMut(u32, &Model<S>) -> Result<()> + Send + 'a;

/// Runs one scenario end to end. Results depend only on the corpus and the
/// configuration, never on `workers`.
pub fn run_experiment<S: Scalar>(
    flows: &[FlowRecord],
    cfg: &ExperimentConfig,
    hook: &mut RoundHook<'_, S>,
) -> Result<ExperimentOutcome<S>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cfg.scenario.strategy() {
        None => run_centralized(flows, cfg),
        Some(strategy) => run_federated(flows, cfg, strategy, hook),
    })
}

fn initial_model<S: Scalar>(cfg: &ExperimentConfig) -> Model<S> {
    Model::init(
        cfg.schema.len(),
        cfg.fed_train.leaky_slope,
        &mut substream(cfg.seed, Stream::ModelInit, 0, 0),
    )
}

fn run_centralized<S: Scalar>(flows: &[FlowRecord], cfg: &ExperimentConfig) -> Result<ExperimentOutcome<S>> {
    let data = central_data::<S>(flows, cfg)?;
    let mut model = initial_model::<S>(cfg);
    let tc = &cfg.central_train;
    let val = (data.val.len() >= cfg.min_val_for_early_stop.max(1)).then_some(&data.val);
    let out = train_local(
        &mut model,
        &data.train,
        val,
        tc,
        None,
        &mut substream(cfg.seed, Stream::CentralTrain, 0, 0),
    )?;
    let hyper = tc.layer_hyper();
    let confusion = |d: &Dataset<S>| -> Result<ConfusionMatrix> {
        Ok(ConfusionMatrix::from_predictions(d.labels(), &predict(&model, d, &hyper)?))
    };
    let train_f1 = macro_f1(&confusion(&data.train)?)?;
    let val_f1 = if data.val.is_empty() {
        None
    } else {
        Some(macro_f1(&confusion(&data.val)?)?)
    };
    let cm = confusion(&data.test)?;
    let test_f1 = macro_f1(&cm)?;
    let test_loss = eval_loss(&model, &data.test, &hyper)?;
    let report = RoundReport {
        round: 0,
        scenario: cfg.scenario,
        aggregator: None,
        clients: Vec::new(),
        system_f1: Some(test_f1),
        system_loss: Some(test_loss),
        stalled: false,
    };
    Ok(ExperimentOutcome {
        reports: vec![report],
        model,
        final_confusion: Some(cm),
        central: Some(CentralSummary {
            n_train: data.train.len(),
            n_val: data.val.len(),
            n_test: data.test.len(),
            epochs_run: out.epochs_run,
            train_f1,
            val_f1,
            test_f1,
            test_loss,
        }),
    })
}

struct ClientStep<S> {
    update: ClientUpdate<S>,
    test: Option<Dataset<S>>,
}

fn run_federated<S: Scalar>(
    flows: &[FlowRecord],
    cfg: &ExperimentConfig,
    strategy: Strategy,
    hook: &mut RoundHook<'_, S>,
) -> Result<ExperimentOutcome<S>> {
    let parts = partition_by_round(flows, cfg.round_seconds);
    let global_scaler = match cfg.scaler_policy {
        ScalerPolicy::PerClient => None,
        ScalerPolicy::Global => {
            let rows: Vec<Vec<f64>> = in_horizon(flows, cfg)
                .collect::<Vec<_>>()
                .par_iter()
                .map(|f| cfg.schema.extract(f).values)
                .collect();
            Some(Scaler::fit_rows(&rows)?)
        }
    };
    let mut clients: Vec<ClientState> = (0..cfg.n_clients).map(|c| ClientState::new(c, cfg.capacities)).collect();
    let mut server = ServerState::new(initial_model::<S>(cfg), cfg.aggregator, cfg.server);
    let mut reports = Vec::with_capacity(cfg.n_rounds as usize);
    let mut final_confusion = None;
    let empty = Vec::new();

    for r in 0..cfg.n_rounds {
        let cell = parts.get(&RoundIndex(r));
        let global = &server.global;
        let steps: Vec<Result<ClientStep<S>>> = clients
            .par_iter_mut()
            .map(|state| {
                let id = state.client_id;
                let arrivals = cell.and_then(|c| c.get(&id)).unwrap_or(&empty);
                let raw: Vec<RawVector> = arrivals
                    .iter()
                    .map(|f| extract(&cfg.schema, f, cfg.round_seconds))
                    .collect();
                let mut ingest = substream(cfg.seed, Stream::ClientIngest, id as u64, r as u64);
                let sets = state.ingest_round(raw, strategy, &mut ingest);
                if !sets.ready {
                    return Ok(ClientStep {
                        update: ClientUpdate::skipped(id),
                        test: None,
                    });
                }
                let scaler = match &global_scaler {
                    Some(s) => s,
                    None => {
                        if state.scaler.is_none() {
                            state.scaler = Some(Scaler::fit(&sets.train)?);
                        }
                        state.scaler.as_ref().expect("fitted above")
                    }
                };
                let data = sets.scaled::<S>(scaler)?;
                let mut rng = substream(cfg.seed, Stream::ClientTrain, id as u64, r as u64);
                let update = local_round(
                    id,
                    &data,
                    global,
                    &cfg.fed_train,
                    cfg.aggregator,
                    cfg.mu,
                    cfg.min_val_for_early_stop,
                    &mut rng,
                );
                let test = update.participated.then_some(data.test);
                Ok(ClientStep { update, test })
            })
            .collect();
        let steps = steps.into_iter().collect::<Result<Vec<_>>>()?;
        let (updates, tests): (Vec<_>, Vec<_>) = steps.into_iter().map(|s| (s.update, s.test)).unzip();
        let advanced = server.aggregate(&updates)?;
        hook(r, &server.global)?;

        let hyper = cfg.fed_train.layer_hyper();
        let global = &server.global;
        let evals: Vec<Option<(ConfusionMatrix, f64)>> = tests
            .par_iter()
            .map(|t| -> Result<Option<(ConfusionMatrix, f64)>> {
                match t {
                    Some(test) if advanced && !test.is_empty() => {
                        let pred = predict(global, test, &hyper)?;
                        let cm = ConfusionMatrix::from_predictions(test.labels(), &pred);
                        Ok(Some((cm, eval_loss(global, test, &hyper)?)))
                    }
                    _ => Ok(None),
                }
            })
            .collect::<Result<Vec<_>>>()?;

        let mut clients_out = Vec::with_capacity(updates.len());
        let (mut wsum, mut f1sum, mut losssum) = (0.0, 0.0, 0.0);
        let mut round_cm = ConfusionMatrix::default();
        for ((u, t), e) in updates.iter().zip(&tests).zip(&evals) {
            let n_test = t.as_ref().map_or(0, |d| d.len());
            let (f1, loss) = match e {
                Some((cm, loss)) => {
                    let f1 = macro_f1(cm)?;
                    let w = n_test as f64;
                    wsum += w;
                    f1sum += w * f1;
                    losssum += w * loss;
                    round_cm.merge(cm);
                    (Some(f1), Some(*loss))
                }
                None => (None, None),
            };
            clients_out.push(ClientRoundMetrics {
                client_id: u.client_id,
                participated: u.participated,
                n_train: u.n_train,
                n_test,
                macro_f1: f1,
                loss,
                failure: u.failure.clone(),
            });
        }
        if wsum > 0.0 {
            final_confusion = Some(round_cm);
        }
        reports.push(RoundReport {
            round: r,
            scenario: cfg.scenario,
            aggregator: Some(cfg.aggregator),
            clients: clients_out,
            system_f1: (wsum > 0.0).then(|| f1sum / wsum),
            system_loss: (wsum > 0.0).then(|| losssum / wsum),
            stalled: !advanced,
        });
    }

    Ok(ExperimentOutcome {
        reports,
        model: server.global,
        final_confusion,
        central: None,
    })
}
