use proptest::prelude::*;
use quicfed_core::features::{extract, FeatureVector, RawVector};
use quicfed_core::fed::{self, *};
use quicfed_core::nn::{train_local, Model};
use quicfed_core::rng::{substream, Stream};
use quicfed_core::{synthgen, FeatureSchema, FlowRecord, GenConfig, RoundIndex, Scaler, ServiceLabel};

fn model(dim: usize, seed: u64) -> Model<f64> {
    let mut m = Model::<f64>::init(dim, 0.1, &mut substream(seed, Stream::ModelInit, 0, 0));
    // give the running statistics distinct values too
    for (k, t) in m.tensors_mut().iter_mut().enumerate() {
        for (i, x) in t.data.iter_mut().enumerate() {
            *x += ((seed as usize * 31 + k * 7 + i) % 13) as f64 * 0.01;
        }
    }
    m
}

fn update(id: u16, m: Model<f64>, n: usize) -> ClientUpdate<f64> {
    ClientUpdate {
        client_id: id,
        params: Some(m),
        n_train: n,
        train_loss: 0.0,
        val_loss: None,
        participated: true,
        failure: None,
    }
}

fn raw(i: usize) -> RawVector {
    FeatureVector {
        values: vec![i as f64],
        label: ServiceLabel::from_code(i % 7).unwrap(),
        client_id: 0,
        round: RoundIndex(0),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn fifo_keeps_the_newest_suffix(
        capacity in 0usize..40,
        pushes in proptest::collection::vec(0usize..25, 0..12),
    ) {
        let mut buf = FifoBuffer::new(capacity);
        let mut oracle: Vec<usize> = Vec::new();
        let mut next = 0;
        for n in pushes {
            let batch: Vec<usize> = (next..next + n).collect();
            next += n;
            let before = buf.len();
            let evicted = buf.push(batch.clone());
            oracle.extend(batch);
            prop_assert!(buf.len() <= capacity);
            prop_assert_eq!(evicted, (before + n).saturating_sub(capacity));
            let keep = oracle.len().min(capacity);
            let suffix = &oracle[oracle.len() - keep..];
            prop_assert_eq!(buf.iter().copied().collect::<Vec<_>>(), suffix.to_vec());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn buffered_train_size_is_pinned_after_ready(
        arrivals in proptest::collection::vec(0usize..4000, 1..14),
        seed in any::<u64>(),
    ) {
        let caps = BufferCapacities::default();
        let mut state = ClientState::new(0, caps);
        let mut rng = substream(seed, Stream::ClientIngest, 0, 0);
        let mut was_ready = false;
        for n in arrivals {
            let sets = state.ingest_round((0..n).map(raw).collect(), fed::Strategy::Buffered, &mut rng);
            prop_assert!(sets.train.len() <= caps.train);
            prop_assert!(sets.val.len() <= caps.val && sets.test.len() <= caps.test);
            if was_ready {
                prop_assert!(sets.ready);
            }
            was_ready |= sets.ready;
            if was_ready {
                prop_assert_eq!(sets.train.len(), 6400);
            } else {
                prop_assert!(sets.train.len() < 6400);
            }
        }
    }

    #[test]
    fn fedavg_stays_in_envelope_and_ignores_order(
        seeds in proptest::collection::vec(1u64..1000, 1..6),
        counts in proptest::collection::vec(1usize..500, 6),
        rotate in 0usize..6,
    ) {
        let models: Vec<Model<f64>> = seeds.iter().map(|&s| model(3, s)).collect();
        let updates: Vec<ClientUpdate<f64>> = models
            .iter()
            .enumerate()
            .map(|(i, m)| update(i as u16, m.clone(), counts[i]))
            .collect();
        let global = model(3, 0);
        let avg = aggregate_fedavg(&updates, &global).unwrap().unwrap();

        let mut shuffled = updates.clone();
        let k = rotate % shuffled.len();
        shuffled.rotate_left(k);
        let again = aggregate_fedavg(&shuffled, &global).unwrap().unwrap();
        prop_assert_eq!(&again, &avg);

        // relabelling clients changes the summation order; only reassociation error remains
        let relabelled: Vec<ClientUpdate<f64>> = shuffled
            .iter()
            .enumerate()
            .map(|(i, u)| ClientUpdate { client_id: i as u16, ..u.clone() })
            .collect();
        let permuted = aggregate_fedavg(&relabelled, &global).unwrap().unwrap();

        for (t, tensor) in avg.tensors().iter().enumerate() {
            for (i, &x) in tensor.data.iter().enumerate() {
                let vals = models.iter().map(|m| m.tensors()[t].data[i]);
                let lo = vals.clone().fold(f64::INFINITY, f64::min);
                let hi = vals.fold(f64::NEG_INFINITY, f64::max);
                let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
                prop_assert!(x >= lo - slack && x <= hi + slack, "{} outside [{}, {}]", x, lo, hi);
                prop_assert!((permuted.tensors()[t].data[i] - x).abs() <= slack);
            }
        }
    }
}

#[test]
fn identical_updates_are_a_fixed_point_for_every_aggregator() {
    let global = model(4, 7);
    for agg in Aggregator::ALL {
        let updates: Vec<_> = (0..4u16).map(|i| update(i, global.clone(), 10 + i as usize)).collect();
        let mut server = ServerState::new(global.clone(), agg, ServerHyper::default());
        assert!(server.aggregate(&updates).unwrap(), "{agg}");
        assert_eq!(server.global, global, "{agg}");
    }
}

#[test]
fn single_participant_is_copied_exactly() {
    let global = model(4, 1);
    let client = model(4, 2);
    let updates = vec![
        ClientUpdate::skipped(0),
        update(3, client.clone(), 17),
        ClientUpdate::skipped(5),
    ];
    assert_eq!(aggregate_fedavg(&updates, &global).unwrap().unwrap(), client);
}

fn small_corpus(seed: u64, clients: u16, rounds: u32) -> Vec<FlowRecord> {
    let cfg = GenConfig {
        seed,
        n_clients: clients,
        n_rounds: rounds,
        rate_min: 120.0,
        rate_max: 200.0,
        night_floor_min: 0.5,
        night_floor_max: 0.6,
        ..GenConfig::default()
    };
    synthgen::generate(&cfg).unwrap()
}

fn small_config(scenario: Scenario, agg: Aggregator, clients: u16, rounds: u32) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(scenario, agg, FeatureSchema::reduced());
    cfg.seed = 3;
    cfg.n_clients = clients;
    cfg.n_rounds = rounds;
    cfg.fed_train.epochs = 2;
    cfg.capacities = BufferCapacities { train: 60, val: 10, test: 20 };
    cfg
}

#[test]
fn fedprox_without_proximal_term_replays_fedavg() {
    let flows = small_corpus(11, 4, 5);
    for scenario in [Scenario::FedUnbuffered, Scenario::FedBuffered] {
        let mut prox_cfg = small_config(scenario, Aggregator::FedProx, 4, 5);
        prox_cfg.mu = 0.0;
        let avg_cfg = small_config(scenario, Aggregator::FedAvg, 4, 5);

        let mut prox_models = Vec::new();
        let prox = run_experiment::<f64>(&flows, &prox_cfg, &mut |_, m| {
            prox_models.push(m.clone());
            Ok(())
        })
        .unwrap();
        let mut avg_models = Vec::new();
        let avg = run_experiment::<f64>(&flows, &avg_cfg, &mut |_, m| {
            avg_models.push(m.clone());
            Ok(())
        })
        .unwrap();

        assert_eq!(prox_models.len(), 5);
        assert_eq!(prox_models, avg_models, "{scenario}");
        let bits = |s: Vec<f64>| s.into_iter().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(prox.f1_series()), bits(avg.f1_series()));
    }
}

#[test]
fn single_client_round_matches_plain_local_training() {
    let flows = small_corpus(5, 1, 2);
    let cfg = small_config(Scenario::FedUnbuffered, Aggregator::FedAvg, 1, 2);
    let mut first = None;
    run_experiment::<f64>(&flows, &cfg, &mut |r, m| {
        if r == 0 {
            first = Some(m.clone());
        }
        Ok(())
    })
    .unwrap();

    let arrivals: Vec<RawVector> = flows
        .iter()
        .filter(|f| RoundIndex::of(f.start_time, cfg.round_seconds).0 == 0)
        .map(|f| extract(&cfg.schema, f, cfg.round_seconds))
        .collect();
    let mut state = ClientState::new(0, cfg.capacities);
    let sets = state.ingest_round(
        arrivals,
        fed::Strategy::Unbuffered,
        &mut substream(cfg.seed, Stream::ClientIngest, 0, 0),
    );
    let scaler = Scaler::fit(&sets.train).unwrap();
    let data = sets.scaled::<f64>(&scaler).unwrap();
    let mut expected = Model::<f64>::init(cfg.schema.len(), 0.1, &mut substream(cfg.seed, Stream::ModelInit, 0, 0));
    let val = (data.val.len() >= cfg.min_val_for_early_stop).then_some(&data.val);
    train_local(
        &mut expected,
        &data.train,
        val,
        &cfg.fed_train,
        None,
        &mut substream(cfg.seed, Stream::ClientTrain, 0, 0),
    )
    .unwrap();
    assert_eq!(first.unwrap(), expected);
}

#[test]
fn reports_cover_every_round_and_client() {
    let flows = small_corpus(8, 3, 6);
    let cfg = small_config(Scenario::FedBuffered, Aggregator::FedYogi, 3, 6);
    let out = run_experiment::<f32>(&flows, &cfg, &mut |_, _| Ok(())).unwrap();
    assert_eq!(out.reports.len(), 6);
    for (r, rep) in out.reports.iter().enumerate() {
        assert_eq!(rep.round, r as u32);
        assert_eq!(rep.clients.len(), 3);
        assert_eq!(rep.stalled, rep.participants() == 0);
    }
}
