mod common;

use kgcp_core::gcp::{full_loss, Batch, FactorModel, LossFamily};
use kgcp_core::oracle;
use kgcp_core::trainer::{make_batches, EpochTelemetry, NegativeSampler};
use kgcp_core::{train, EntityId, Precision, RelationId, TrainConfig, Trainer, Triple, TripleStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config() -> TrainConfig {
    TrainConfig {
        rank: 4,
        learning_rate: 0.05,
        batch_size: 64,
        n_negatives: 6,
        l2_coeff: 0.0,
        lr_decay_step: 1000,
        lr_decay_gamma: 1.0,
        n_epochs: 1,
        seed: 3,
        init_scale: 0.1,
        precision: Precision::F64,
        deterministic: true,
        ..TrainConfig::default()
    }
}

fn batch_of(store: &TripleStore) -> Batch {
    let mut b = Batch::with_capacity(store.len());
    for t in store.triples() {
        b.push(*t, 1.0);
    }
    b
}

/// Undirected 5-cycle: both directions of every edge. A model that scores
/// (s, o) and (o, s) identically can fit it exactly.
fn five_cycle() -> TripleStore {
    let raw: Vec<(u32, u32, u32)> = (0..5).flat_map(|i| [(i, 0, (i + 1) % 5), ((i + 1) % 5, 0, i)]).collect();
    TripleStore::build(&raw, 5, 1).unwrap()
}

#[test]
fn single_full_batch_step_matches_closed_form() {
    // No negatives and one batch holding all of Ω: the epoch is one AdamW
    // step from zero moments, so Δθ = −lr · g / (|g| + ε) per coordinate.
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let store = oracle::random_store(12, 3, 30, &mut rng);
    let config = TrainConfig {
        n_negatives: 0,
        batch_size: 1000,
        ..small_config()
    };
    let mut trainer = Trainer::<f64>::new(12, 3, config.clone()).unwrap();
    let init = trainer.model().clone();
    trainer.run_epoch(&store).unwrap();
    let after = trainer.model();

    let (g_a, g_b) = oracle::dense_gradient(&batch_of(&store), &init, LossFamily::Bernoulli);
    let expect = |theta: f64, g: f64| theta - config.learning_rate * g / (g.abs() + config.epsilon);
    for (rows, g, init_m, after_m) in [
        (12, &g_a, &init.entities, &after.entities),
        (3, &g_b, &init.relations, &after.relations),
    ] {
        for i in 0..rows {
            for k in 0..config.rank {
                let want = expect(init_m.get(i, k), g.get(i, k));
                let got = after_m.get(i, k);
                assert!((got - want).abs() < 1e-12, "row {i} col {k}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn five_cycle_loss_drops() {
    let store = five_cycle();
    let config = TrainConfig {
        n_epochs: 200,
        filtered_negatives: true,
        ..small_config()
    };
    let mut losses = Vec::new();
    let mut observer = |t: &EpochTelemetry, _: &FactorModel<f64>| {
        losses.push(t.loss);
        Ok(())
    };
    train::<f64>(&store, &config, &mut observer).unwrap();
    assert_eq!(losses.len(), 200);
    assert!(losses[..10].windows(2).all(|w| w[1] < w[0]), "first epochs: {:?}", &losses[..10]);
    assert!(losses[199] < 0.1 * losses[0], "initial {} final {}", losses[0], losses[199]);
}

#[test]
fn step_loss_is_exact_batch_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let store = oracle::random_store(40, 4, 120, &mut rng);
    let config = small_config();
    let mut trainer = Trainer::<f64>::new(40, 4, config.clone()).unwrap();
    let sampler = NegativeSampler::new(40).unwrap();
    let order: Vec<u32> = (0..store.len() as u32).collect();
    let batches: Vec<Batch> = make_batches(store.triples(), &order, sampler, &mut rng, 16, 3).collect();
    for (i, batch) in batches.iter().enumerate() {
        let before = trainer.model().clone();
        let lr = if i % 2 == 0 { 0.0 } else { 0.05 };
        let report = trainer.step(batch, lr).unwrap();
        let want = full_loss(batch, &before, LossFamily::Bernoulli).unwrap();
        assert!((report.loss - want).abs() <= 1e-6 * want.abs(), "{} vs {want}", report.loss);
        if lr == 0.0 {
            assert_eq!(trainer.model(), &before);
        }
    }
}

#[test]
fn step_touches_only_indexed_rows() {
    let config = small_config();
    let mut trainer = Trainer::<f32>::new(50, 5, config).unwrap();
    let before = trainer.model().clone();
    let mut batch = Batch::default();
    batch.push(Triple::new(3, 1, 9), 1.0);
    batch.push(Triple::new(9, 1, 17), 0.0);
    batch.push(Triple::new(3, 4, 3), 0.0);
    let report = trainer.step(&batch, 0.05).unwrap();
    assert_eq!((report.touched_entities, report.touched_relations), (3, 2));

    let after = trainer.model();
    let state = trainer.optimizer_state();
    for e in 0..50 {
        let touched = [3, 9, 17].contains(&e);
        assert_eq!(after.entities.row(e) != before.entities.row(e), touched, "entity {e}");
        assert_eq!(state.entity_steps[e], u32::from(touched));
        if !touched {
            assert!(state.entity_m.row(e).iter().chain(state.entity_v.row(e)).all(|&v| v.to_bits() == 0));
        }
    }
    for r in 0..5 {
        let touched = r == 1 || r == 4;
        assert_eq!(after.relations.row(r) != before.relations.row(r), touched, "relation {r}");
        assert_eq!(state.relation_steps[r], u32::from(touched));
    }
}

#[test]
fn transient_bytes_do_not_depend_on_entity_count() {
    let bytes = |n_e: usize| {
        let mut trainer = Trainer::<f32>::new(n_e, 2, small_config()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut batch = Batch::default();
        for _ in 0..100 {
            let t = Triple {
                subject: EntityId(rng.random_range(0..50)),
                relation: RelationId(rng.random_range(0..2)),
                object: EntityId(rng.random_range(0..50)),
            };
            batch.push(t, f64::from(u8::from(rng.random_bool(0.2))));
        }
        trainer.step(&batch, 0.01).unwrap().transient_bytes
    };
    let base = bytes(100);
    assert_eq!(bytes(200), base);
    assert_eq!(bytes(100_000), base);
}

#[test]
fn shared_row_update_follows_batch_loss_gradient() {
    // Entity 7 is the subject of entry 0 and the object of entry 3. The
    // accumulated row must equal the finite-difference gradient of the
    // batch loss with respect to that row.
    let mut batch = Batch::default();
    batch.push(Triple::new(7, 0, 2), 1.0);
    batch.push(Triple::new(1, 1, 4), 0.0);
    batch.push(Triple::new(5, 0, 6), 1.0);
    batch.push(Triple::new(3, 1, 7), 0.0);
    let model = FactorModel::<f64>::random_normal(10, 2, 5, 0.7, &mut ChaCha8Rng::seed_from_u64(17));
    let (g_a, g_b, ent_rows, _) = oracle::batched_gradient(&batch, &model, LossFamily::Bernoulli);
    let (f_a, f_b) = oracle::finite_difference_gradient(&batch, &model, LossFamily::Bernoulli, 1e-6);
    assert_eq!(ent_rows, vec![1, 2, 3, 4, 5, 6, 7]);
    assert!(oracle::max_relative_error(&g_a, &f_a, 1e-6) < 1e-6);
    assert!(oracle::max_relative_error(&g_b, &f_b, 1e-6) < 1e-6);
    assert!(g_a.row(7).iter().all(|v| *v != 0.0));
}

#[test]
fn seeded_runs_are_bitwise_identical() {
    let g = common::toy_graph(2);
    let config = common::toy_config(3);
    let a = train::<f32>(&g.train, &TrainConfig { precision: Precision::F32, ..config.clone() }, &mut ()).unwrap();
    let b = train::<f32>(&g.train, &TrainConfig { precision: Precision::F32, ..config.clone() }, &mut ()).unwrap();
    let bits = |m: &FactorModel<f32>| m.entities.as_slice().iter().chain(m.relations.as_slice()).map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    let other = train::<f32>(&g.train, &TrainConfig { seed: config.seed + 1, ..config }, &mut ()).unwrap();
    assert_ne!(bits(&a), bits(&other));
}

#[test]
fn parallel_mode_trains_to_comparable_loss() {
    let g = common::toy_graph(4);
    let mut last = [0.0; 2];
    for (i, deterministic) in [true, false].into_iter().enumerate() {
        let config = TrainConfig { deterministic, ..common::toy_config(5) };
        let mut observer = |t: &EpochTelemetry, _: &FactorModel<f64>| {
            last[i] = t.mean_loss;
            Ok(())
        };
        train::<f64>(&g.train, &config, &mut observer).unwrap();
    }
    assert!((last[0] - last[1]).abs() < 1e-6 * last[0], "{last:?}");
}
