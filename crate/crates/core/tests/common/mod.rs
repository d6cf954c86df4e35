//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use kgcp_core::{Precision, TrainConfig, TripleStore};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TOY_ENTITIES: usize = 100;
pub const TOY_RELATIONS: usize = 4;

/// Entities sit on a 10 × 10 grid: cluster `e / 10`, position `e % 10`.
///
/// * 0 `same_cluster`:  same cluster, different position
/// * 1 `same_position`: same position, different cluster
/// * 2 `mirror`:        clusters `c` and `c + 5 (mod 10)`, same position
/// * 3 `linked`:        clusters `c` and `c + 5 (mod 10)`, any position —
///   the composition of `same_cluster` and `mirror`
///
/// Every relation is symmetric. Ten percent of the unordered pairs, with
/// both directions, are held out as the test split.
pub struct ToyGraph {
    pub all: TripleStore,
    pub train: TripleStore,
    pub test: TripleStore,
}

pub fn toy_graph(seed: u64) -> ToyGraph {
    let cluster = |e: u32| e / 10;
    let pos = |e: u32| e % 10;
    let mirrored = |a: u32, b: u32| (cluster(a) + 5) % 10 == cluster(b);
    let mut pairs: Vec<(u32, u32, u32)> = Vec::new();
    for s in 0..TOY_ENTITIES as u32 {
        for o in (s + 1)..TOY_ENTITIES as u32 {
            if cluster(s) == cluster(o) {
                pairs.push((s, 0, o));
            }
            if pos(s) == pos(o) {
                pairs.push((s, 1, o));
            }
            if mirrored(s, o) && pos(s) == pos(o) {
                pairs.push((s, 2, o));
            }
            if mirrored(s, o) {
                pairs.push((s, 3, o));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    let n_test = pairs.len() / 10;
    let both = |ps: &[(u32, u32, u32)]| -> Vec<(u32, u32, u32)> {
        ps.iter().flat_map(|&(s, r, o)| [(s, r, o), (o, r, s)]).collect()
    };
    let build = |raw: &[(u32, u32, u32)]| TripleStore::build(raw, TOY_ENTITIES, TOY_RELATIONS).unwrap();
    ToyGraph {
        all: build(&both(&pairs)),
        test: build(&both(&pairs[..n_test])),
        train: build(&both(&pairs[n_test..])),
    }
}

/// Small-graph training settings: rank 16, no weight decay.
pub fn toy_config(n_epochs: usize) -> TrainConfig {
    TrainConfig {
        rank: 16,
        learning_rate: 0.005,
        batch_size: 64,
        n_negatives: 6,
        l2_coeff: 0.0,
        lr_decay_step: 50,
        lr_decay_gamma: 0.5,
        n_epochs,
        seed: 7,
        init_scale: 0.1,
        precision: Precision::F64,
        deterministic: true,
        ..TrainConfig::default()
    }
}
