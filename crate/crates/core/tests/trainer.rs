mod common;

use itemfm_core::cooc::{CoocMatrix, WindowConfig};
use itemfm_core::embed::{compose_final_vectors, cosine, ComposeMode};
use itemfm_core::fm::{FeatureSpace, FmParams};
use itemfm_core::ingest::PositiveInteraction;
use itemfm_core::trainer::{
    instance_objective, make_negative_sampler, objective_value, sgd_step, train, AdaGradState, Loss, PositiveWeight,
    TrainConfig, Trainer,
};
use rand::Rng;

fn small_matrix(seed: u64) -> CoocMatrix {
    let corpus = common::random_corpus(&mut common::rng(seed), 40, 12, 15);
    CoocMatrix::build(&corpus, &WindowConfig::default()).unwrap()
}

/// Users listen inside one of two disjoint groups of tracks.
fn two_cluster_matrix() -> CoocMatrix {
    let mut rng = common::rng(21);
    let mut its = Vec::new();
    for u in 0..200 {
        let group = u % 2;
        let mut tracks: Vec<usize> = (0..10).collect();
        for i in 0..6 {
            let j = rng.gen_range(i..10);
            tracks.swap(i, j);
        }
        for (k, t) in tracks[..6].iter().enumerate() {
            its.push(PositiveInteraction {
                user_id: format!("u{u:03}"),
                track_id: format!("g{group}-t{t}"),
                first_timestamp: k as i64,
            });
        }
    }
    CoocMatrix::build(&its, &WindowConfig::default()).unwrap()
}

fn total_variation(cooc: &CoocMatrix, alpha: f64, draws: usize) -> f64 {
    let mut sampler = make_negative_sampler(cooc, alpha, 3).unwrap();
    let mut hits = vec![0usize; cooc.num_tracks()];
    for _ in 0..draws {
        hits[sampler.sample() as usize] += 1;
    }
    let weights: Vec<f64> = cooc.track_counts().iter().map(|&c| if c > 0.0 { c.powf(alpha) } else { 0.0 }).collect();
    let z: f64 = weights.iter().sum();
    let mut tv = 0.0;
    for (t, w) in weights.iter().enumerate() {
        let p = w / z;
        assert!((sampler.probability(t as u32) - p).abs() < 1e-12);
        tv += (hits[t] as f64 / draws as f64 - p).abs();
    }
    tv / 2.0
}

#[test]
fn negative_sampler_matches_smoothed_counts() {
    let cooc = small_matrix(1);
    for alpha in [0.0, 0.75, 1.0] {
        let tv = total_variation(&cooc, alpha, 1_000_000);
        assert!(tv < 0.01, "alpha {alpha}: tv {tv}");
    }
}

#[test]
fn sampler_alpha_extremes() {
    let cooc = small_matrix(2);
    let s0 = make_negative_sampler(&cooc, 0.0, 0).unwrap();
    let n = s0.support().len() as f64;
    for &t in s0.support() {
        assert!((s0.probability(t) - 1.0 / n).abs() < 1e-12);
    }
    let s1 = make_negative_sampler(&cooc, 1.0, 0).unwrap();
    let z: f64 = cooc.track_counts().iter().sum();
    for &t in s1.support() {
        assert!((s1.probability(t) - cooc.track_counts()[t as usize] / z).abs() < 1e-12);
    }
}

#[test]
fn adagrad_accumulators_never_decrease() {
    let mut rng = common::rng(4);
    let cfg = TrainConfig { dim: 4, lambda_vector: 0.01, lambda_bias: 0.01, ..TrainConfig::default() };
    let mut params = FmParams::init(12, 4, 1);
    let mut state = AdaGradState::new(12);
    for _ in 0..500 {
        let a = rng.gen_range(0..12);
        let b = (a + rng.gen_range(1..12)) % 12;
        let before: Vec<(f64, f64)> = (0..12).map(|s| (state.bias_accumulator(s), state.vector_accumulator(s))).collect();
        let y = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        sgd_step(&[a, b], y, 1.0, &mut params, &mut state, &cfg).unwrap();
        for (s, (gw, gv)) in before.into_iter().enumerate() {
            assert!(state.bias_accumulator(s) >= gw);
            assert!(state.vector_accumulator(s) >= gv);
        }
    }
}

#[test]
fn small_step_decreases_instance_objective() {
    let mut rng = common::rng(5);
    for loss in [Loss::Logistic, Loss::Squared] {
        let cfg = TrainConfig { loss, dim: 6, learning_rate: 1e-4, lambda_vector: 0.05, lambda_bias: 0.05, ..TrainConfig::default() };
        for _ in 0..50 {
            let mut params = FmParams::from_raw(6, common::random_vec(&mut rng, 10, 1.0), common::random_vec(&mut rng, 60, 1.0)).unwrap();
            let mut state = AdaGradState::new(10);
            let slots = [rng.gen_range(0..5), rng.gen_range(5..10)];
            let y = if loss == Loss::Logistic { 1.0 } else { 3.0 };
            let before = instance_objective(&slots, y, 1.5, &params, &cfg);
            let reported = sgd_step(&slots, y, 1.5, &mut params, &mut state, &cfg).unwrap();
            assert!((reported - before).abs() < 1e-12);
            assert!(instance_objective(&slots, y, 1.5, &params, &cfg) < before);
        }
    }
}

#[test]
fn training_is_deterministic() {
    let cooc = small_matrix(6);
    let space = FeatureSpace::tracks_only(cooc.num_tracks());
    let cfg = TrainConfig { dim: 8, epochs: 3, seed: 9, ..TrainConfig::default() };
    let a = train(&cooc, &space, &cfg).unwrap();
    assert_eq!(a, train(&cooc, &space, &cfg).unwrap());
    let b = train(&cooc, &space, &TrainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.params, b.params);
}

#[test]
fn trainer_continues_where_train_stops() {
    let cooc = small_matrix(7);
    let space = FeatureSpace::tracks_only(cooc.num_tracks());
    let cfg = TrainConfig { dim: 4, epochs: 2, seed: 1, ..TrainConfig::default() };
    let whole = train(&cooc, &space, &cfg).unwrap();
    let mut params = FmParams::init(space.num_slots(), 4, 1);
    let mut state = AdaGradState::new(space.num_slots());
    let mut trainer = Trainer::new(&cooc, &space, cfg).unwrap();
    trainer.train_epoch(&mut params, &mut state).unwrap();
    trainer.train_epoch(&mut params, &mut state).unwrap();
    assert_eq!(params, whole.params);
    assert_eq!(trainer.epochs_done(), 2);
}

#[test]
fn vector_penalty_shrinks_parameters() {
    let cooc = small_matrix(8);
    let space = FeatureSpace::tracks_only(cooc.num_tracks());
    let norms: Vec<f64> = [0.0, 0.01, 0.1]
        .iter()
        .map(|&l| {
            let cfg = TrainConfig { dim: 8, epochs: 5, lambda_vector: l, learning_rate: 0.1, ..TrainConfig::default() };
            train(&cooc, &space, &cfg).unwrap().params.vector_sq_norm()
        })
        .collect();
    assert!(norms[0] > norms[1] && norms[1] > norms[2], "{norms:?}");
}

#[test]
fn two_clusters_separate() {
    let cooc = two_cluster_matrix();
    let space = FeatureSpace::tracks_only(cooc.num_tracks());
    let cfg = TrainConfig { dim: 8, epochs: 10, learning_rate: 0.2, seed: 2, ..TrainConfig::default() };
    let out = train(&cooc, &space, &cfg).unwrap();
    let emb = compose_final_vectors(&out.params, &space, cooc.vocab(), ComposeMode::TrackOnly).unwrap();
    let (mut within, mut nw, mut across, mut na) = (0.0, 0, 0.0, 0);
    for a in 0..emb.len() as u32 {
        for b in a + 1..emb.len() as u32 {
            let c = cosine(emb.vector(a), emb.vector(b)).unwrap();
            if emb.vocab().id(a)[..2] == emb.vocab().id(b)[..2] {
                within += c;
                nw += 1;
            } else {
                across += c;
                na += 1;
            }
        }
    }
    let (within, across) = (within / nw as f64, across / na as f64);
    assert!(within > across + 0.5, "within {within} across {across}");
}

#[test]
fn objective_falls_over_first_epochs() {
    let cooc = two_cluster_matrix();
    let space = FeatureSpace::tracks_only(cooc.num_tracks());
    for loss in [Loss::Logistic, Loss::Squared] {
        let cfg = TrainConfig { loss, dim: 8, seed: 3, learning_rate: 0.1, positive_weight: PositiveWeight::CoocWeight, ..TrainConfig::default() };
        let mut params = FmParams::init(space.num_slots(), 8, 3);
        let mut state = AdaGradState::new(space.num_slots());
        let mut trainer = Trainer::new(&cooc, &space, cfg.clone()).unwrap();
        let mut last = objective_value(&cooc, &space, &params, &cfg).unwrap();
        for _ in 0..5 {
            trainer.train_epoch(&mut params, &mut state).unwrap();
            let now = objective_value(&cooc, &space, &params, &cfg).unwrap();
            assert!(now < last, "{loss:?}: {now} >= {last}");
            last = now;
        }
    }
}

#[test]
fn rejects_mismatched_space() {
    let cooc = small_matrix(10);
    let space = FeatureSpace::tracks_only(cooc.num_tracks() + 1);
    assert!(train(&cooc, &space, &TrainConfig { dim: 4, ..TrainConfig::default() }).is_err());
}

#[test]
fn empty_matrix() {
    let empty = CoocMatrix::default();
    let space = FeatureSpace::tracks_only(0);
    assert!(make_negative_sampler(&empty, 0.75, 0).is_err());
    let params = FmParams::zeros(0, 4);
    let cfg = TrainConfig { dim: 4, ..TrainConfig::default() };
    assert_eq!(objective_value(&empty, &space, &params, &cfg).unwrap(), 0.0);
}

#[test]
fn zero_epochs_keep_initial_parameters() {
    let cooc = small_matrix(11);
    let space = FeatureSpace::tracks_only(cooc.num_tracks());
    let out = train(&cooc, &space, &TrainConfig { dim: 4, epochs: 0, seed: 4, ..TrainConfig::default() }).unwrap();
    assert_eq!(out.params, FmParams::init(space.num_slots(), 4, 4));
}

#[test]
fn single_pair_regression_reaches_log_target() {
    let its: Vec<PositiveInteraction> = (0..3)
        .flat_map(|u| {
            ["a", "b"].into_iter().enumerate().map(move |(k, t)| PositiveInteraction {
                user_id: format!("u{u}"),
                track_id: t.into(),
                first_timestamp: k as i64,
            })
        })
        .collect();
    let cooc = CoocMatrix::build(&its, &WindowConfig::default()).unwrap();
    assert_eq!(cooc.weight_by_id("a", "b"), 6.0);
    let space = FeatureSpace::tracks_only(2);
    let cfg = TrainConfig { loss: Loss::Squared, dim: 4, epochs: 3000, learning_rate: 0.1, ..TrainConfig::default() };
    let out = train(&cooc, &space, &cfg).unwrap();
    for (t, c) in [(0, 1), (1, 0)] {
        let y = itemfm_core::fm::predict(&space.encode_instance(t, c, false).unwrap(), &out.params);
        assert!((y - 6f64.log2()).abs() < 1e-3, "{y}");
    }
}
