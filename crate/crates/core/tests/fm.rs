mod common;

use std::time::Instant;

use itemfm_core::fm::{self, FeatureSpace, FmParams};
use itemfm_core::trainer::{instance_gradient, instance_objective, Loss, TrainConfig};
use itemfm_core::Vocab;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

/// Dense O(n^2) evaluation over the full design vector.
fn predict_dense(slots: &[usize], params: &FmParams) -> f64 {
    let n = params.num_slots();
    let mut x = vec![0.0; n];
    for &s in slots {
        x[s] = 1.0;
    }
    let mut y = 0.0;
    for i in 0..n {
        y += params.bias(i) * x[i];
        for j in i + 1..n {
            let vv: f64 = params.vector(i).iter().zip(params.vector(j)).map(|(a, b)| a * b).sum();
            y += vv * x[i] * x[j];
        }
    }
    y
}

/// The usual linear-time rewrite: ½ Σ_f [(Σ_i v_if)² − Σ_i v_if²].
fn predict_linear(slots: &[usize], params: &FmParams) -> f64 {
    let bias: f64 = slots.iter().map(|&s| params.bias(s)).sum();
    let mut pair = 0.0;
    for f in 0..params.dim() {
        let s: f64 = slots.iter().map(|&i| params.vector(i)[f]).sum();
        let sq: f64 = slots.iter().map(|&i| params.vector(i)[f].powi(2)).sum();
        pair += 0.5 * (s * s - sq);
    }
    bias + pair
}

fn random_params(rng: &mut rand_chacha::ChaCha8Rng, n: usize, k: usize) -> FmParams {
    FmParams::from_raw(k, common::random_vec(rng, n, 1.0), common::random_vec(rng, n * k, 1.0)).unwrap()
}

fn random_slots(rng: &mut rand_chacha::ChaCha8Rng, n: usize, max_active: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(rng);
    all.truncate(rng.gen_range(1..=max_active.min(n)));
    all
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let start = Instant::now();
    let mut rng = common::rng(11);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let k = rng.gen_range(1..=8);
        let n = rng.gen_range(2..=12);
        let slots = random_slots(&mut rng, n, 5);
        let mut params = random_params(&mut rng, n, k);
        let cfg = TrainConfig {
            loss: if case % 2 == 0 { Loss::Logistic } else { Loss::Squared },
            lambda_bias: rng.gen_range(0.0..0.1),
            lambda_vector: rng.gen_range(0.0..0.1),
            ..TrainConfig::default()
        };
        let y = if cfg.loss == Loss::Logistic { if rng.gen_bool(0.5) { 1.0 } else { -1.0 } } else { rng.gen_range(0.0..4.0) };
        let p = rng.gen_range(0.5..3.0);
        let (d_w, d_v) = instance_gradient(&slots, y, p, &params, &cfg);
        for (a, &s) in slots.iter().enumerate() {
            let w0 = params.bias(s);
            *params.bias_mut(s) = w0 + h;
            let up = instance_objective(&slots, y, p, &params, &cfg);
            *params.bias_mut(s) = w0 - h;
            let down = instance_objective(&slots, y, p, &params, &cfg);
            *params.bias_mut(s) = w0;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max(rel_err(d_w[a], fd));
            for f in 0..k {
                let x0 = params.vector(s)[f];
                params.vector_mut(s)[f] = x0 + h;
                let up = instance_objective(&slots, y, p, &params, &cfg);
                params.vector_mut(s)[f] = x0 - h;
                let down = instance_objective(&slots, y, p, &params, &cfg);
                params.vector_mut(s)[f] = x0;
                let fd = (up - down) / (2.0 * h);
                worst = worst.max(rel_err(d_v[a * k + f], fd));
            }
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst:e}");
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn prediction_gradient_is_sum_of_other_vectors() {
    let mut rng = common::rng(12);
    for _ in 0..50 {
        let params = random_params(&mut rng, 10, 4);
        let slots = random_slots(&mut rng, 10, 5);
        let g = fm::gradient(&slots, &params);
        for (a, _) in slots.iter().enumerate() {
            for f in 0..4 {
                let expected: f64 =
                    slots.iter().enumerate().filter(|(b, _)| *b != a).map(|(_, &j)| params.vector(j)[f]).sum();
                assert!((g.d_vector(a)[f] - expected).abs() < 1e-12);
            }
            assert_eq!(g.d_bias(a), 1.0);
        }
    }
}

#[test]
fn tracks_only_space_reduces_to_pair_score() {
    let mut rng = common::rng(13);
    let space = FeatureSpace::tracks_only(6);
    let params = random_params(&mut rng, space.num_slots(), 3);
    for t in 0..6 {
        for c in 0..6 {
            let slots = space.encode_instance(t, c, true).unwrap();
            assert_eq!(slots, vec![t, 6 + c]);
            let dot: f64 = params.vector(t).iter().zip(params.vector(6 + c)).map(|(a, b)| a * b).sum();
            let expected = params.bias(t) + params.bias(6 + c) + dot;
            assert!((fm::predict(&slots, &params) - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn side_features_follow_the_track() {
    let tracks: Vocab = ["a", "b", "c"].into_iter().collect();
    let space = FeatureSpace::from_pairs(&tracks, [("a", "x"), ("c", "y"), ("c", "x")]);
    assert_eq!(space.num_slots(), 8);
    assert_eq!(space.encode_instance(2, 0, false).unwrap(), vec![2, 3, 7, 6]);
    assert_eq!(space.encode_instance(2, 0, true).unwrap(), vec![2, 3, 7, 6]);
    assert_eq!(space.encode_instance(1, 0, true).unwrap(), vec![1, 3, 6]);
    assert!(space.encode_instance(3, 0, false).is_err());
}

#[test]
fn init_is_seeded_and_bounded() {
    let a = FmParams::init(20, 8, 5);
    assert_eq!(a, FmParams::init(20, 8, 5));
    assert_ne!(a, FmParams::init(20, 8, 6));
    assert!(a.biases().iter().all(|&w| w == 0.0));
    assert!(a.vectors().iter().all(|x| x.abs() <= 0.5 / 8.0));
    assert_eq!(a.vectors().len(), 20 * 8);
}

proptest! {
    #[test]
    fn predict_matches_dense_and_linear_forms(seed in any::<u64>(), n in 2usize..15, k in 1usize..9) {
        let mut rng = common::rng(seed);
        let params = random_params(&mut rng, n, k);
        let slots = random_slots(&mut rng, n, 6);
        let y = fm::predict(&slots, &params);
        prop_assert!((y - predict_dense(&slots, &params)).abs() < 1e-10);
        prop_assert!((y - predict_linear(&slots, &params)).abs() < 1e-10);
    }

    #[test]
    fn predict_ignores_slot_order(seed in any::<u64>(), n in 2usize..15) {
        let mut rng = common::rng(seed);
        let params = random_params(&mut rng, n, 4);
        let slots = random_slots(&mut rng, n, 6);
        let mut shuffled = slots.clone();
        shuffled.shuffle(&mut rng);
        prop_assert!((fm::predict(&slots, &params) - fm::predict(&shuffled, &params)).abs() < 1e-12);
    }
}
