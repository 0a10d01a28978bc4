#![allow(dead_code)]

use itemfm_core::ingest::PositiveInteraction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random corpus: `users` sequences of distinct tracks drawn from a pool,
/// grouped by user and sorted by (timestamp, track).
pub fn random_corpus(rng: &mut ChaCha8Rng, users: usize, max_len: usize, pool: usize) -> Vec<PositiveInteraction> {
    let mut out = Vec::new();
    for u in 0..users {
        let len = rng.gen_range(0..=max_len.min(pool));
        let mut tracks: Vec<usize> = (0..pool).collect();
        for i in 0..len {
            let j = rng.gen_range(i..pool);
            tracks.swap(i, j);
        }
        let mut seq: Vec<(i64, String)> =
            tracks[..len].iter().map(|t| (rng.gen_range(0..5_000), format!("t{t:03}"))).collect();
        seq.sort();
        for (ts, track) in seq {
            out.push(PositiveInteraction { user_id: format!("u{u:03}"), track_id: track, first_timestamp: ts });
        }
    }
    out
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}
