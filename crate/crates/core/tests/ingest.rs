mod common;

use std::collections::BTreeSet;

use itemfm_core::ingest::{
    apply_count_floors, ingest, sample_per_item, EventKind, IngestConfig, PositiveInteraction, RawEvent,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn pi(u: usize, t: usize) -> PositiveInteraction {
    PositiveInteraction { user_id: format!("u{u}"), track_id: format!("t{t}"), first_timestamp: 0 }
}

fn floors(users: usize, tracks: usize) -> IngestConfig {
    IngestConfig { min_items_per_user: users, min_users_per_item: tracks, ..IngestConfig::default() }
}

fn meets_floors(set: &[&PositiveInteraction], cfg: &IngestConfig) -> bool {
    let mut per_user = std::collections::BTreeMap::<&str, usize>::new();
    let mut per_track = std::collections::BTreeMap::<&str, usize>::new();
    for it in set {
        *per_user.entry(&it.user_id).or_default() += 1;
        *per_track.entry(&it.track_id).or_default() += 1;
    }
    per_user.values().all(|&c| c >= cfg.min_items_per_user)
        && per_track.values().all(|&c| c >= cfg.min_users_per_item)
}

/// Union of every subset that meets both floors, by enumeration. Valid
/// subsets are closed under union, so this is the largest one.
fn largest_valid_subset(all: &[PositiveInteraction], cfg: &IngestConfig) -> BTreeSet<PositiveInteraction> {
    let mut union = BTreeSet::new();
    for mask in 1u32..(1 << all.len()) {
        let subset: Vec<&PositiveInteraction> =
            all.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, it)| it).collect();
        if meets_floors(&subset, cfg) {
            union.extend(subset.into_iter().cloned());
        }
    }
    union
}

fn random_events(seed: u64, users: usize, tracks: usize, per_pair: usize) -> Vec<RawEvent> {
    let mut rng = common::rng(seed);
    let kinds = [EventKind::Play, EventKind::Play, EventKind::Play, EventKind::Like, EventKind::Share];
    let mut out = Vec::new();
    for u in 0..users {
        for t in 0..tracks {
            if !rng.gen_bool(0.6) {
                continue;
            }
            for _ in 0..rng.gen_range(1..=per_pair) {
                let kind = *kinds.choose(&mut rng).unwrap();
                let dur = rng.gen_range(60..3000);
                let listened = if kind == EventKind::Play { rng.gen_range(0..=dur) } else { 0 };
                out.push(RawEvent {
                    user_id: format!("u{u:02}"),
                    track_id: format!("t{t:02}"),
                    kind,
                    timestamp: rng.gen_range(0..10_000),
                    listened_duration: listened,
                    track_duration: if kind == EventKind::Play { dur } else { 0 },
                });
            }
        }
    }
    out
}

#[test]
fn floors_match_enumerated_maximum() {
    let mut rng = common::rng(61);
    for _ in 0..60 {
        let mut all = Vec::new();
        while all.len() < 12 {
            let it = pi(rng.gen_range(0..4), rng.gen_range(0..4));
            if !all.contains(&it) {
                all.push(it);
            }
        }
        for (a, b) in [(1, 1), (2, 2), (3, 2), (2, 3), (3, 3)] {
            let cfg = floors(a, b);
            let got: BTreeSet<_> = apply_count_floors(all.clone(), &cfg).into_iter().collect();
            assert_eq!(got, largest_valid_subset(&all, &cfg), "floors ({a}, {b}) on {all:?}");
        }
    }
}

#[test]
fn floors_cascade() {
    // t0 and t2 have two users each; once they go, every user is left with
    // only t1 and falls under the item floor.
    let all = vec![pi(0, 0), pi(1, 0), pi(0, 1), pi(1, 1), pi(2, 1), pi(2, 2), pi(3, 2)];
    let out = apply_count_floors(all, &floors(2, 3));
    assert!(out.is_empty());
}

#[test]
fn sampling_cap_is_seeded() {
    let all: Vec<_> = (0..50).map(|u| pi(u, u % 2)).collect();
    let cfg = IngestConfig { max_interactions_per_item: 7, ..IngestConfig::default() };
    let a = sample_per_item(all.clone(), &cfg);
    assert_eq!(a.len(), 14);
    let mut reversed = all.clone();
    reversed.reverse();
    assert_eq!(a, sample_per_item(reversed, &cfg));
    let mut differs = false;
    for seed in 1..5 {
        differs |= sample_per_item(all.clone(), &IngestConfig { rng_seed: seed, ..cfg.clone() }) != a;
    }
    assert!(differs);
}

proptest! {
    #[test]
    fn ingest_ignores_event_order(seed in any::<u64>(), shuffle in any::<u64>()) {
        let events = random_events(seed, 12, 10, 3);
        let cfg = IngestConfig { min_items_per_user: 2, min_users_per_item: 2, max_interactions_per_item: 4, ..IngestConfig::default() };
        let a = ingest(events.clone(), &cfg).unwrap();
        let mut shuffled = events;
        shuffled.shuffle(&mut common::rng(shuffle));
        prop_assert_eq!(a, ingest(shuffled, &cfg).unwrap());
    }

    #[test]
    fn ingest_output_meets_floors_and_cap(seed in any::<u64>()) {
        let events = random_events(seed, 15, 12, 4);
        let cfg = IngestConfig { min_items_per_user: 3, min_users_per_item: 2, max_interactions_per_item: 5, ..IngestConfig::default() };
        let out = ingest(events, &cfg).unwrap();
        let floored = apply_count_floors(out.interactions.clone(), &IngestConfig { min_items_per_user: 1, min_users_per_item: 1, ..cfg.clone() });
        prop_assert_eq!(&floored, &out.interactions);
        let mut per_track = std::collections::BTreeMap::<&str, usize>::new();
        for it in &out.interactions {
            *per_track.entry(&it.track_id).or_default() += 1;
        }
        prop_assert!(per_track.values().all(|&c| c <= 5));
        let pairs: BTreeSet<_> = out.interactions.iter().map(|i| (&i.user_id, &i.track_id)).collect();
        prop_assert_eq!(pairs.len(), out.interactions.len());
        let d = &out.diagnostics;
        prop_assert!(d.merged_pairs >= d.positive_pairs && d.positive_pairs >= d.after_floors && d.after_floors >= d.after_sampling);
    }

    #[test]
    fn floors_are_a_fixed_point(seed in any::<u64>(), a in 1usize..5, b in 1usize..5) {
        let mut rng = common::rng(seed);
        let all = common::random_corpus(&mut rng, 20, 8, 15);
        let cfg = floors(a, b);
        let once = apply_count_floors(all, &cfg);
        let refs: Vec<&PositiveInteraction> = once.iter().collect();
        prop_assert!(meets_floors(&refs, &cfg));
        prop_assert_eq!(apply_count_floors(once.clone(), &cfg), once);
    }
}
