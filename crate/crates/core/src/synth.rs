//! Clustered synthetic listening logs.
//!
//! Tracks are split into clusters with Zipf-like popularity inside each
//! cluster. Inside a cluster the tracks sit on a ring, and a listener walks
//! along it in short popularity-weighted steps, so nearby picks are similar.
//! Every user moves through one or more consecutive clusters over time and
//! leaks to a uniformly random track with a small probability. Some tracks
//! are released late and only have a thin history. Each creator owns a
//! contiguous arc of one ring, which makes the creator an informative side
//! feature. Picked tracks get events that pass the positivity rules; noise
//! events (single and partial listens) must not.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ingest::{EventKind, RawEvent};

const SYNTH_STREAM: u64 = 0x5e4;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub clusters: usize,
    pub tracks_per_cluster: usize,
    pub users: usize,
    /// Probability that a pick comes from a random cluster instead of home.
    pub leak_probability: f64,
    pub creators_per_cluster: usize,
    /// Clusters each user moves through over time. A user starting in
    /// cluster c continues with c + 1, c + 2, ... so neighbouring clusters
    /// share listeners but rarely share a listening session.
    pub clusters_per_user: usize,
    /// Largest ring step between consecutive in-cluster picks; 0 draws
    /// every pick independently by popularity.
    pub walk_step: usize,
    /// Fraction of each cluster's tracks that are released late, at a
    /// uniform time within the last `fresh_window` of the time span. They
    /// cannot be picked before release, which gives them a thin history.
    pub fresh_fraction: f64,
    pub fresh_window: f64,
    pub min_items_per_user: usize,
    pub max_items_per_user: usize,
    /// The r-th most popular track of a cluster has weight `(r + 1)^-exponent`.
    pub popularity_exponent: f64,
    pub start_time: i64,
    /// Interactions are spread uniformly over this many seconds.
    pub time_span: i64,
    /// Expected noise events (rejected by ingest) per picked track.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            clusters: 8,
            tracks_per_cluster: 50,
            users: 2000,
            leak_probability: 0.05,
            creators_per_cluster: 5,
            clusters_per_user: 2,
            walk_step: 3,
            fresh_fraction: 0.15,
            fresh_window: 0.3,
            min_items_per_user: 10,
            max_items_per_user: 30,
            popularity_exponent: 1.0,
            start_time: 1_500_000_000,
            time_span: 60 * 24 * 3600,
            noise_rate: 0.3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub events: Vec<RawEvent>,
    /// `(track_id, creator_id)` for every track.
    pub creators: Vec<(String, String)>,
    /// `(track_id, cluster)` for every track.
    pub clusters: Vec<(String, usize)>,
}

pub fn track_id(cluster: usize, position: usize) -> String {
    format!("c{cluster:02}-t{position:03}")
}

fn creator_id(cluster: usize, creator: usize) -> String {
    format!("c{cluster:02}-a{creator:02}")
}

/// Per-cluster popularity over ring positions.
struct Popularity {
    weight: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Popularity {
    fn new(rng: &mut ChaCha8Rng, per: usize, exponent: f64) -> Self {
        let mut ranks: Vec<usize> = (0..per).collect();
        ranks.shuffle(rng);
        let weight: Vec<f64> = ranks.iter().map(|&r| libm::pow((r + 1) as f64, -exponent)).collect();
        let mut acc = 0.0;
        let cumulative = weight
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self { weight, cumulative }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty cluster");
        let x = rng.gen::<f64>() * total;
        self.cumulative.partition_point(|&v| v <= x).min(self.weight.len() - 1)
    }

    /// Next stop of a walk: a ring neighbour within `max_step` that the
    /// user has not picked yet, chosen by popularity. `None` when all of
    /// them are taken.
    fn step(&self, rng: &mut ChaCha8Rng, from: usize, max_step: usize, taken: impl Fn(usize) -> bool) -> Option<usize> {
        let per = self.weight.len();
        let reach = max_step.min(per / 2);
        let mut options: Vec<(usize, f64)> = Vec::with_capacity(2 * reach);
        for d in 1..=reach {
            for q in [(from + d) % per, (from + per - d) % per] {
                if q != from && !taken(q) && !options.iter().any(|&(o, _)| o == q) {
                    options.push((q, self.weight[q]));
                }
            }
        }
        let total: f64 = options.iter().map(|o| o.1).sum();
        if options.is_empty() {
            return None;
        }
        let mut x = rng.gen::<f64>() * total;
        for &(q, w) in &options {
            if x < w {
                return Some(q);
            }
            x -= w;
        }
        options.last().map(|o| o.0)
    }
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = crate::seeded_rng(cfg.seed, SYNTH_STREAM);
    let per = cfg.tracks_per_cluster.max(1);
    let clusters_n = cfg.clusters.max(1);
    let popularity: Vec<Popularity> =
        (0..clusters_n).map(|_| Popularity::new(&mut rng, per, cfg.popularity_exponent)).collect();

    let span = cfg.time_span.max(1);
    let fresh_per = libm::round(cfg.fresh_fraction.clamp(0.0, 1.0) * per as f64) as usize;
    let window = libm::ceil(cfg.fresh_window.clamp(0.0, 1.0) * span as f64).max(1.0) as i64;
    let release: Vec<Vec<i64>> = (0..clusters_n)
        .map(|_| {
            let mut r = vec![cfg.start_time; per];
            for p in rand::seq::index::sample(&mut rng, per, fresh_per.min(per.saturating_sub(1))) {
                r[p] = cfg.start_time + span - rng.gen_range(0..window);
            }
            r
        })
        .collect();

    let mut creators = Vec::new();
    let mut clusters = Vec::new();
    let creators_per = cfg.creators_per_cluster.clamp(1, per);
    for c in 0..clusters_n {
        for p in 0..per {
            creators.push((track_id(c, p), creator_id(c, p * creators_per / per)));
            clusters.push((track_id(c, p), c));
        }
    }

    let mut events = Vec::new();
    let lo = cfg.min_items_per_user.min(cfg.max_items_per_user);
    let hi = cfg.max_items_per_user.max(lo).min(clusters_n * per);
    for u in 0..cfg.users {
        let user = format!("u{u:05}");
        let wanted = rng.gen_range(lo..=hi);
        let visits = cfg.clusters_per_user.clamp(1, clusters_n);
        let first = rng.gen_range(0..clusters_n);
        let homes: Vec<usize> = (0..visits).map(|i| (first + i) % clusters_n).collect();
        let mut times: Vec<i64> = (0..wanted).map(|_| cfg.start_time + rng.gen_range(0..span)).collect();
        times.sort_unstable();
        let mut picked: Vec<(usize, usize)> = Vec::with_capacity(wanted);
        let mut position: Option<(usize, usize)> = None;
        let mut attempts = 0;
        while picked.len() < wanted && attempts < 50 * wanted {
            attempts += 1;
            let t = times[picked.len()];
            let home = homes[picked.len() * visits / wanted];
            let unavailable = |c: usize, q: usize| release[c][q] > t || picked.contains(&(c, q));
            let pick = if rng.gen_bool(cfg.leak_probability.clamp(0.0, 1.0)) {
                (rng.gen_range(0..clusters_n), rng.gen_range(0..per))
            } else {
                let walked = match position {
                    Some((c, p)) if c == home && cfg.walk_step > 0 => {
                        popularity[home].step(&mut rng, p, cfg.walk_step, |q| unavailable(home, q))
                    }
                    _ => None,
                };
                let p = walked.unwrap_or_else(|| popularity[home].draw(&mut rng));
                position = Some((home, p));
                (home, p)
            };
            if !unavailable(pick.0, pick.1) {
                picked.push(pick);
            }
        }
        for (&(c, p), &t) in picked.iter().zip(&times) {
            push_positive(&mut events, &mut rng, &user, &track_id(c, p), t);
        }
        if cfg.noise_rate > 0.0 {
            let noise = (cfg.noise_rate * picked.len() as f64) as usize;
            for _ in 0..noise {
                let c = rng.gen_range(0..clusters_n);
                let p = rng.gen_range(0..per);
                if picked.contains(&(c, p)) {
                    continue;
                }
                let t = cfg.start_time + rng.gen_range(0..span);
                push_noise(&mut events, &mut rng, &user, &track_id(c, p), t);
            }
        }
    }
    SyntheticCorpus { events, creators, clusters }
}

fn event(user: &str, track: &str, kind: EventKind, ts: i64, listened: i64, duration: i64) -> RawEvent {
    RawEvent {
        user_id: user.into(),
        track_id: track.into(),
        kind,
        timestamp: ts,
        listened_duration: listened,
        track_duration: duration,
    }
}

fn push_positive(events: &mut Vec<RawEvent>, rng: &mut ChaCha8Rng, user: &str, track: &str, t: i64) {
    let duration = rng.gen_range(120..420);
    match rng.gen_range(0..10) {
        0..=3 => {
            events.push(event(user, track, EventKind::Play, t, duration, duration));
            events.push(event(user, track, EventKind::Like, t + 30, 0, 0));
        }
        4..=7 => {
            events.push(event(user, track, EventKind::Play, t, duration, duration));
            let second = rng.gen_range(duration / 2 + 1..=duration);
            events.push(event(user, track, EventKind::Play, t + 3600 + duration, second, duration));
        }
        8 => events.push(event(user, track, EventKind::PlaylistAdd, t, 0, 0)),
        _ => events.push(event(user, track, EventKind::Share, t, 0, 0)),
    }
}

fn push_noise(events: &mut Vec<RawEvent>, rng: &mut ChaCha8Rng, user: &str, track: &str, t: i64) {
    let duration = rng.gen_range(120..420);
    if rng.gen_bool(0.5) {
        // one full listen only
        events.push(event(user, track, EventKind::Play, t, duration, duration));
    } else {
        let short = rng.gen_range(0..=duration / 2);
        events.push(event(user, track, EventKind::Play, t, short, duration));
        events.push(event(user, track, EventKind::Play, t + 60, short, duration));
    }
}
