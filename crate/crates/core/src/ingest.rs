//! Raw listening events to positive user-track interactions.
//!
//! All events a user produced on one track are merged into a single
//! decision. A merged pair is positive when it carries a strong signal (like,
//! share, playlist addition, other explicit positive) or at least two full
//! listens. Positive pairs then go through iterated per-user / per-track
//! count floors and a seeded per-track sampling cap.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::index;
use thiserror::Error;

const SAMPLE_STREAM: u64 = 0x1e57;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("malformed event: {0}")]
    Malformed(&'static str),
    #[error("merge called with events from more than one (user, track) pair")]
    MixedPair,
    #[error("unknown event kind {0:?}")]
    UnknownKind(String),
    #[error("invalid ingest config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Play,
    Like,
    Share,
    PlaylistAdd,
    /// Any other explicit positive action (comment, repost, ...).
    OtherPositive,
}

impl EventKind {
    /// True for actions that are positive on their own.
    pub fn is_strong_positive(self) -> bool {
        !matches!(self, EventKind::Play)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Play => "play",
            EventKind::Like => "like",
            EventKind::Share => "share",
            EventKind::PlaylistAdd => "playlist_add",
            EventKind::OtherPositive => "other_positive",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "play" => EventKind::Play,
            "like" => EventKind::Like,
            "share" => EventKind::Share,
            "playlist_add" | "playlist-add" => EventKind::PlaylistAdd,
            "other_positive" | "other-explicit-positive" | "comment" => EventKind::OtherPositive,
            other => return Err(IngestError::UnknownKind(other.into())),
        })
    }
}

/// One user action on one track. Times and durations are in seconds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawEvent {
    pub user_id: String,
    pub track_id: String,
    pub kind: EventKind,
    pub timestamp: i64,
    /// Zero for non-play events.
    pub listened_duration: i64,
    /// Must be positive for play events.
    pub track_duration: i64,
}

impl RawEvent {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.timestamp < 0 {
            return Err(IngestError::Malformed("negative timestamp"));
        }
        if self.listened_duration < 0 {
            return Err(IngestError::Malformed("negative listened duration"));
        }
        if self.kind == EventKind::Play {
            if self.track_duration <= 0 {
                return Err(IngestError::Malformed("play without positive track duration"));
            }
            if self.listened_duration > self.track_duration {
                return Err(IngestError::Malformed("listened longer than the track"));
            }
        }
        Ok(())
    }
}

/// A (user, track) pair that survived the positivity rules.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PositiveInteraction {
    pub user_id: String,
    pub track_id: String,
    /// Earliest positive-evidence event; the interaction start time.
    pub first_timestamp: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestConfig {
    pub min_items_per_user: usize,
    pub min_users_per_item: usize,
    pub max_interactions_per_item: usize,
    /// A listen is full when it strictly exceeds this fraction of the track.
    pub full_listen_fraction: f64,
    /// ... or when it lasts at least this many seconds.
    pub full_listen_absolute: i64,
    pub rng_seed: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            min_items_per_user: 5,
            min_users_per_item: 5,
            max_interactions_per_item: 10_000,
            full_listen_fraction: 0.5,
            full_listen_absolute: 1200,
            rng_seed: 0,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.min_items_per_user == 0 || self.min_users_per_item == 0 {
            return Err(IngestError::InvalidConfig("count floors must be at least 1"));
        }
        if self.max_interactions_per_item == 0 {
            return Err(IngestError::InvalidConfig("max_interactions_per_item must be at least 1"));
        }
        if !(self.full_listen_fraction > 0.0 && self.full_listen_fraction <= 1.0) {
            return Err(IngestError::InvalidConfig("full_listen_fraction must be in (0, 1]"));
        }
        if self.full_listen_absolute <= 0 {
            return Err(IngestError::InvalidConfig("full_listen_absolute must be positive"));
        }
        Ok(())
    }
}

pub fn is_full_listen(listened: i64, track_duration: i64, cfg: &IngestConfig) -> Result<bool, IngestError> {
    if track_duration <= 0 {
        return Err(IngestError::Malformed("play without positive track duration"));
    }
    if listened < 0 || listened > track_duration {
        return Err(IngestError::Malformed("listened duration outside [0, track duration]"));
    }
    Ok(listened as f64 > cfg.full_listen_fraction * track_duration as f64
        || listened >= cfg.full_listen_absolute)
}

/// Merges every event of one (user, track) pair into at most one positive
/// interaction. Empty input yields `None`.
pub fn merge_user_track_events(
    events: &[RawEvent],
    cfg: &IngestConfig,
) -> Result<Option<PositiveInteraction>, IngestError> {
    let Some(first) = events.first() else {
        return Ok(None);
    };
    let mut strong_ts: Option<i64> = None;
    let mut full_listens = 0usize;
    let mut full_ts: Option<i64> = None;
    for e in events {
        if e.user_id != first.user_id || e.track_id != first.track_id {
            return Err(IngestError::MixedPair);
        }
        e.validate()?;
        if e.kind.is_strong_positive() {
            strong_ts = Some(strong_ts.map_or(e.timestamp, |t| t.min(e.timestamp)));
        } else if is_full_listen(e.listened_duration, e.track_duration, cfg)? {
            full_listens += 1;
            full_ts = Some(full_ts.map_or(e.timestamp, |t| t.min(e.timestamp)));
        }
    }
    let first_timestamp = match (strong_ts, full_listens >= 2) {
        (Some(s), _) => Some(full_ts.map_or(s, |f| s.min(f))),
        (None, true) => full_ts,
        (None, false) => None,
    };
    Ok(first_timestamp.map(|first_timestamp| PositiveInteraction {
        user_id: first.user_id.clone(),
        track_id: first.track_id.clone(),
        first_timestamp,
    }))
}

/// Drops users and tracks under the count floors, repeating until nothing
/// else falls below a floor. The result is the largest subset where every
/// user and every track meet both floors.
pub fn apply_count_floors(mut interactions: Vec<PositiveInteraction>, cfg: &IngestConfig) -> Vec<PositiveInteraction> {
    loop {
        let mut per_user: BTreeMap<&str, usize> = BTreeMap::new();
        let mut per_track: BTreeMap<&str, usize> = BTreeMap::new();
        for it in &interactions {
            *per_user.entry(&it.user_id).or_default() += 1;
            *per_track.entry(&it.track_id).or_default() += 1;
        }
        let keep: Vec<bool> = interactions
            .iter()
            .map(|it| {
                per_user[it.user_id.as_str()] >= cfg.min_items_per_user
                    && per_track[it.track_id.as_str()] >= cfg.min_users_per_item
            })
            .collect();
        if keep.iter().all(|&k| k) {
            return interactions;
        }
        let mut flags = keep.into_iter();
        interactions.retain(|_| flags.next().unwrap_or(false));
    }
}

/// Caps every track at `max_interactions_per_item` interactions by uniform
/// sampling without replacement. The result is in canonical
/// (track, user, timestamp) order and depends only on the input set and the
/// seed, not on the input order.
pub fn sample_per_item(mut interactions: Vec<PositiveInteraction>, cfg: &IngestConfig) -> Vec<PositiveInteraction> {
    interactions.sort_by(|a, b| {
        (&a.track_id, &a.user_id, a.first_timestamp).cmp(&(&b.track_id, &b.user_id, b.first_timestamp))
    });
    let cap = cfg.max_interactions_per_item;
    let mut rng = crate::seeded_rng(cfg.rng_seed, SAMPLE_STREAM);
    let mut out = Vec::with_capacity(interactions.len());
    let mut rest = interactions.as_slice();
    while let Some(head) = rest.first() {
        let run = rest.iter().take_while(|it| it.track_id == head.track_id).count();
        let (group, tail) = rest.split_at(run);
        if run > cap {
            let mut picked = index::sample(&mut rng, run, cap).into_vec();
            picked.sort_unstable();
            out.extend(picked.into_iter().map(|i| group[i].clone()));
        } else {
            out.extend_from_slice(group);
        }
        rest = tail;
    }
    out
}

/// Counters describing what the pipeline dropped and why.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestDiagnostics {
    pub events_read: usize,
    pub malformed_events: usize,
    pub merged_pairs: usize,
    pub positive_pairs: usize,
    pub after_floors: usize,
    pub after_sampling: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestOutput {
    /// Sorted by (user, first_timestamp, track).
    pub interactions: Vec<PositiveInteraction>,
    pub diagnostics: IngestDiagnostics,
}

/// Full ingest pipeline: merge, count floors, per-item sampling. Malformed
/// events are skipped and counted.
pub fn ingest<I>(events: I, cfg: &IngestConfig) -> Result<IngestOutput, IngestError>
where
    I: IntoIterator<Item = RawEvent>,
{
    cfg.validate()?;
    let mut diagnostics = IngestDiagnostics::default();
    let mut grouped: BTreeMap<(String, String), Vec<RawEvent>> = BTreeMap::new();
    for e in events {
        diagnostics.events_read += 1;
        if e.validate().is_err() {
            diagnostics.malformed_events += 1;
            continue;
        }
        grouped.entry((e.user_id.clone(), e.track_id.clone())).or_default().push(e);
    }
    diagnostics.merged_pairs = grouped.len();
    let mut positives = Vec::new();
    for events in grouped.values() {
        if let Some(p) = merge_user_track_events(events, cfg)? {
            positives.push(p);
        }
    }
    diagnostics.positive_pairs = positives.len();
    let floored = apply_count_floors(positives, cfg);
    diagnostics.after_floors = floored.len();
    let mut sampled = sample_per_item(floored, cfg);
    diagnostics.after_sampling = sampled.len();
    sort_by_user_time(&mut sampled);
    Ok(IngestOutput { interactions: sampled, diagnostics })
}

/// Orders interactions by (user, first_timestamp, track): grouped by user and
/// ready for windowing.
pub fn sort_by_user_time(interactions: &mut [PositiveInteraction]) {
    interactions.sort_by(|a, b| {
        (&a.user_id, a.first_timestamp, &a.track_id).cmp(&(&b.user_id, b.first_timestamp, &b.track_id))
    });
}

/// Distinct user ids in the set.
pub fn distinct_users(interactions: &[PositiveInteraction]) -> BTreeSet<&str> {
    interactions.iter().map(|i| i.user_id.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;

    fn ev(user: &str, track: &str, kind: EventKind, ts: i64, listened: i64, dur: i64) -> RawEvent {
        RawEvent {
            user_id: user.to_string(),
            track_id: track.to_string(),
            kind,
            timestamp: ts,
            listened_duration: listened,
            track_duration: dur,
        }
    }

    fn pi(user: &str, track: &str, ts: i64) -> PositiveInteraction {
        PositiveInteraction { user_id: user.to_string(), track_id: track.to_string(), first_timestamp: ts }
    }

    #[test]
    fn full_listen_rules() {
        let cfg = IngestConfig::default();
        assert!(is_full_listen(180, 240, &cfg).unwrap());
        assert!(!is_full_listen(60, 240, &cfg).unwrap());
        assert!(is_full_listen(1500, 7200, &cfg).unwrap());
        // exactly half is not a majority
        assert!(!is_full_listen(120, 240, &cfg).unwrap());
        assert!(is_full_listen(1200, 7200, &cfg).unwrap());
        assert!(!is_full_listen(1199, 7200, &cfg).unwrap());
    }

    #[test]
    fn full_listen_rejects_bad_durations() {
        let cfg = IngestConfig::default();
        assert!(matches!(is_full_listen(10, 0, &cfg), Err(IngestError::Malformed(_))));
        assert!(matches!(is_full_listen(-1, 100, &cfg), Err(IngestError::Malformed(_))));
        assert!(matches!(is_full_listen(101, 100, &cfg), Err(IngestError::Malformed(_))));
    }

    #[test]
    fn merge_rules() {
        let cfg = IngestConfig::default();
        let like = [ev("u", "t", EventKind::Like, 50, 0, 0)];
        assert_eq!(merge_user_track_events(&like, &cfg).unwrap(), Some(pi("u", "t", 50)));

        let one_listen = [ev("u", "t", EventKind::Play, 10, 200, 240)];
        assert_eq!(merge_user_track_events(&one_listen, &cfg).unwrap(), None);

        let two_listens = [ev("u", "t", EventKind::Play, 30, 200, 240), ev("u", "t", EventKind::Play, 10, 230, 240)];
        assert_eq!(merge_user_track_events(&two_listens, &cfg).unwrap(), Some(pi("u", "t", 10)));

        // one full and one partial listen is not enough
        let partial = [ev("u", "t", EventKind::Play, 10, 200, 240), ev("u", "t", EventKind::Play, 5, 20, 240)];
        assert_eq!(merge_user_track_events(&partial, &cfg).unwrap(), None);

        assert_eq!(merge_user_track_events(&[], &cfg).unwrap(), None);
    }

    #[test]
    fn merge_timestamp_uses_positive_evidence_only() {
        let cfg = IngestConfig::default();
        // the partial listen at t=1 is not evidence
        let events = [
            ev("u", "t", EventKind::Play, 1, 10, 240),
            ev("u", "t", EventKind::Play, 7, 239, 240),
            ev("u", "t", EventKind::Share, 9, 0, 0),
        ];
        assert_eq!(merge_user_track_events(&events, &cfg).unwrap(), Some(pi("u", "t", 7)));
    }

    #[test]
    fn merge_rejects_mixed_pairs() {
        let cfg = IngestConfig::default();
        let events = [ev("u", "t", EventKind::Like, 1, 0, 0), ev("u", "x", EventKind::Like, 2, 0, 0)];
        assert_eq!(merge_user_track_events(&events, &cfg), Err(IngestError::MixedPair));
    }

    #[test]
    fn floors_iterate_to_fixed_point() {
        let cfg = IngestConfig { min_items_per_user: 2, min_users_per_item: 2, ..IngestConfig::default() };
        // every pass exposes a new violation until nothing is left
        let input = [pi("u1", "t1", 0), pi("u1", "t2", 0), pi("u2", "t1", 0), pi("u2", "t3", 0), pi("u3", "t3", 0)];
        let once = apply_count_floors(input.to_vec(), &cfg);
        assert!(once.is_empty(), "{once:?}");

        let dense: Vec<_> = (0..6)
            .flat_map(|u| (0..6).map(move |t| pi(&format!("u{u}"), &format!("t{t}"), 0)))
            .collect();
        let cfg = IngestConfig::default();
        assert_eq!(apply_count_floors(dense.clone(), &cfg), dense);
        assert!(apply_count_floors(Vec::new(), &cfg).is_empty());
    }

    #[test]
    fn floors_drop_small_user() {
        let cfg = IngestConfig::default();
        let mut input: Vec<_> = (0..6)
            .flat_map(|u| (0..5).map(move |t| pi(&format!("u{u}"), &format!("t{t}"), 0)))
            .collect();
        input.extend((0..4).map(|t| pi("small", &format!("t{t}"), 0)));
        let out = apply_count_floors(input, &cfg);
        assert_eq!(out.len(), 30);
        assert!(out.iter().all(|p| p.user_id != "small"));
    }

    #[test]
    fn sampling_caps_each_track() {
        let cfg = IngestConfig { max_interactions_per_item: 10_000, rng_seed: 3, ..IngestConfig::default() };
        let mut input: Vec<_> = (0..12_000).map(|u| pi(&format!("u{u}"), "big", u)).collect();
        input.extend((0..500).map(|u| pi(&format!("u{u}"), "small", u)));
        let out = sample_per_item(input.clone(), &cfg);
        assert_eq!(out.iter().filter(|p| p.track_id == "big").count(), 10_000);
        assert_eq!(out.iter().filter(|p| p.track_id == "small").count(), 500);

        input.reverse();
        assert_eq!(sample_per_item(input, &cfg), out);
    }

    #[test]
    fn malformed_events_are_counted() {
        let cfg = IngestConfig { min_items_per_user: 1, min_users_per_item: 1, ..IngestConfig::default() };
        let events = [
            ev("u", "t", EventKind::Like, 1, 0, 0),
            ev("u", "t", EventKind::Play, 2, 300, 200),
            ev("u", "t", EventKind::Play, -1, 10, 200),
        ];
        let out = ingest(events, &cfg).unwrap();
        assert_eq!(out.diagnostics.malformed_events, 2);
        assert_eq!(out.interactions, [pi("u", "t", 1)]);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("playlist_add".parse::<EventKind>().unwrap(), EventKind::PlaylistAdd);
        assert!("skip".parse::<EventKind>().is_err());
        for k in [EventKind::Play, EventKind::Like, EventKind::Share, EventKind::PlaylistAdd, EventKind::OtherPositive] {
            assert_eq!(k.as_str().parse::<EventKind>().unwrap(), k);
        }
    }
}
