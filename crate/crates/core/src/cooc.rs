//! Sliding-window track-track co-occurrence counting.
//!
//! The window moves along each user's interactions in start-time order. Every
//! unordered pair of positions inside the window radius adds `w(d)` in both
//! directions, so a single in-range pair contributes `2 w(d)` to the
//! symmetric entry. Only the upper triangle (`i < j`) is stored.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::ingest::PositiveInteraction;
use crate::vocab::Vocab;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoocError {
    #[error("interactions of user {0:?} are not sorted by (timestamp, track)")]
    Unsorted(String),
    #[error("interactions of user {0:?} are not contiguous")]
    NotGrouped(String),
    #[error("track {track:?} appears twice in the sequence of user {user:?}")]
    DuplicateTrack { user: String, track: String },
    #[error("invalid window config: {0}")]
    InvalidConfig(&'static str),
    #[error("invalid entry ({0}, {1}): {2}")]
    BadEntry(u32, u32, &'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowMode {
    /// Radius counted in positions.
    Track,
    /// Radius counted in seconds between interaction start times.
    Time,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    Uniform,
    /// `1 / d` where `d` is the rank distance inside the sequence.
    InverseDistance,
}

impl Weighting {
    pub fn weight(self, distance: usize) -> f64 {
        match self {
            Weighting::Uniform => 1.0,
            Weighting::InverseDistance => 1.0 / distance as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowConfig {
    pub mode: WindowMode,
    /// Positions on each side of the center; 5 gives a window of 10.
    pub radius_tracks: usize,
    pub radius_seconds: i64,
    pub weighting: Weighting,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { mode: WindowMode::Track, radius_tracks: 5, radius_seconds: 3600, weighting: Weighting::Uniform }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), CoocError> {
        match self.mode {
            WindowMode::Track if self.radius_tracks == 0 => {
                Err(CoocError::InvalidConfig("radius_tracks must be at least 1"))
            }
            WindowMode::Time if self.radius_seconds <= 0 => {
                Err(CoocError::InvalidConfig("radius_seconds must be positive"))
            }
            _ => Ok(()),
        }
    }

    fn in_range(&self, seq: &[(u32, i64)], p: usize, q: usize) -> bool {
        match self.mode {
            WindowMode::Track => q - p <= self.radius_tracks,
            WindowMode::Time => seq[q].1 - seq[p].1 <= self.radius_seconds,
        }
    }
}

/// Symmetric sparse co-occurrence matrix `O`; its stored support is `O⁺`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoocMatrix {
    vocab: Vocab,
    entries: BTreeMap<(u32, u32), f64>,
    track_counts: Vec<f64>,
    occurrences: Vec<u64>,
}

impl CoocMatrix {
    /// Builds `O` from interactions grouped by user and sorted by
    /// (first_timestamp, track_id) within each user.
    pub fn build(interactions: &[PositiveInteraction], cfg: &WindowConfig) -> Result<Self, CoocError> {
        let mut builder = CoocBuilder::new(cfg.clone())?;
        let mut finished_users: BTreeSet<&str> = BTreeSet::new();
        let mut rest = interactions;
        while let Some(head) = rest.first() {
            let run = rest.iter().take_while(|it| it.user_id == head.user_id).count();
            let (group, tail) = rest.split_at(run);
            if !finished_users.insert(&head.user_id) {
                return Err(CoocError::NotGrouped(head.user_id.clone()));
            }
            let sorted = group.windows(2).all(|w| {
                (w[0].first_timestamp, &w[0].track_id) < (w[1].first_timestamp, &w[1].track_id)
            });
            if !sorted {
                return Err(CoocError::Unsorted(head.user_id.clone()));
            }
            builder.add_user(&head.user_id, group.iter().map(|it| (it.track_id.as_str(), it.first_timestamp)))?;
            rest = tail;
        }
        Ok(builder.finish())
    }

    /// Reassembles a matrix from stored parts; used by file readers.
    pub fn from_parts(
        vocab: Vocab,
        occurrences: Vec<u64>,
        entries: impl IntoIterator<Item = (u32, u32, f64)>,
    ) -> Result<Self, CoocError> {
        let n = vocab.len() as u32;
        if occurrences.len() != vocab.len() {
            return Err(CoocError::InvalidConfig("occurrence list does not match vocabulary"));
        }
        let mut map = BTreeMap::new();
        for (i, j, w) in entries {
            if i >= j {
                return Err(CoocError::BadEntry(i, j, "expected i < j"));
            }
            if j >= n {
                return Err(CoocError::BadEntry(i, j, "index out of range"));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(CoocError::BadEntry(i, j, "weight must be positive and finite"));
            }
            if map.insert((i, j), w).is_some() {
                return Err(CoocError::BadEntry(i, j, "duplicate entry"));
            }
        }
        let mut m = CoocMatrix { vocab, entries: map, track_counts: Vec::new(), occurrences };
        m.recompute_counts();
        Ok(m)
    }

    fn recompute_counts(&mut self) {
        let mut counts = alloc::vec![0.0; self.vocab.len()];
        for (&(i, j), &w) in &self.entries {
            counts[i as usize] += w;
            counts[j as usize] += w;
        }
        self.track_counts = counts;
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn num_tracks(&self) -> usize {
        self.vocab.len()
    }

    /// Number of stored unordered pairs.
    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Symmetric lookup; zero for unobserved pairs and the diagonal.
    pub fn weight(&self, i: u32, j: u32) -> f64 {
        let key = if i < j { (i, j) } else { (j, i) };
        self.entries.get(&key).copied().unwrap_or(0.0)
    }

    pub fn weight_by_id(&self, a: &str, b: &str) -> f64 {
        match (self.vocab.get(a), self.vocab.get(b)) {
            (Some(i), Some(j)) if i != j => self.weight(i, j),
            _ => 0.0,
        }
    }

    /// Upper-triangle entries `(i, j, weight)` with `i < j`, in index order.
    pub fn entries(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &w)| (i, j, w))
    }

    /// Row sums: `track_counts()[i] = Σ_j weight(i, j)`.
    pub fn track_counts(&self) -> &[f64] {
        &self.track_counts
    }

    /// How many sequence positions each track occupied while counting, i.e.
    /// its number of interactions in the source corpus.
    pub fn occurrences(&self) -> &[u64] {
        &self.occurrences
    }

    /// Entry-wise sum over the union of both vocabularies. Tracks of `self`
    /// keep their indices; new tracks of `other` are appended in its order.
    pub fn merge(&self, other: &CoocMatrix) -> CoocMatrix {
        let mut vocab = self.vocab.clone();
        let remap: Vec<u32> = other.vocab.ids().iter().map(|id| vocab.intern(id)).collect();
        let mut occurrences = self.occurrences.clone();
        occurrences.resize(vocab.len(), 0);
        for (k, &occ) in other.occurrences.iter().enumerate() {
            occurrences[remap[k] as usize] += occ;
        }
        let mut entries = self.entries.clone();
        for (&(i, j), &w) in &other.entries {
            let (a, b) = (remap[i as usize], remap[j as usize]);
            let key = if a < b { (a, b) } else { (b, a) };
            *entries.entry(key).or_insert(0.0) += w;
        }
        let mut m = CoocMatrix { vocab, entries, track_counts: Vec::new(), occurrences };
        m.recompute_counts();
        m
    }

    /// Compares two matrices by track id rather than by index.
    pub fn same_counts_as(&self, other: &CoocMatrix) -> bool {
        if self.num_entries() != other.num_entries() {
            return false;
        }
        let mut occ = BTreeMap::new();
        for (k, id) in self.vocab.ids().iter().enumerate() {
            if self.occurrences[k] > 0 {
                occ.insert(id.as_str(), self.occurrences[k]);
            }
        }
        let other_occ: BTreeMap<&str, u64> = other
            .vocab
            .ids()
            .iter()
            .enumerate()
            .filter(|(k, _)| other.occurrences[*k] > 0)
            .map(|(k, id)| (id.as_str(), other.occurrences[k]))
            .collect();
        occ == other_occ
            && self.entries().all(|(i, j, w)| other.weight_by_id(self.vocab.id(i), self.vocab.id(j)) == w)
    }
}

/// Incremental builder; feed one user sequence at a time.
#[derive(Debug)]
pub struct CoocBuilder {
    cfg: WindowConfig,
    vocab: Vocab,
    entries: BTreeMap<(u32, u32), f64>,
    occurrences: Vec<u64>,
    scratch: Vec<(u32, i64)>,
}

impl CoocBuilder {
    pub fn new(cfg: WindowConfig) -> Result<Self, CoocError> {
        cfg.validate()?;
        Ok(Self { cfg, vocab: Vocab::new(), entries: BTreeMap::new(), occurrences: Vec::new(), scratch: Vec::new() })
    }

    /// Adds one user's sequence of `(track_id, start_time)`, already in
    /// ascending time order.
    pub fn add_user<'a>(&mut self, user: &str, seq: impl IntoIterator<Item = (&'a str, i64)>) -> Result<(), CoocError> {
        self.scratch.clear();
        for (track, ts) in seq {
            let idx = self.vocab.intern(track);
            if idx as usize == self.occurrences.len() {
                self.occurrences.push(0);
            }
            self.scratch.push((idx, ts));
        }
        if self.scratch.windows(2).any(|w| w[0].1 > w[1].1) {
            return Err(CoocError::Unsorted(user.to_string()));
        }
        for p in 0..self.scratch.len() {
            let (tp, _) = self.scratch[p];
            self.occurrences[tp as usize] += 1;
            for q in p + 1..self.scratch.len() {
                if !self.cfg.in_range(&self.scratch, p, q) {
                    break;
                }
                let (tq, _) = self.scratch[q];
                if tp == tq {
                    return Err(CoocError::DuplicateTrack {
                        user: user.to_string(),
                        track: self.vocab.id(tp).to_string(),
                    });
                }
                let key = if tp < tq { (tp, tq) } else { (tq, tp) };
                // (p, q) and (q, p) both count
                *self.entries.entry(key).or_insert(0.0) += 2.0 * self.cfg.weighting.weight(q - p);
            }
        }
        Ok(())
    }

    pub fn finish(self) -> CoocMatrix {
        let mut m = CoocMatrix { vocab: self.vocab, entries: self.entries, track_counts: Vec::new(), occurrences: self.occurrences };
        m.recompute_counts();
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(tracks: &[&str]) -> Vec<PositiveInteraction> {
        tracks
            .iter()
            .enumerate()
            .map(|(k, t)| PositiveInteraction { user_id: "u".into(), track_id: (*t).into(), first_timestamp: k as i64 })
            .collect()
    }

    #[test]
    fn three_tracks_radius_one_uniform() {
        let cfg = WindowConfig { radius_tracks: 1, ..WindowConfig::default() };
        let m = CoocMatrix::build(&seq(&["t1", "t2", "t3"]), &cfg).unwrap();
        assert_eq!(m.weight_by_id("t1", "t2"), 2.0);
        assert_eq!(m.weight_by_id("t2", "t1"), 2.0);
        assert_eq!(m.weight_by_id("t2", "t3"), 2.0);
        assert_eq!(m.weight_by_id("t1", "t3"), 0.0);
        assert_eq!(m.num_entries(), 2);
        assert_eq!(m.track_counts(), &[2.0, 4.0, 2.0]);
    }

    #[test]
    fn three_tracks_radius_two_inverse_distance() {
        let cfg = WindowConfig { radius_tracks: 2, weighting: Weighting::InverseDistance, ..WindowConfig::default() };
        let m = CoocMatrix::build(&seq(&["t1", "t2", "t3"]), &cfg).unwrap();
        assert_eq!(m.weight_by_id("t1", "t2"), 2.0);
        assert_eq!(m.weight_by_id("t2", "t3"), 2.0);
        assert_eq!(m.weight_by_id("t1", "t3"), 1.0);
    }

    #[test]
    fn single_track_user_contributes_nothing() {
        let m = CoocMatrix::build(&seq(&["t1"]), &WindowConfig::default()).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.occurrences(), &[1]);
    }

    #[test]
    fn time_mode_uses_seconds_for_range_and_rank_for_weight() {
        let cfg = WindowConfig {
            mode: WindowMode::Time,
            radius_seconds: 10,
            weighting: Weighting::InverseDistance,
            ..WindowConfig::default()
        };
        let mut s = seq(&["a", "b", "c"]);
        s[0].first_timestamp = 0;
        s[1].first_timestamp = 5;
        s[2].first_timestamp = 10;
        let m = CoocMatrix::build(&s, &cfg).unwrap();
        assert_eq!(m.weight_by_id("a", "c"), 1.0);
        s[2].first_timestamp = 11;
        let m = CoocMatrix::build(&s, &cfg).unwrap();
        assert_eq!(m.weight_by_id("a", "c"), 0.0);
        assert_eq!(m.weight_by_id("b", "c"), 2.0);
    }

    #[test]
    fn unsorted_and_ungrouped_input_is_rejected() {
        let mut s = seq(&["a", "b"]);
        s.swap(0, 1);
        assert_eq!(CoocMatrix::build(&s, &WindowConfig::default()), Err(CoocError::Unsorted("u".into())));

        let mut s = seq(&["a", "b"]);
        s.push(PositiveInteraction { user_id: "v".into(), track_id: "a".into(), first_timestamp: 0 });
        s.push(PositiveInteraction { user_id: "u".into(), track_id: "c".into(), first_timestamp: 9 });
        assert_eq!(CoocMatrix::build(&s, &WindowConfig::default()), Err(CoocError::NotGrouped("u".into())));
    }

    #[test]
    fn merge_identity_and_vocab_union() {
        let cfg = WindowConfig::default();
        let x = CoocMatrix::build(&seq(&["a", "b", "c"]), &cfg).unwrap();
        assert_eq!(x.merge(&CoocMatrix::default()), x);
        assert!(CoocMatrix::default().merge(&x).same_counts_as(&x));
    }

    #[test]
    fn bad_config_is_rejected() {
        let cfg = WindowConfig { radius_tracks: 0, ..WindowConfig::default() };
        assert!(matches!(CoocBuilder::new(cfg), Err(CoocError::InvalidConfig(_))));
        let cfg = WindowConfig { mode: WindowMode::Time, radius_seconds: 0, ..WindowConfig::default() };
        assert!(matches!(CoocBuilder::new(cfg), Err(CoocError::InvalidConfig(_))));
    }

    #[test]
    fn from_parts_validates_entries() {
        let vocab: Vocab = ["a", "b"].into_iter().collect();
        assert!(CoocMatrix::from_parts(vocab.clone(), alloc::vec![1, 1], [(1, 0, 1.0)]).is_err());
        assert!(CoocMatrix::from_parts(vocab.clone(), alloc::vec![1, 1], [(0, 1, 0.0)]).is_err());
        let m = CoocMatrix::from_parts(vocab, alloc::vec![1, 1], [(0, 1, 3.0)]).unwrap();
        assert_eq!(m.track_counts(), &[3.0, 3.0]);
    }
}
