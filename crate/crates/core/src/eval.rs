//! Time-based splitting and binned mean percentile rank.
//!
//! For a track `a` with test-window context tracks `B` and the remaining
//! catalog `I`, the percentile rank is the fraction of `(b, i)` pairs where
//! `i` is at least as close to `a` as `b` by cosine (ties count one half).
//! 0 is a perfect ranking and 0.5 is random. Tracks are binned by how often
//! they occurred in the train set.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use thiserror::Error;

use crate::cooc::{CoocError, CoocMatrix, WindowConfig};
use crate::embed::EmbeddingSet;
use crate::ingest::{PositiveInteraction, RawEvent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("track {0:?} has a zero-norm embedding")]
    ZeroNorm(String),
    #[error("track {0:?} has no context tracks")]
    EmptyContext(String),
    #[error("track {0:?} has no remaining tracks to rank against")]
    EmptyCandidates(String),
    #[error("invalid eval config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Cooc(#[from] CoocError),
}

/// Anything with a user, a track and a time.
pub trait Timed {
    fn user(&self) -> &str;
    fn track(&self) -> &str;
    fn timestamp(&self) -> i64;
}

impl Timed for PositiveInteraction {
    fn user(&self) -> &str {
        &self.user_id
    }
    fn track(&self) -> &str {
        &self.track_id
    }
    fn timestamp(&self) -> i64 {
        self.first_timestamp
    }
}

impl Timed for RawEvent {
    fn user(&self) -> &str {
        &self.user_id
    }
    fn track(&self) -> &str {
        &self.track_id
    }
    fn timestamp(&self) -> i64 {
        self.timestamp
    }
}

/// Train gets everything strictly before `split`; test gets the rest minus
/// every (user, track) pair already present in train. Input order is kept.
pub fn time_split<T: Timed + Clone>(items: &[T], split: i64) -> (Vec<T>, Vec<T>) {
    let (train, later): (Vec<T>, Vec<T>) = items.iter().cloned().partition(|it| it.timestamp() < split);
    let seen: BTreeSet<(&str, &str)> = train.iter().map(|it| (it.user(), it.track())).collect();
    let test = later.into_iter().filter(|it| !seen.contains(&(it.user(), it.track()))).collect();
    (train, test)
}

/// What "number of occurrences in the train set" counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OccurrenceCount {
    /// Train interactions of the track.
    #[default]
    Interactions,
    /// Row sum of the train co-occurrence matrix.
    CoocRowSum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Upper-inclusive bin edges, strictly ascending.
    pub bin_edges: Vec<u64>,
    /// Caps the ranked remainder per query by seeded subsampling.
    pub max_eval_tracks_per_query: Option<usize>,
    pub seed: u64,
    pub occurrence_count: OccurrenceCount,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            bin_edges: vec![5, 10, 20, 50, 100, 1000, 5000, 15000],
            max_eval_tracks_per_query: None,
            seed: 0,
            occurrence_count: OccurrenceCount::Interactions,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.bin_edges.is_empty() {
            return Err(EvalError::InvalidConfig("at least one bin edge is required"));
        }
        if self.bin_edges[0] < 1 || self.bin_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EvalError::InvalidConfig("bin edges must be strictly ascending and at least 1"));
        }
        if self.max_eval_tracks_per_query == Some(0) {
            return Err(EvalError::InvalidConfig("max_eval_tracks_per_query must be positive"));
        }
        Ok(())
    }
}

/// Index of the smallest edge `>= count`; counts above the last edge land in
/// the last bin.
pub fn bin_index(count: f64, edges: &[u64]) -> usize {
    edges.iter().position(|&e| count <= e as f64).unwrap_or(edges.len() - 1)
}

fn cosines_to(emb: &EmbeddingSet, a: u32, others: impl Iterator<Item = u32>) -> Result<Vec<f64>, EvalError> {
    let av = emb.vector(a);
    let an = crate::norm(av);
    if an == 0.0 {
        return Err(EvalError::ZeroNorm(emb.vocab().id(a).to_string()));
    }
    others
        .map(|x| {
            let v = emb.vector(x);
            let n = crate::norm(v);
            if n == 0.0 {
                Err(EvalError::ZeroNorm(emb.vocab().id(x).to_string()))
            } else {
                Ok(crate::dot(av, v) / (an * n))
            }
        })
        .collect()
}

/// Percentile rank of `a` given its context tracks and the catalog to rank
/// against (all indices into `emb`). The remainder is `catalog - context -
/// {a}`.
pub fn percentile_rank(emb: &EmbeddingSet, a: u32, context: &[u32], catalog: &[u32]) -> Result<f64, EvalError> {
    let ctx: BTreeSet<u32> = context.iter().copied().filter(|&b| b != a).collect();
    if ctx.is_empty() {
        return Err(EvalError::EmptyContext(emb.vocab().id(a).to_string()));
    }
    let rest: BTreeSet<u32> = catalog.iter().copied().filter(|x| *x != a && !ctx.contains(x)).collect();
    rank_against(emb, a, &ctx.into_iter().collect::<Vec<_>>(), &rest.into_iter().collect::<Vec<_>>())
}

fn rank_against(emb: &EmbeddingSet, a: u32, context: &[u32], rest: &[u32]) -> Result<f64, EvalError> {
    if rest.is_empty() {
        return Err(EvalError::EmptyCandidates(emb.vocab().id(a).to_string()));
    }
    let b_cos = cosines_to(emb, a, context.iter().copied())?;
    let mut i_cos = cosines_to(emb, a, rest.iter().copied())?;
    i_cos.sort_by(|x, y| x.total_cmp(y));
    let mut score = 0.0;
    for cb in b_cos {
        let below_or_equal = i_cos.partition_point(|&c| c <= cb);
        let below = i_cos.partition_point(|&c| c < cb);
        let above = i_cos.len() - below_or_equal;
        score += above as f64 + 0.5 * (below_or_equal - below) as f64;
    }
    Ok(score / (context.len() as f64 * rest.len() as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinReport {
    /// The bin's upper edge.
    pub edge: u64,
    pub tracks: usize,
    /// `None` for an empty bin.
    pub mpr: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EvalDiagnostics {
    /// Test tracks without an embedding.
    pub missing_embedding: usize,
    /// Context entries dropped because the context track has no embedding.
    pub missing_context_embedding: usize,
    /// Tracks left with no usable context.
    pub no_context: usize,
    /// Tracks whose context already covers the whole catalog.
    pub no_candidates: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub bins: Vec<BinReport>,
    pub evaluated_tracks: usize,
    /// Mean over all evaluated tracks; `None` if nothing was evaluated.
    pub average_mpr: Option<f64>,
    pub diagnostics: EvalDiagnostics,
    /// Per evaluated track: (track id, train occurrence count, pr).
    pub per_track: Vec<(String, f64, f64)>,
}

struct Query {
    a: u32,
    context: Vec<u32>,
    count: f64,
}

/// Evaluates `emb` on `test` (grouped by user, time-sorted), using the same
/// window as training to find each track's context and `train` for the bin
/// counts. Every embedded track forms the ranking catalog.
pub fn evaluate(
    test: &[PositiveInteraction],
    train: &CoocMatrix,
    emb: &EmbeddingSet,
    window: &WindowConfig,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let test_cooc = CoocMatrix::build(test, window)?;
    let mut neighbours: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (i, j, _) in test_cooc.entries() {
        neighbours.entry(i).or_default().push(j);
        neighbours.entry(j).or_default().push(i);
    }
    let mut diagnostics = EvalDiagnostics::default();
    let mut queries = Vec::new();
    for (t, id) in test_cooc.vocab().ids().iter().enumerate() {
        let Some(a) = emb.vocab().get(id) else {
            diagnostics.missing_embedding += 1;
            continue;
        };
        let mut context = Vec::new();
        for &n in neighbours.get(&(t as u32)).map(Vec::as_slice).unwrap_or(&[]) {
            match emb.vocab().get(test_cooc.vocab().id(n)) {
                Some(b) => context.push(b),
                None => diagnostics.missing_context_embedding += 1,
            }
        }
        if context.is_empty() {
            diagnostics.no_context += 1;
            continue;
        }
        context.sort_unstable();
        if context.len() + 1 >= emb.len() {
            diagnostics.no_candidates += 1;
            continue;
        }
        let count = train_count(train, id, cfg.occurrence_count);
        queries.push(Query { a, context, count });
    }

    let catalog_len = emb.len() as u32;
    let run = |q: &Query| -> Result<f64, EvalError> {
        let ctx: BTreeSet<u32> = q.context.iter().copied().collect();
        let mut rest: Vec<u32> = (0..catalog_len).filter(|x| *x != q.a && !ctx.contains(x)).collect();
        if let Some(cap) = cfg.max_eval_tracks_per_query {
            if rest.len() > cap {
                let mut rng = crate::seeded_rng(cfg.seed, 0xe7a1_0000_0000 + q.a as u64);
                let mut picked = index::sample(&mut rng, rest.len(), cap).into_vec();
                picked.sort_unstable();
                rest = picked.into_iter().map(|k| rest[k]).collect();
            }
        }
        rank_against(emb, q.a, &q.context, &rest)
    };

    #[cfg(feature = "parallel")]
    let ranks: Vec<f64> = {
        use rayon::prelude::*;
        queries.par_iter().map(run).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let ranks: Vec<f64> = queries.iter().map(run).collect::<Result<_, _>>()?;

    let mut sums = vec![0.0; cfg.bin_edges.len()];
    let mut counts = vec![0usize; cfg.bin_edges.len()];
    let mut per_track = Vec::with_capacity(queries.len());
    let mut total = 0.0;
    for (q, pr) in queries.iter().zip(&ranks) {
        let b = bin_index(q.count, &cfg.bin_edges);
        sums[b] += pr;
        counts[b] += 1;
        total += pr;
        per_track.push((emb.vocab().id(q.a).to_string(), q.count, *pr));
    }
    let bins = cfg
        .bin_edges
        .iter()
        .zip(sums.iter().zip(&counts))
        .map(|(&edge, (&s, &c))| BinReport { edge, tracks: c, mpr: (c > 0).then(|| s / c as f64) })
        .collect();
    let evaluated_tracks = ranks.len();
    Ok(EvalReport {
        bins,
        evaluated_tracks,
        average_mpr: (evaluated_tracks > 0).then(|| total / evaluated_tracks as f64),
        diagnostics,
        per_track,
    })
}

fn train_count(train: &CoocMatrix, id: &str, how: OccurrenceCount) -> f64 {
    match train.vocab().get(id) {
        None => 0.0,
        Some(t) => match how {
            OccurrenceCount::Interactions => train.occurrences()[t as usize] as f64,
            OccurrenceCount::CoocRowSum => train.track_counts()[t as usize],
        },
    }
}
