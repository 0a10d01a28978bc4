//! Final track vectors and exact cosine top-N queries.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::als::ImplicitModel;
use crate::fm::{FeatureSpace, FmParams};
use crate::vocab::Vocab;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("unknown track {0:?}")]
    UnknownTrack(String),
    #[error("track {0:?} has a zero-norm embedding")]
    ZeroNorm(String),
    #[error("duplicate track {0:?}")]
    DuplicateTrack(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
}

/// Track id → vector of dimension `dim`, stored densely in vocab order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    vocab: Vocab,
    vectors: Vec<f64>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Self {
        Self { dim, vocab: Vocab::new(), vectors: Vec::new() }
    }

    pub fn from_parts(vocab: Vocab, dim: usize, vectors: Vec<f64>) -> Result<Self, EmbedError> {
        if vectors.len() != vocab.len() * dim {
            return Err(EmbedError::DimensionMismatch("vectors must be count * dim"));
        }
        Ok(Self { dim, vocab, vectors })
    }

    pub fn push(&mut self, id: &str, vector: &[f64]) -> Result<u32, EmbedError> {
        if vector.len() != self.dim {
            return Err(EmbedError::DimensionMismatch("vector length differs from set dimension"));
        }
        if self.vocab.get(id).is_some() {
            return Err(EmbedError::DuplicateTrack(id.to_string()));
        }
        self.vectors.extend_from_slice(vector);
        Ok(self.vocab.intern(id))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn vector(&self, index: u32) -> &[f64] {
        let i = index as usize;
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.vocab.get(id).map(|i| self.vector(i))
    }

    /// Applies `f` to every vector; handy for invariance checks.
    pub fn map_vectors(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self, EmbedError> {
        let mut vectors = Vec::with_capacity(self.vectors.len());
        let mut dim = self.dim;
        for (k, v) in self.vectors.chunks_exact(self.dim.max(1)).enumerate() {
            let out = f(v);
            if k == 0 {
                dim = out.len();
            } else if out.len() != dim {
                return Err(EmbedError::DimensionMismatch("mapped vectors differ in length"));
            }
            vectors.extend(out);
        }
        Self::from_parts(self.vocab.clone(), dim, vectors)
    }
}

/// Which latent vectors make up a track's final vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ComposeMode {
    /// Track slot plus the track's side-feature slots.
    #[default]
    TrackPlusSide,
    TrackOnly,
    /// Additionally adds the track's context slot.
    TrackPlusContextPlusSide,
}

/// Final vector per track, keyed by `tracks` (the vocabulary the feature
/// space was built over).
pub fn compose_final_vectors(
    params: &FmParams,
    space: &FeatureSpace,
    tracks: &Vocab,
    mode: ComposeMode,
) -> Result<EmbeddingSet, EmbedError> {
    if tracks.len() != space.catalog_size() {
        return Err(EmbedError::DimensionMismatch("track vocabulary differs from feature space"));
    }
    if params.num_slots() != space.num_slots() {
        return Err(EmbedError::DimensionMismatch("parameters differ from feature space"));
    }
    let k = params.dim();
    let mut vectors = vec![0.0; tracks.len() * k];
    for (t, out) in vectors.chunks_exact_mut(k.max(1)).enumerate().take(tracks.len()) {
        out.copy_from_slice(params.vector(t));
        if mode == ComposeMode::TrackPlusContextPlusSide {
            add(out, params.vector(space.context_slot(t)));
        }
        if mode != ComposeMode::TrackOnly {
            for &f in space.side_features(t) {
                add(out, params.vector(space.side_slot(f)));
            }
        }
    }
    EmbeddingSet::from_parts(tracks.clone(), k, vectors)
}

fn add(acc: &mut [f64], v: &[f64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += x;
    }
}

/// Item vectors of an implicit ALS model, keyed by `items`.
pub fn from_implicit_model(model: &ImplicitModel, items: &Vocab) -> Result<EmbeddingSet, EmbedError> {
    if items.len() != model.num_items() {
        return Err(EmbedError::DimensionMismatch("item vocabulary differs from model"));
    }
    EmbeddingSet::from_parts(items.clone(), model.dim(), model.item_vectors().to_vec())
}

/// Cosine similarity; `None` when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (crate::norm(a), crate::norm(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(crate::dot(a, b) / (na * nb))
}

/// Exact top-`n` tracks by cosine to `query`, excluding the query itself.
/// Sorted by descending cosine, ties by ascending index. Tracks with a
/// zero-norm vector are never returned.
pub fn top_n_similar(query: &str, n: usize, emb: &EmbeddingSet) -> Result<Vec<(u32, f64)>, EmbedError> {
    let q = emb.vocab.get(query).ok_or_else(|| EmbedError::UnknownTrack(query.to_string()))?;
    let qv = emb.vector(q);
    let qn = crate::norm(qv);
    if qn == 0.0 {
        return Err(EmbedError::ZeroNorm(query.to_string()));
    }
    let mut scored: Vec<(u32, f64)> = (0..emb.len() as u32)
        .filter(|&i| i != q)
        .filter_map(|i| {
            let v = emb.vector(i);
            let nv = crate::norm(v);
            (nv > 0.0).then(|| (i, crate::dot(qv, v) / (qn * nv)))
        })
        .collect();
    let by_rank = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if n < scored.len() {
        if n == 0 {
            return Ok(Vec::new());
        }
        scored.select_nth_unstable_by(n - 1, by_rank);
        scored.truncate(n);
    }
    scored.sort_by(by_rank);
    Ok(scored)
}
