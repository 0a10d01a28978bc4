//! Factorization machine over binary indicator features.
//!
//! Feature layout for a catalog of `C` tracks and `F` side features:
//!
//! ```text
//! [0, C)        focal track one-hot
//! [C, 2C)       context track one-hot
//! [2C, 2C + F)  side features (creator, ...)
//! ```
//!
//! An instance is just its list of active slots; every active indicator is 1,
//! so `ŷ = Σ w_i + Σ_{i<j} v_i·v_j` over the active slots.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::vocab::Vocab;

const INIT_STREAM: u64 = 0xf0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FmError {
    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },
    #[error("track {0} lists side feature {1} twice")]
    DuplicateSideFeature(usize, u32),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
}

/// Slot layout plus the side features attached to each track.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSpace {
    catalog_size: usize,
    side_vocab: Vocab,
    track_side: Vec<Vec<u32>>,
}

impl FeatureSpace {
    /// A space with no side features (`F = 0`).
    pub fn tracks_only(catalog_size: usize) -> Self {
        Self { catalog_size, side_vocab: Vocab::new(), track_side: vec![Vec::new(); catalog_size] }
    }

    /// `track_side[t]` lists indices into `side_vocab` for track `t`.
    pub fn new(catalog_size: usize, side_vocab: Vocab, track_side: Vec<Vec<u32>>) -> Result<Self, FmError> {
        if track_side.len() != catalog_size {
            return Err(FmError::DimensionMismatch("one side-feature list per track"));
        }
        let f = side_vocab.len();
        for (t, feats) in track_side.iter().enumerate() {
            for (k, &x) in feats.iter().enumerate() {
                if x as usize >= f {
                    return Err(FmError::OutOfRange { index: x as usize, limit: f });
                }
                if feats[..k].contains(&x) {
                    return Err(FmError::DuplicateSideFeature(t, x));
                }
            }
        }
        Ok(Self { catalog_size, side_vocab, track_side })
    }

    /// Builds the side vocabulary from `(track_id, feature_id)` pairs in
    /// first-appearance order. Pairs naming unknown tracks are ignored and
    /// repeated pairs collapse.
    pub fn from_pairs<'a>(tracks: &Vocab, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut side_vocab = Vocab::new();
        let mut track_side = vec![Vec::new(); tracks.len()];
        for (track, feature) in pairs {
            let Some(t) = tracks.get(track) else { continue };
            let f = side_vocab.intern(feature);
            let list: &mut Vec<u32> = &mut track_side[t as usize];
            if !list.contains(&f) {
                list.push(f);
            }
        }
        Self { catalog_size: tracks.len(), side_vocab, track_side }
    }

    /// `C`
    pub fn catalog_size(&self) -> usize {
        self.catalog_size
    }

    /// `F`
    pub fn num_side_features(&self) -> usize {
        self.side_vocab.len()
    }

    /// `n = 2C + F`
    pub fn num_slots(&self) -> usize {
        2 * self.catalog_size + self.side_vocab.len()
    }

    pub fn side_vocab(&self) -> &Vocab {
        &self.side_vocab
    }

    pub fn side_features(&self, track: usize) -> &[u32] {
        &self.track_side[track]
    }

    pub fn context_slot(&self, track: usize) -> usize {
        self.catalog_size + track
    }

    pub fn side_slot(&self, feature: u32) -> usize {
        2 * self.catalog_size + feature as usize
    }

    /// Active slots for (track, context): the track slot, the context slot,
    /// the track's side features and, optionally, the context's side
    /// features. Slots are distinct.
    pub fn encode_instance(&self, track: usize, context: usize, include_context_side: bool) -> Result<Vec<usize>, FmError> {
        let mut slots = Vec::new();
        self.encode_into(track, context, include_context_side, &mut slots)?;
        Ok(slots)
    }

    /// Like [`encode_instance`](Self::encode_instance), reusing `slots`.
    pub fn encode_into(
        &self,
        track: usize,
        context: usize,
        include_context_side: bool,
        slots: &mut Vec<usize>,
    ) -> Result<(), FmError> {
        for idx in [track, context] {
            if idx >= self.catalog_size {
                return Err(FmError::OutOfRange { index: idx, limit: self.catalog_size });
            }
        }
        slots.clear();
        slots.push(track);
        slots.push(self.context_slot(context));
        slots.extend(self.track_side[track].iter().map(|&f| self.side_slot(f)));
        if include_context_side {
            for &f in &self.track_side[context] {
                let s = self.side_slot(f);
                if !slots.contains(&s) {
                    slots.push(s);
                }
            }
        }
        Ok(())
    }
}

/// Biases `w` and latent vectors `V` for `n` slots of dimension `k`,
/// row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FmParams {
    k: usize,
    w: Vec<f64>,
    v: Vec<f64>,
}

impl FmParams {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self { k, w: vec![0.0; n], v: vec![0.0; n * k] }
    }

    /// `w = 0`, `V` i.i.d. uniform in `[-0.5/k, 0.5/k]`.
    pub fn init(n: usize, k: usize, seed: u64) -> Self {
        let mut rng = crate::seeded_rng(seed, INIT_STREAM);
        let half = 0.5 / k as f64;
        let v = (0..n * k).map(|_| rng.gen_range(-half..=half)).collect();
        Self { k, w: vec![0.0; n], v }
    }

    pub fn from_raw(k: usize, w: Vec<f64>, v: Vec<f64>) -> Result<Self, FmError> {
        if v.len() != w.len() * k {
            return Err(FmError::DimensionMismatch("vector block must be n * k"));
        }
        Ok(Self { k, w, v })
    }

    pub fn num_slots(&self) -> usize {
        self.w.len()
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn bias(&self, slot: usize) -> f64 {
        self.w[slot]
    }

    pub fn bias_mut(&mut self, slot: usize) -> &mut f64 {
        &mut self.w[slot]
    }

    pub fn vector(&self, slot: usize) -> &[f64] {
        &self.v[slot * self.k..(slot + 1) * self.k]
    }

    pub fn vector_mut(&mut self, slot: usize) -> &mut [f64] {
        &mut self.v[slot * self.k..(slot + 1) * self.k]
    }

    pub fn biases(&self) -> &[f64] {
        &self.w
    }

    pub fn vectors(&self) -> &[f64] {
        &self.v
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// `Σ w_i²` over all slots.
    pub fn bias_sq_norm(&self) -> f64 {
        self.w.iter().map(|x| x * x).sum()
    }

    /// `Σ ‖v_i‖²` over all slots.
    pub fn vector_sq_norm(&self) -> f64 {
        self.v.iter().map(|x| x * x).sum()
    }
}

pub fn predict(slots: &[usize], params: &FmParams) -> f64 {
    let mut y: f64 = slots.iter().map(|&s| params.bias(s)).sum();
    for (a, &i) in slots.iter().enumerate() {
        let vi = params.vector(i);
        for &j in &slots[a + 1..] {
            y += crate::dot(vi, params.vector(j));
        }
    }
    y
}

/// `∂ŷ/∂θ` restricted to the active slots. `∂ŷ/∂w_i = 1` for every active
/// slot, so only the vector part is stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    k: usize,
    slots: Vec<usize>,
    d_v: Vec<f64>,
}

impl Gradient {
    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    /// Always 1 for an active slot.
    pub fn d_bias(&self, _position: usize) -> f64 {
        1.0
    }

    /// `∂ŷ/∂v` for the slot at `position` in [`slots`](Self::slots).
    pub fn d_vector(&self, position: usize) -> &[f64] {
        &self.d_v[position * self.k..(position + 1) * self.k]
    }
}

/// `∂ŷ/∂v_i = Σ_{j active, j ≠ i} v_j`.
pub fn gradient(slots: &[usize], params: &FmParams) -> Gradient {
    let k = params.dim();
    let mut d_v = vec![0.0; slots.len() * k];
    vector_gradient_into(slots, params, &mut d_v);
    Gradient { k, slots: slots.to_vec(), d_v }
}

pub(crate) fn vector_gradient_into(slots: &[usize], params: &FmParams, out: &mut [f64]) {
    let k = params.dim();
    out.fill(0.0);
    for (a, _) in slots.iter().enumerate() {
        let row = &mut out[a * k..(a + 1) * k];
        for (b, &j) in slots.iter().enumerate() {
            if a != b {
                for (r, x) in row.iter_mut().zip(params.vector(j)) {
                    *r += x;
                }
            }
        }
    }
}
