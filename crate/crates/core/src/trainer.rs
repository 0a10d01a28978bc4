//! SGD training of the factorization machine on `O⁺`.
//!
//! Under logistic loss every observed ordered pair `(i, j)` yields one
//! positive instance and `m` negatives whose context slot is redrawn from the
//! smoothed occurrence distribution. Under squared loss each observed pair is
//! regressed onto `log2(O_ij)`. Step sizes follow AdaGrad with one
//! accumulator per bias and one per latent vector.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cooc::CoocMatrix;
use crate::fm::{self, FeatureSpace, FmError, FmParams};

const SHUFFLE_STREAM: u64 = 0x5f;
const NEGATIVE_STREAM: u64 = 0x6e;
const OBJECTIVE_STREAM: u64 = 0x0b;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("co-occurrence matrix has no observed pairs")]
    EmptyMatrix,
    #[error("non-finite parameter in slot {slot} during epoch {epoch}; lower the learning rate")]
    NonFinite { epoch: usize, slot: usize },
    #[error("invalid train config: {0}")]
    InvalidConfig(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error(transparent)]
    Fm(#[from] FmError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    /// `log(1 + exp(-ŷ y))` with `y ∈ {+1, -1}`.
    Logistic,
    /// `(ŷ - y)²` with `y = log2(O_ij)`.
    Squared,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PositiveWeight {
    /// `p = 1`
    Unit,
    /// `p = 1 + log2(1 + O_ij)`
    CoocWeight,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub loss: Loss,
    /// Negatives per positive; ignored under squared loss.
    pub negatives: usize,
    pub smoothing_exponent: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight of the bias penalty `λ1 w²`.
    pub lambda_bias: f64,
    /// Weight of the vector penalty `λ2 ‖v‖²`.
    pub lambda_vector: f64,
    pub adagrad_epsilon: f64,
    pub seed: u64,
    pub dim: usize,
    pub positive_weight: PositiveWeight,
    /// Also activate the context track's side features.
    pub include_context_side: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: Loss::Logistic,
            negatives: 5,
            smoothing_exponent: 0.75,
            epochs: 10,
            learning_rate: 0.05,
            lambda_bias: 0.0,
            lambda_vector: 0.0,
            adagrad_epsilon: 1e-8,
            seed: 0,
            dim: 150,
            positive_weight: PositiveWeight::Unit,
            include_context_side: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig("learning rate must be positive"));
        }
        if self.dim == 0 {
            return Err(TrainError::InvalidConfig("latent dimension must be at least 1"));
        }
        if !(self.lambda_bias >= 0.0 && self.lambda_vector >= 0.0) {
            return Err(TrainError::InvalidConfig("regularization weights must be non-negative"));
        }
        if self.adagrad_epsilon.is_nan() || self.adagrad_epsilon <= 0.0 {
            return Err(TrainError::InvalidConfig("adagrad epsilon must be positive"));
        }
        if !self.smoothing_exponent.is_finite() {
            return Err(TrainError::InvalidConfig("smoothing exponent must be finite"));
        }
        Ok(())
    }

    fn positive_weight(&self, cooc_weight: f64) -> f64 {
        match self.positive_weight {
            PositiveWeight::Unit => 1.0,
            PositiveWeight::CoocWeight => 1.0 + libm::log2(1.0 + cooc_weight),
        }
    }
}

pub fn loss_value(y_hat: f64, y: f64, loss: Loss) -> f64 {
    match loss {
        Loss::Logistic => softplus(-y_hat * y),
        Loss::Squared => (y_hat - y) * (y_hat - y),
    }
}

/// `dL/dŷ`
pub fn loss_derivative(y_hat: f64, y: f64, loss: Loss) -> f64 {
    match loss {
        Loss::Logistic => -y * sigmoid(-y_hat * y),
        Loss::Squared => 2.0 * (y_hat - y),
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-z.abs()))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Per-slot AdaGrad accumulators: one scalar for each bias and one for each
/// whole latent vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaGradState {
    g_w: Vec<f64>,
    g_v: Vec<f64>,
}

impl AdaGradState {
    pub fn new(num_slots: usize) -> Self {
        Self { g_w: vec![0.0; num_slots], g_v: vec![0.0; num_slots] }
    }

    pub fn bias_accumulator(&self, slot: usize) -> f64 {
        self.g_w[slot]
    }

    pub fn vector_accumulator(&self, slot: usize) -> f64 {
        self.g_v[slot]
    }

    pub fn num_slots(&self) -> usize {
        self.g_w.len()
    }
}

/// Draws context tracks with probability proportional to
/// `track_counts[j]^α` over the tracks present in `O⁺`.
#[derive(Clone, Debug)]
pub struct NegativeSampler {
    tracks: Vec<u32>,
    cumulative: Vec<f64>,
    rng: ChaCha8Rng,
}

pub fn make_negative_sampler(cooc: &CoocMatrix, smoothing_exponent: f64, seed: u64) -> Result<NegativeSampler, TrainError> {
    NegativeSampler::new(cooc, smoothing_exponent, seed, NEGATIVE_STREAM)
}

impl NegativeSampler {
    fn new(cooc: &CoocMatrix, alpha: f64, seed: u64, stream: u64) -> Result<Self, TrainError> {
        let mut tracks = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0.0;
        for (t, &c) in cooc.track_counts().iter().enumerate() {
            if c > 0.0 {
                total += libm::pow(c, alpha);
                tracks.push(t as u32);
                cumulative.push(total);
            }
        }
        if tracks.is_empty() {
            return Err(TrainError::EmptyMatrix);
        }
        Ok(Self { tracks, cumulative, rng: crate::seeded_rng(seed, stream) })
    }

    pub fn sample(&mut self) -> u32 {
        let total = *self.cumulative.last().expect("non-empty");
        let u = self.rng.gen::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= u).min(self.tracks.len() - 1);
        self.tracks[k]
    }

    /// Exact probability of drawing `track`.
    pub fn probability(&self, track: u32) -> f64 {
        let total = *self.cumulative.last().expect("non-empty");
        match self.tracks.binary_search(&track) {
            Ok(k) => {
                let lo = if k == 0 { 0.0 } else { self.cumulative[k - 1] };
                (self.cumulative[k] - lo) / total
            }
            Err(_) => 0.0,
        }
    }

    pub fn support(&self) -> &[u32] {
        &self.tracks
    }
}

/// Reusable buffers for one SGD step.
#[derive(Debug, Default)]
struct Scratch {
    slots: Vec<usize>,
    d_v: Vec<f64>,
    step: Vec<f64>,
}

/// `p L(ŷ, y) + Σ_active (λ1 w_s² + λ2 ‖v_s‖²)`: the part of the objective
/// a single instance contributes under per-update regularization.
pub fn instance_objective(slots: &[usize], y: f64, p: f64, params: &FmParams, cfg: &TrainConfig) -> f64 {
    let y_hat = fm::predict(slots, params);
    let reg: f64 = slots
        .iter()
        .map(|&s| {
            let v = params.vector(s);
            cfg.lambda_bias * params.bias(s) * params.bias(s) + cfg.lambda_vector * crate::dot(v, v)
        })
        .sum();
    p * loss_value(y_hat, y, cfg.loss) + reg
}

/// Gradient of [`instance_objective`] over the active slots: one bias
/// derivative per slot and `k` vector derivatives per slot, row-major.
pub fn instance_gradient(slots: &[usize], y: f64, p: f64, params: &FmParams, cfg: &TrainConfig) -> (Vec<f64>, Vec<f64>) {
    let k = params.dim();
    let dl = p * loss_derivative(fm::predict(slots, params), y, cfg.loss);
    let mut d_v = vec![0.0; slots.len() * k];
    fm::vector_gradient_into(slots, params, &mut d_v);
    let mut d_w = Vec::with_capacity(slots.len());
    for (a, &s) in slots.iter().enumerate() {
        d_w.push(dl + 2.0 * cfg.lambda_bias * params.bias(s));
        for (g, x) in d_v[a * k..(a + 1) * k].iter_mut().zip(params.vector(s)) {
            *g = dl * *g + 2.0 * cfg.lambda_vector * x;
        }
    }
    (d_w, d_v)
}

/// One AdaGrad step on a single instance. Returns the instance objective
/// before the step, or the first slot that became non-finite.
pub fn sgd_step(
    slots: &[usize],
    y: f64,
    p: f64,
    params: &mut FmParams,
    state: &mut AdaGradState,
    cfg: &TrainConfig,
) -> Result<f64, usize> {
    let mut scratch = Scratch::default();
    step_with(slots, y, p, params, state, cfg, &mut scratch)
}

fn step_with(
    slots: &[usize],
    y: f64,
    p: f64,
    params: &mut FmParams,
    state: &mut AdaGradState,
    cfg: &TrainConfig,
    scratch: &mut Scratch,
) -> Result<f64, usize> {
    let k = params.dim();
    let y_hat = fm::predict(slots, params);
    let mut objective = p * loss_value(y_hat, y, cfg.loss);
    let dl = p * loss_derivative(y_hat, y, cfg.loss);
    scratch.d_v.resize(slots.len() * k, 0.0);
    scratch.step.resize(k, 0.0);
    fm::vector_gradient_into(slots, params, &mut scratch.d_v);
    for (a, &s) in slots.iter().enumerate() {
        let w = params.bias(s);
        let v = params.vector(s);
        objective += cfg.lambda_bias * w * w + cfg.lambda_vector * crate::dot(v, v);
        let mut g_sq = 0.0;
        for ((g, d), x) in scratch.step.iter_mut().zip(&scratch.d_v[a * k..(a + 1) * k]).zip(v) {
            *g = dl * d + 2.0 * cfg.lambda_vector * x;
            g_sq += *g * *g;
        }

        let g_w = dl + 2.0 * cfg.lambda_bias * w;
        state.g_w[s] += g_w * g_w;
        let bias = params.bias_mut(s);
        *bias -= cfg.learning_rate / libm::sqrt(state.g_w[s] + cfg.adagrad_epsilon) * g_w;
        let bias_ok = bias.is_finite();

        state.g_v[s] += g_sq;
        let rate = cfg.learning_rate / libm::sqrt(state.g_v[s] + cfg.adagrad_epsilon);
        let mut vec_ok = true;
        for (x, g) in params.vector_mut(s).iter_mut().zip(&scratch.step) {
            *x -= rate * g;
            vec_ok &= x.is_finite();
        }
        if !(bias_ok && vec_ok) {
            return Err(s);
        }
    }
    Ok(objective)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub instances: usize,
    /// Mean pre-step instance objective over the epoch.
    pub mean_objective: f64,
}

/// Ordered observed pairs `(track, context, O_ij)`: both orientations of
/// every stored entry.
fn ordered_pairs(cooc: &CoocMatrix) -> Vec<(u32, u32, f64)> {
    let mut pairs = Vec::with_capacity(2 * cooc.num_entries());
    for (i, j, w) in cooc.entries() {
        pairs.push((i, j, w));
        pairs.push((j, i, w));
    }
    pairs
}

fn check_dims(cooc: &CoocMatrix, space: &FeatureSpace, params: &FmParams, cfg: &TrainConfig) -> Result<(), TrainError> {
    if space.catalog_size() != cooc.num_tracks() {
        return Err(TrainError::DimensionMismatch("feature space catalog differs from co-occurrence vocabulary"));
    }
    if params.num_slots() != space.num_slots() {
        return Err(TrainError::DimensionMismatch("parameter count differs from feature space"));
    }
    if params.dim() != cfg.dim {
        return Err(TrainError::DimensionMismatch("parameter dimension differs from config"));
    }
    Ok(())
}

/// Epoch-by-epoch trainer. Holds the pair list, the negative sampler and the
/// epoch counter so repeated calls continue one deterministic run.
#[derive(Debug)]
pub struct Trainer<'a> {
    cooc: &'a CoocMatrix,
    space: &'a FeatureSpace,
    cfg: TrainConfig,
    pairs: Vec<(u32, u32, f64)>,
    sampler: Option<NegativeSampler>,
    epoch: usize,
    scratch: Scratch,
}

impl<'a> Trainer<'a> {
    pub fn new(cooc: &'a CoocMatrix, space: &'a FeatureSpace, cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        if space.catalog_size() != cooc.num_tracks() {
            return Err(TrainError::DimensionMismatch("feature space catalog differs from co-occurrence vocabulary"));
        }
        let sampler = match cfg.loss {
            Loss::Logistic if cfg.negatives > 0 && !cooc.is_empty() => {
                Some(make_negative_sampler(cooc, cfg.smoothing_exponent, cfg.seed)?)
            }
            _ => None,
        };
        Ok(Self { cooc, space, pairs: ordered_pairs(cooc), sampler, cfg, epoch: 0, scratch: Scratch::default() })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn train_epoch(&mut self, params: &mut FmParams, state: &mut AdaGradState) -> Result<EpochSummary, TrainError> {
        check_dims(self.cooc, self.space, params, &self.cfg)?;
        if state.num_slots() != params.num_slots() {
            return Err(TrainError::DimensionMismatch("adagrad state size differs from parameters"));
        }
        let epoch = self.epoch;
        let mut order_rng = crate::seeded_rng(self.cfg.seed, SHUFFLE_STREAM + ((epoch as u64) << 8));
        self.pairs.shuffle(&mut order_rng);

        let cfg = &self.cfg;
        let mut total = 0.0;
        let mut instances = 0usize;
        let mut slots = core::mem::take(&mut self.scratch.slots);
        for &(i, j, o) in &self.pairs {
            let (y, p) = match cfg.loss {
                Loss::Logistic => (1.0, cfg.positive_weight(o)),
                Loss::Squared => (libm::log2(o), 1.0),
            };
            self.space.encode_into(i as usize, j as usize, cfg.include_context_side, &mut slots)?;
            total += step_with(&slots, y, p, params, state, cfg, &mut self.scratch)
                .map_err(|slot| TrainError::NonFinite { epoch, slot })?;
            instances += 1;
            if let Some(sampler) = self.sampler.as_mut() {
                for _ in 0..cfg.negatives {
                    let neg = sampler.sample();
                    self.space.encode_into(i as usize, neg as usize, cfg.include_context_side, &mut slots)?;
                    total += step_with(&slots, -1.0, 1.0, params, state, cfg, &mut self.scratch)
                        .map_err(|slot| TrainError::NonFinite { epoch, slot })?;
                    instances += 1;
                }
            }
        }
        self.scratch.slots = slots;
        self.epoch += 1;
        let mean_objective = if instances == 0 { 0.0 } else { total / instances as f64 };
        Ok(EpochSummary { epoch, instances, mean_objective })
    }
}

/// Runs one epoch on fresh trainer state; a convenience for single-epoch
/// callers. Use [`Trainer`] to continue across epochs.
pub fn train_epoch(
    cooc: &CoocMatrix,
    space: &FeatureSpace,
    params: &mut FmParams,
    state: &mut AdaGradState,
    cfg: &TrainConfig,
) -> Result<EpochSummary, TrainError> {
    Trainer::new(cooc, space, cfg.clone())?.train_epoch(params, state)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: FmParams,
    pub state: AdaGradState,
    pub epochs: Vec<EpochSummary>,
}

/// Initializes parameters from `cfg.seed` and runs `cfg.epochs` epochs.
pub fn train(cooc: &CoocMatrix, space: &FeatureSpace, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let mut params = FmParams::init(space.num_slots(), cfg.dim, cfg.seed);
    let mut state = AdaGradState::new(space.num_slots());
    let mut trainer = Trainer::new(cooc, space, cfg.clone())?;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        epochs.push(trainer.train_epoch(&mut params, &mut state)?);
    }
    Ok(TrainOutcome { params, state, epochs })
}

/// Full-pass objective `Σ p L(ŷ, y) + λ1 ‖w‖² + λ2 Σ ‖v_i‖²`. Under logistic
/// loss the negatives come from a fixed sample seeded by `cfg.seed`, so the
/// value is comparable across epochs.
pub fn objective_value(cooc: &CoocMatrix, space: &FeatureSpace, params: &FmParams, cfg: &TrainConfig) -> Result<f64, TrainError> {
    check_dims(cooc, space, params, cfg)?;
    let mut sampler = match cfg.loss {
        Loss::Logistic if cfg.negatives > 0 && !cooc.is_empty() => {
            Some(NegativeSampler::new(cooc, cfg.smoothing_exponent, cfg.seed, OBJECTIVE_STREAM)?)
        }
        _ => None,
    };
    let mut slots = Vec::new();
    let mut total = 0.0;
    for (i, j, o) in ordered_pairs(cooc) {
        let (y, p) = match cfg.loss {
            Loss::Logistic => (1.0, cfg.positive_weight(o)),
            Loss::Squared => (libm::log2(o), 1.0),
        };
        space.encode_into(i as usize, j as usize, cfg.include_context_side, &mut slots)?;
        total += p * loss_value(fm::predict(&slots, params), y, cfg.loss);
        if let Some(sampler) = sampler.as_mut() {
            for _ in 0..cfg.negatives {
                let neg = sampler.sample();
                space.encode_into(i as usize, neg as usize, cfg.include_context_side, &mut slots)?;
                total += loss_value(fm::predict(&slots, params), -1.0, cfg.loss);
            }
        }
    }
    Ok(total + cfg.lambda_bias * params.bias_sq_norm() + cfg.lambda_vector * params.vector_sq_norm())
}
