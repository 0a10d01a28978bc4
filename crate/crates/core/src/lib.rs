//! Item-item track embeddings learned by a factorization machine over a
//! sliding-window co-occurrence matrix.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! - [`ingest`]: merge raw listening events into positive user-track
//!   interactions, apply count floors and per-item sampling.
//! - [`cooc`]: slide a window along each user's interactions and count
//!   track-track co-occurrences.
//! - [`fm`]: the factorization machine (feature layout, prediction,
//!   gradients).
//! - [`trainer`]: SGD with negative sampling and per-vector AdaGrad.
//! - [`als`]: the implicit-feedback ALS baseline.
//! - [`eval`]: time-based splitting and binned mean percentile rank.
//! - [`embed`]: final track vectors and cosine top-N queries.
//! - [`synth`]: a clustered synthetic event generator for demos and tests.
//!
//! The crate is `no_std` and only needs `alloc`. IO, file formats and the
//! command line live in the companion `itemfm` crate.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod als;
pub mod cooc;
pub mod embed;
pub mod eval;
pub mod fm;
pub mod ingest;
mod linalg;
pub mod synth;
pub mod trainer;
pub mod vocab;

pub use vocab::Vocab;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for one named purpose. Distinct `stream`s derived
/// from the same seed never overlap.
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}
