//! Implicit-feedback matrix factorization trained by alternating least
//! squares.
//!
//! Minimizes `Σ_ij c_ij (r_ij - u_iᵀ p_j)² + λ_u Σ‖u_i‖² + λ_p Σ‖p_j‖²` over
//! every cell of the user × track matrix, with `r_ij ∈ {0, 1}` and
//! `c_ij = 1 + α r_ij`. Each half-sweep solves every row exactly using the
//! shared Gram matrix of the fixed side plus a correction over the row's
//! observed cells, never materializing the dense confidence matrix.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::ingest::PositiveInteraction;
use crate::linalg::cholesky_solve;
use crate::vocab::Vocab;

const INIT_STREAM: u64 = 0xa15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlsError {
    #[error("no observed interactions")]
    NoInteractions,
    #[error("singular normal equations for {side} row {row}; use a positive regularization")]
    Singular { side: &'static str, row: usize },
    #[error("invalid ALS config: {0}")]
    InvalidConfig(&'static str),
    #[error("model shape does not match the interaction matrix")]
    ShapeMismatch,
}

/// Binary user × track matrix stored by rows and by columns.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionMatrix {
    users: Vocab,
    items: Vocab,
    by_user: Vec<Vec<u32>>,
    by_item: Vec<Vec<u32>>,
}

impl InteractionMatrix {
    /// Users and tracks are indexed in sorted id order; repeated pairs
    /// collapse.
    pub fn from_interactions(interactions: &[PositiveInteraction]) -> Self {
        let users: Vocab = interactions.iter().map(|i| i.user_id.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
        let items: Vocab = interactions.iter().map(|i| i.track_id.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
        let pairs = interactions.iter().map(|i| (i.user_id.as_str(), i.track_id.as_str()));
        Self::with_vocab(users, items, pairs)
    }

    /// Uses the given vocabularies, so users or tracks without any
    /// interaction get an all-zero row. Pairs naming unknown ids are
    /// ignored.
    pub fn with_vocab<'a>(users: Vocab, items: Vocab, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut cells: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
        for (u, t) in pairs {
            if let (Some(u), Some(t)) = (users.get(u), items.get(t)) {
                cells.entry(u).or_default().insert(t);
            }
        }
        let mut by_user = vec![Vec::new(); users.len()];
        let mut by_item = vec![Vec::new(); items.len()];
        for (u, ts) in cells {
            for t in ts {
                by_user[u as usize].push(t);
                by_item[t as usize].push(u);
            }
        }
        Self { users, items, by_user, by_item }
    }

    pub fn users(&self) -> &Vocab {
        &self.users
    }

    pub fn items(&self) -> &Vocab {
        &self.items
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_observed(&self) -> usize {
        self.by_user.iter().map(Vec::len).sum()
    }

    pub fn user_items(&self, user: usize) -> &[u32] {
        &self.by_user[user]
    }

    pub fn item_users(&self, item: usize) -> &[u32] {
        &self.by_item[item]
    }
}

/// Confidence scale that balances positive and negative mass: the
/// `|observed|` positive cells together carry `α |observed|` extra weight,
/// which equals the number of zero cells.
///
/// A fully dense matrix yields 0.
pub fn choose_alpha(m: &InteractionMatrix) -> Result<f64, AlsError> {
    let observed = m.num_observed();
    if observed == 0 {
        return Err(AlsError::NoInteractions);
    }
    let cells = m.num_users() as f64 * m.num_items() as f64;
    Ok((cells - observed as f64) / observed as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlsConfig {
    pub dim: usize,
    pub lambda_user: f64,
    pub lambda_item: f64,
    /// `None` picks the balancing value from [`choose_alpha`].
    pub alpha: Option<f64>,
    pub sweeps: usize,
    pub seed: u64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self { dim: 150, lambda_user: 0.1, lambda_item: 0.1, alpha: None, sweeps: 15, seed: 0 }
    }
}

impl AlsConfig {
    pub fn validate(&self) -> Result<(), AlsError> {
        if self.dim == 0 {
            return Err(AlsError::InvalidConfig("latent dimension must be at least 1"));
        }
        if !(self.lambda_user >= 0.0 && self.lambda_item >= 0.0) {
            return Err(AlsError::InvalidConfig("regularization must be non-negative"));
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(AlsError::InvalidConfig("alpha must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImplicitModel {
    k: usize,
    alpha: f64,
    lambda_user: f64,
    lambda_item: f64,
    user_vectors: Vec<f64>,
    item_vectors: Vec<f64>,
}

impl ImplicitModel {
    /// Vectors start i.i.d. uniform in `[-0.1, 0.1]`.
    pub fn new(num_users: usize, num_items: usize, k: usize, alpha: f64, lambda_user: f64, lambda_item: f64, seed: u64) -> Self {
        let mut rng = crate::seeded_rng(seed, INIT_STREAM);
        let mut draw = |n: usize| (0..n * k).map(|_| rng.gen_range(-0.1..=0.1)).collect::<Vec<f64>>();
        let user_vectors = draw(num_users);
        let item_vectors = draw(num_items);
        Self { k, alpha, lambda_user, lambda_item, user_vectors, item_vectors }
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn num_users(&self) -> usize {
        self.user_vectors.len() / self.k
    }

    pub fn num_items(&self) -> usize {
        self.item_vectors.len() / self.k
    }

    pub fn user_vector(&self, u: usize) -> &[f64] {
        &self.user_vectors[u * self.k..(u + 1) * self.k]
    }

    pub fn item_vector(&self, i: usize) -> &[f64] {
        &self.item_vectors[i * self.k..(i + 1) * self.k]
    }

    pub fn item_vectors(&self) -> &[f64] {
        &self.item_vectors
    }

    pub fn is_finite(&self) -> bool {
        self.user_vectors.iter().chain(&self.item_vectors).all(|x| x.is_finite())
    }

    fn check_shape(&self, m: &InteractionMatrix) -> Result<(), AlsError> {
        if self.num_users() != m.num_users() || self.num_items() != m.num_items() {
            return Err(AlsError::ShapeMismatch);
        }
        Ok(())
    }

    /// Full objective over every cell, computed as
    /// `Σ_u uᵀ (PᵀP) u + Σ_observed [(1+α)(1-x)² - x²] + penalties`.
    pub fn objective(&self, m: &InteractionMatrix) -> Result<f64, AlsError> {
        self.check_shape(m)?;
        let k = self.k;
        let gram = gram(&self.item_vectors, k);
        let mut total = 0.0;
        for u in 0..self.num_users() {
            let uv = self.user_vector(u);
            for a in 0..k {
                total += uv[a] * crate::dot(&gram[a * k..(a + 1) * k], uv);
            }
            for &t in m.user_items(u) {
                let x = crate::dot(uv, self.item_vector(t as usize));
                total += (1.0 + self.alpha) * (1.0 - x) * (1.0 - x) - x * x;
            }
        }
        let su: f64 = self.user_vectors.iter().map(|x| x * x).sum();
        let si: f64 = self.item_vectors.iter().map(|x| x * x).sum();
        Ok(total + self.lambda_user * su + self.lambda_item * si)
    }

    /// Exact minimizer for one user's vector with item vectors fixed.
    pub fn solve_user(&self, m: &InteractionMatrix, user: usize) -> Result<Vec<f64>, AlsError> {
        self.check_shape(m)?;
        let g = gram(&self.item_vectors, self.k);
        let mut out = vec![0.0; self.k];
        let mut a = vec![0.0; self.k * self.k];
        solve_row(&g, &self.item_vectors, m.user_items(user), self.k, self.alpha, self.lambda_user, &mut a, &mut out)
            .then_some(out)
            .ok_or(AlsError::Singular { side: "user", row: user })
    }

    /// Solves all users (items fixed), then all items (users fixed).
    /// Returns the objective after the sweep.
    pub fn sweep(&mut self, m: &InteractionMatrix) -> Result<f64, AlsError> {
        self.check_shape(m)?;
        let k = self.k;
        half_sweep(&mut self.user_vectors, &self.item_vectors, &m.by_user, k, self.alpha, self.lambda_user, "user")?;
        half_sweep(&mut self.item_vectors, &self.user_vectors, &m.by_item, k, self.alpha, self.lambda_item, "item")?;
        self.objective(m)
    }

    /// Same result as [`sweep`](Self::sweep) with row solves spread over the
    /// current rayon pool.
    #[cfg(feature = "parallel")]
    pub fn sweep_parallel(&mut self, m: &InteractionMatrix) -> Result<f64, AlsError> {
        self.check_shape(m)?;
        let k = self.k;
        par_half_sweep(&mut self.user_vectors, &self.item_vectors, &m.by_user, k, self.alpha, self.lambda_user, "user")?;
        par_half_sweep(&mut self.item_vectors, &self.user_vectors, &m.by_item, k, self.alpha, self.lambda_item, "item")?;
        self.objective(m)
    }
}

fn gram(vectors: &[f64], k: usize) -> Vec<f64> {
    let mut g = vec![0.0; k * k];
    for row in vectors.chunks_exact(k) {
        for a in 0..k {
            for b in a..k {
                g[a * k + b] += row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            g[a * k + b] = g[b * k + a];
        }
    }
    g
}

/// `(G + α Σ_obs p pᵀ + λ I) x = (1 + α) Σ_obs p`
#[allow(clippy::too_many_arguments)]
fn solve_row(gram: &[f64], fixed: &[f64], observed: &[u32], k: usize, alpha: f64, lambda: f64, a: &mut [f64], x: &mut [f64]) -> bool {
    a.copy_from_slice(gram);
    x.fill(0.0);
    for d in 0..k {
        a[d * k + d] += lambda;
    }
    for &j in observed {
        let p = &fixed[j as usize * k..(j as usize + 1) * k];
        for r in 0..k {
            let s = alpha * p[r];
            for c in 0..k {
                a[r * k + c] += s * p[c];
            }
            x[r] += (1.0 + alpha) * p[r];
        }
    }
    cholesky_solve(a, x, k)
}

fn half_sweep(
    out: &mut [f64],
    fixed: &[f64],
    rows: &[Vec<u32>],
    k: usize,
    alpha: f64,
    lambda: f64,
    side: &'static str,
) -> Result<(), AlsError> {
    let g = gram(fixed, k);
    let mut a = vec![0.0; k * k];
    for (row, (x, observed)) in out.chunks_exact_mut(k).zip(rows).enumerate() {
        if !solve_row(&g, fixed, observed, k, alpha, lambda, &mut a, x) {
            return Err(AlsError::Singular { side, row });
        }
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn par_half_sweep(
    out: &mut [f64],
    fixed: &[f64],
    rows: &[Vec<u32>],
    k: usize,
    alpha: f64,
    lambda: f64,
    side: &'static str,
) -> Result<(), AlsError> {
    use rayon::prelude::*;
    let g = gram(fixed, k);
    out.par_chunks_exact_mut(k).zip(rows.par_iter()).enumerate().try_for_each_init(
        || vec![0.0; k * k],
        |a, (row, (x, observed))| {
            if solve_row(&g, fixed, observed, k, alpha, lambda, a, x) {
                Ok(())
            } else {
                Err(AlsError::Singular { side, row })
            }
        },
    )
}

/// Outcome of [`fit`]: the model and the objective after each sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct AlsFit {
    pub model: ImplicitModel,
    pub objectives: Vec<f64>,
}

pub fn fit(m: &InteractionMatrix, cfg: &AlsConfig) -> Result<AlsFit, AlsError> {
    cfg.validate()?;
    let alpha = match cfg.alpha {
        Some(a) => a,
        None => choose_alpha(m)?,
    };
    let mut model = ImplicitModel::new(m.num_users(), m.num_items(), cfg.dim, alpha, cfg.lambda_user, cfg.lambda_item, cfg.seed);
    let objectives = (0..cfg.sweeps).map(|_| model.sweep(m)).collect::<Result<Vec<_>, _>>()?;
    Ok(AlsFit { model, objectives })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::String;

    fn grid(users: usize, items: usize, cells: &[(usize, usize)]) -> InteractionMatrix {
        let uv: Vocab = (0..users).map(|u| format!("u{u}")).collect::<Vec<String>>().iter().collect();
        let iv: Vocab = (0..items).map(|i| format!("t{i}")).collect::<Vec<String>>().iter().collect();
        let names: Vec<(String, String)> = cells.iter().map(|&(u, i)| (format!("u{u}"), format!("t{i}"))).collect();
        InteractionMatrix::with_vocab(uv, iv, names.iter().map(|(u, i)| (u.as_str(), i.as_str())))
    }

    #[test]
    fn alpha_balances_zero_cells() {
        let cells: Vec<_> = (0..20).map(|c| (c / 2, (c * 3) % 10)).collect();
        let m = grid(10, 10, &cells);
        assert_eq!(m.num_observed(), 20);
        assert_eq!(choose_alpha(&m).unwrap(), 4.0);
        assert_eq!(choose_alpha(&grid(2, 2, &[(0, 0), (1, 1)])).unwrap(), 1.0);
        let dense: Vec<_> = (0..3).flat_map(|u| (0..3).map(move |i| (u, i))).collect();
        assert_eq!(choose_alpha(&grid(3, 3, &dense)).unwrap(), 0.0);
        assert_eq!(choose_alpha(&grid(3, 3, &[])), Err(AlsError::NoInteractions));
    }

    #[test]
    fn empty_matrix_drives_vectors_to_zero() {
        let m = grid(4, 3, &[]);
        let mut model = ImplicitModel::new(4, 3, 2, 1.0, 0.5, 0.5, 7);
        let obj = model.sweep(&m).unwrap();
        assert!(model.user_vectors.iter().chain(&model.item_vectors).all(|&x| x == 0.0));
        assert_eq!(obj, 0.0);
    }

    #[test]
    fn zero_lambda_singular_system_is_an_error() {
        // k=2 with a single item: the item Gram matrix has rank 1
        let m = grid(2, 1, &[(0, 0)]);
        let mut model = ImplicitModel::new(2, 1, 2, 1.0, 0.0, 0.0, 1);
        assert!(matches!(model.sweep(&m), Err(AlsError::Singular { side: "user", .. })));
    }

    #[test]
    fn objective_matches_dense_sum() {
        let m = grid(3, 4, &[(0, 1), (1, 1), (1, 3), (2, 0)]);
        let model = ImplicitModel::new(3, 4, 2, 2.5, 0.3, 0.7, 5);
        let mut dense = 0.0;
        for u in 0..3 {
            for i in 0..4 {
                let r = if m.user_items(u).contains(&(i as u32)) { 1.0 } else { 0.0 };
                let c = 1.0 + 2.5 * r;
                let x = crate::dot(model.user_vector(u), model.item_vector(i));
                dense += c * (r - x) * (r - x);
            }
        }
        dense += 0.3 * model.user_vectors.iter().map(|x| x * x).sum::<f64>();
        dense += 0.7 * model.item_vectors.iter().map(|x| x * x).sum::<f64>();
        assert!((model.objective(&m).unwrap() - dense).abs() < 1e-12);
    }
}
