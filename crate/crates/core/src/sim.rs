//! Synthetic corpora with Gaussian-mixture topic densities.
//!
//! Each topic density is `A_k = sum_j a_jk N(mu_j, I_d)` over a vocabulary of
//! `p` words, so every simulated token carries both a word id and an
//! embedding. The topic matrix is built so that words whose squared center
//! coordinates concentrate on one topic axis (share at least `tau`) become
//! anchor words.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EmbeddingCorpus;
use crate::density::DensityModel;

/// Largest `K` for exhaustive permutation alignment.
pub const MAX_ALIGN_TOPICS: usize = 10;
/// PGD stops once the column-sum objective drops below this.
const PGD_TARGET: f64 = 1e-20;
/// Objective above which the topic-matrix solve is reported as failed.
pub const PGD_TOLERANCE: f64 = 1e-10;
const PGD_MAX_STEPS: usize = 200_000;
const PGD_RESTARTS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("projected gradient descent stalled at objective {0:e}")]
    PgdNotConverged(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("K = {0} is too large for exhaustive alignment")]
    KTooLargeForExhaustive(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Vocabulary size.
    pub p: usize,
    /// Number of documents.
    pub n: usize,
    /// Expected document length.
    #[serde(rename = "N")]
    pub doc_len: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    /// Pure documents per topic.
    pub rho: usize,
    /// Anchor threshold in (0.5, 1).
    pub tau: f64,
    pub seed: u64,
}

impl SimConfig {
    /// The baseline configuration `(p, n, N, K, tau, rho) = (2500, 1000, 200, 3, 0.8, 5)`
    /// with `d = K`.
    pub fn experiment1(seed: u64) -> Self {
        Self {
            p: 2500,
            n: 1000,
            doc_len: 200.0,
            k: 3,
            d: 3,
            rho: 5,
            tau: 0.8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.k == 0 || self.p == 0 {
            return bad("p and K must be positive".into());
        }
        if self.d < self.k {
            return bad(format!("d = {} must be at least K = {}", self.d, self.k));
        }
        if self.k * self.rho > self.n {
            return bad(format!("K * rho = {} exceeds n = {}", self.k * self.rho, self.n));
        }
        if !(self.tau > 0.5 && self.tau < 1.0) {
            return bad(format!("tau = {} outside (0.5, 1)", self.tau));
        }
        if !(self.doc_len >= 0.0 && self.doc_len.is_finite()) {
            return bad(format!("N = {} must be nonnegative", self.doc_len));
        }
        Ok(())
    }
}

/// Ground truth of one simulated model.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    /// `p x d` mixture centers.
    pub mu: DMatrix<f64>,
    /// `p x K` column-stochastic topic matrix.
    pub a: DMatrix<f64>,
    /// `K x n` document weights.
    pub w: DMatrix<f64>,
    /// Anchor-thresholded shares `b~` (`K x p`).
    pub b_tilde: DMatrix<f64>,
}

impl SimTruth {
    pub fn k(&self) -> usize {
        self.a.ncols()
    }

    pub fn p(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.mu.ncols()
    }

    /// Words whose `b~` column is one-hot, with their topic.
    pub fn anchor_words(&self) -> Vec<(usize, usize)> {
        (0..self.p())
            .filter_map(|j| {
                let col = self.b_tilde.column(j);
                let ones = col.iter().filter(|&&v| v == 1.0).count();
                let zeros = col.iter().filter(|&&v| v == 0.0).count();
                (ones == 1 && zeros == col.len() - 1).then(|| (j, col.iamax()))
            })
            .collect()
    }

    /// True densities `A_k(mu_j)`, returned as `K` columns of length `p`.
    pub fn densities_at_centers(&self) -> Vec<Vec<f64>> {
        let (p, d, k) = (self.p(), self.d(), self.k());
        let norm = (2.0 * PI).powf(-0.5 * d as f64);
        let mut out = vec![vec![0.0; p]; k];
        let rows: Vec<Vec<f64>> = (0..p).map(|j| self.mu.row(j).iter().copied().collect()).collect();
        for j in 0..p {
            for jp in 0..p {
                let sq: f64 = rows[j].iter().zip(&rows[jp]).map(|(a, b)| (a - b) * (a - b)).sum();
                let phi = norm * (-0.5 * sq).exp();
                for (t, col) in out.iter_mut().enumerate() {
                    col[j] += self.a[(jp, t)] * phi;
                }
            }
        }
        out
    }

    pub fn topic_columns(&self) -> Vec<Vec<f64>> {
        (0..self.k())
            .map(|t| self.a.column(t).iter().copied().collect())
            .collect()
    }
}

/// Serialized ground truth written next to a simulated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub cfg: SimConfig,
    pub mu: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl TruthFile {
    pub fn new(cfg: &SimConfig, truth: &SimTruth) -> Self {
        Self {
            cfg: cfg.clone(),
            mu: rows(&truth.mu),
            a: rows(&truth.a),
            w: rows(&truth.w),
        }
    }

    pub fn to_truth(&self) -> Result<SimTruth, SimError> {
        let shape = |r: &[Vec<f64>], nrows: usize, ncols: usize, what: &str| {
            if r.len() != nrows || r.iter().any(|row| row.len() != ncols) {
                Err(SimError::DimensionMismatch(format!("{what} must be {nrows} x {ncols}")))
            } else {
                Ok(DMatrix::from_fn(nrows, ncols, |i, j| r[i][j]))
            }
        };
        let c = &self.cfg;
        let mu = shape(&self.mu, c.p, c.d, "mu")?;
        let a = shape(&self.a, c.p, c.k, "A")?;
        let w = shape(&self.w, c.k, c.n, "W")?;
        let b_tilde = anchor_shares(&mu, c.k, c.tau);
        Ok(SimTruth { mu, a, w, b_tilde })
    }
}

/// Draws `W`, the mixture centers and the topic matrix.
pub fn gen_truth(cfg: &SimConfig) -> Result<SimTruth, SimError> {
    cfg.validate()?;
    let (p, n, k, d) = (cfg.p, cfg.n, cfg.k, cfg.d);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut w = DMatrix::zeros(k, n);
    for i in 0..n {
        if i < k * cfg.rho {
            w[(i / cfg.rho, i)] = 1.0;
        } else {
            let draws: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let s: f64 = draws.iter().sum();
            for (t, v) in draws.iter().enumerate() {
                w[(t, i)] = v / s;
            }
        }
    }

    let radius = (d as f64).sqrt();
    let mut mu = DMatrix::zeros(p, d);
    for j in 0..p {
        let raw: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm <= radius { 1.0 } else { radius / norm };
        for (c, v) in raw.iter().enumerate() {
            mu[(j, c)] = v * scale;
        }
    }

    let b_tilde = anchor_shares(&mu, k, cfg.tau);
    let f = solve_word_scales(&b_tilde, &mut rng)?;
    let mut a = DMatrix::from_fn(p, k, |j, t| f[j] * b_tilde[(t, j)]);
    // the objective leaves column sums within ~1e-10 of one; make them exact
    for mut col in a.column_iter_mut() {
        let s = col.sum();
        col /= s;
    }
    Ok(SimTruth { mu, a, w, b_tilde })
}

/// `b_{k,j} = mu_j(k)^2 / sum_{l<K} mu_j(l)^2`, made one-hot where the
/// largest share reaches `tau`.
pub fn anchor_shares(mu: &DMatrix<f64>, k: usize, tau: f64) -> DMatrix<f64> {
    let p = mu.nrows();
    let mut b = DMatrix::zeros(k, p);
    for j in 0..p {
        let sq: Vec<f64> = (0..k).map(|t| mu[(j, t)] * mu[(j, t)]).collect();
        let s: f64 = sq.iter().sum();
        let shares: Vec<f64> = if s > 0.0 {
            sq.iter().map(|v| v / s).collect()
        } else {
            vec![1.0 / k as f64; k]
        };
        let kappa = (0..k)
            .max_by(|&x, &y| shares[x].total_cmp(&shares[y]).then(y.cmp(&x)))
            .unwrap();
        for t in 0..k {
            b[(t, j)] = if shares[kappa] >= tau {
                f64::from(t == kappa)
            } else {
                shares[t]
            };
        }
    }
    b
}

/// `sum_k (sum_j f_j b_kj - 1)^2`.
pub fn scale_objective(b: &DMatrix<f64>, f: &[f64]) -> f64 {
    let r = b * nalgebra::DVector::from_column_slice(f);
    r.iter().map(|v| (v - 1.0) * (v - 1.0)).sum()
}

/// Nonnegative `f` with `b f = 1` by projected gradient descent with step
/// `1 / L`, `L = 2 ||b b'||`, restarting from a fresh random point if stalled.
pub fn solve_word_scales(b: &DMatrix<f64>, rng: &mut impl Rng) -> Result<Vec<f64>, SimError> {
    let (k, p) = b.shape();
    let bbt = b * b.transpose();
    let lipschitz = 2.0 * spectral_norm_sym(&bbt);
    let step = 1.0 / lipschitz;
    let bt = b.transpose();
    let ones = nalgebra::DVector::from_element(k, 1.0);
    let mut best = f64::INFINITY;
    let mut best_f = Vec::new();
    for _ in 0..PGD_RESTARTS {
        let mut f = nalgebra::DVector::from_fn(p, |_, _| k as f64 / p as f64 * rng.random_range(0.5..1.5));
        let mut obj = f64::INFINITY;
        for _ in 0..PGD_MAX_STEPS {
            let resid = b * &f - &ones;
            obj = resid.norm_squared();
            if obj < PGD_TARGET {
                break;
            }
            let grad = &bt * resid * 2.0;
            f -= grad * step;
            f.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        if obj < best {
            best = obj;
            best_f = f.iter().copied().collect();
        }
        if best < PGD_TOLERANCE {
            return Ok(best_f);
        }
    }
    Err(SimError::PgdNotConverged(best))
}

fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut v = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let next = m * &v;
        let norm = next.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = next / norm;
        let converged = (norm - lambda).abs() <= 1e-12 * norm;
        lambda = norm;
        v = next;
        if converged {
            break;
        }
    }
    // power iteration approaches from below; a small margin keeps 1/L safe
    lambda * 1.01
}

/// A simulated corpus and its classical word-count matrix (`p x n`).
#[derive(Debug, Clone)]
pub struct SimSample {
    pub corpus: EmbeddingCorpus,
    pub word_counts: crate::net::HyperwordCounts,
    /// Vocabulary index of each token, in corpus order.
    pub word_ids: Vec<usize>,
}

/// Draws `N_i ~ Poisson(N)` tokens per document, words from `A w_i` and
/// embeddings from `N(mu_word, I_d)`. Tokens are named `w<j>`.
pub fn sample_corpus(truth: &SimTruth, cfg: &SimConfig) -> SimSample {
    let (p, d) = (truth.p(), truth.d());
    let n = truth.w.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let poisson = (cfg.doc_len > 0.0).then(|| Poisson::new(cfg.doc_len).expect("positive rate"));

    let mut doc_lengths = Vec::with_capacity(n);
    let mut embeddings = Vec::new();
    let mut word_ids = Vec::new();
    let mut counts = vec![0u64; p * n];
    for i in 0..n {
        let len = poisson.as_ref().map_or(0, |dist| dist.sample(&mut rng) as usize);
        doc_lengths.push(len);
        if len == 0 {
            continue;
        }
        let gamma: Vec<f64> = (0..p)
            .map(|j| (0..truth.k()).map(|t| truth.a[(j, t)] * truth.w[(t, i)]).sum::<f64>().max(0.0))
            .collect();
        let words = WeightedIndex::new(&gamma).expect("word distribution has mass");
        for _ in 0..len {
            let j = words.sample(&mut rng);
            word_ids.push(j);
            counts[i * p + j] += 1;
            for c in 0..d {
                let e: f64 = StandardNormal.sample(&mut rng);
                embeddings.push(truth.mu[(j, c)] + e);
            }
        }
    }
    let tokens = word_ids.iter().map(|j| format!("w{j}")).collect();
    let corpus = EmbeddingCorpus::new(d, doc_lengths, embeddings, Some(tokens))
        .expect("simulated corpus is well formed");
    SimSample {
        corpus,
        word_counts: crate::net::HyperwordCounts::from_col_major(p, counts),
        word_ids,
    }
}

/// How the density loss is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossScale {
    /// `lambda = (2 pi)^(-d/2)`, the peak of one mixture component.
    GaussianPeak,
    /// `lambda = (1/K) sum_k sum_j A_k(mu_j)`, the average total true
    /// density over the evaluation points. Equals the Gaussian peak when the
    /// centers are far apart.
    #[default]
    TruthMass,
}

/// `(2 pi)^(-d/2)`.
pub fn density_loss_scale(d: usize) -> f64 {
    (2.0 * PI).powf(-0.5 * d as f64)
}

/// The normalizer `lambda` for true densities `truth` (K columns over the
/// evaluation points) in dimension `d`.
pub fn loss_lambda(scale: LossScale, truth: &[Vec<f64>], d: usize) -> f64 {
    match scale {
        LossScale::GaussianPeak => density_loss_scale(d),
        LossScale::TruthMass => truth.iter().flatten().sum::<f64>() / truth.len() as f64,
    }
}

/// Which loss an alignment minimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// `l1` loss on density values divided by `lambda`.
    Trace { lambda: f64 },
    /// Plain `l1` loss on topic vectors.
    TScore,
}

/// Density estimates `A_hat_k(mu_j)`, as `K` columns of length `p`.
pub fn model_densities_at_centers(model: &DensityModel, truth: &SimTruth) -> Result<Vec<Vec<f64>>, SimError> {
    if model.dim() != truth.d() {
        return Err(SimError::DimensionMismatch(format!(
            "model dim {} vs truth dim {}",
            model.dim(),
            truth.d()
        )));
    }
    let k = model.k();
    let mut cols = vec![vec![0.0; truth.p()]; k];
    for j in 0..truth.p() {
        let z: Vec<f64> = truth.mu.row(j).iter().copied().collect();
        let dens = model
            .estimate_density(&z)
            .map_err(|e| SimError::DimensionMismatch(e.to_string()))?;
        for (t, v) in dens.into_iter().enumerate() {
            cols[t][j] = v;
        }
    }
    Ok(cols)
}

/// `sum_k sum_j |est[perm[k]][j] - truth[k][j]|`.
pub fn l1_aligned(est: &[Vec<f64>], truth: &[Vec<f64>], perm: &[usize]) -> Result<f64, SimError> {
    if est.len() != truth.len() || perm.len() != truth.len() {
        return Err(SimError::DimensionMismatch(format!(
            "{} estimated topics, {} true topics, permutation of {}",
            est.len(),
            truth.len(),
            perm.len()
        )));
    }
    let mut total = 0.0;
    for (k, t) in truth.iter().enumerate() {
        let e = &est[perm[k]];
        if e.len() != t.len() {
            return Err(SimError::DimensionMismatch(format!(
                "topic length {} vs {}",
                e.len(),
                t.len()
            )));
        }
        total += e.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(total)
}

/// Density loss from precomputed estimate and truth values at the centers.
pub fn loss_trace_values(est: &[Vec<f64>], truth: &[Vec<f64>], lambda: f64, perm: &[usize]) -> Result<f64, SimError> {
    Ok(l1_aligned(est, truth, perm)? / lambda)
}

/// `(1 / lambda) sum_k sum_j |A_hat_{perm(k)}(mu_j) - A_k(mu_j)|`.
pub fn loss_trace(model: &DensityModel, truth: &SimTruth, perm: &[usize], scale: LossScale) -> Result<f64, SimError> {
    if model.k() != truth.k() {
        return Err(SimError::DimensionMismatch(format!(
            "model has {} topics, truth has {}",
            model.k(),
            truth.k()
        )));
    }
    let est = model_densities_at_centers(model, truth)?;
    let truth_dens = truth.densities_at_centers();
    let lambda = loss_lambda(scale, &truth_dens, truth.d());
    loss_trace_values(&est, &truth_dens, lambda, perm)
}

/// `sum_k ||A_hat_{perm(k)} - A_k||_1` for a `p x K` word-topic estimate.
pub fn loss_tscore(a_hat: &DMatrix<f64>, truth: &SimTruth, perm: &[usize]) -> Result<f64, SimError> {
    if a_hat.shape() != truth.a.shape() {
        return Err(SimError::DimensionMismatch(format!(
            "estimate {:?} vs truth {:?}",
            a_hat.shape(),
            truth.a.shape()
        )));
    }
    let est: Vec<Vec<f64>> = a_hat.column_iter().map(|c| c.iter().copied().collect()).collect();
    l1_aligned(&est, &truth.topic_columns(), perm)
}

/// Exhaustive search for the permutation `perm` (truth topic `k` matched
/// with estimated topic `perm[k]`) minimizing the loss.
pub fn align_topics(est: &[Vec<f64>], truth: &[Vec<f64>], kind: LossKind) -> Result<Vec<usize>, SimError> {
    use itertools::Itertools;
    let k = truth.len();
    if k > MAX_ALIGN_TOPICS {
        return Err(SimError::KTooLargeForExhaustive(k));
    }
    if est.len() != k {
        return Err(SimError::DimensionMismatch(format!(
            "{} estimated topics vs {k} true topics",
            est.len()
        )));
    }
    let scale = match kind {
        LossKind::Trace { lambda } => lambda,
        LossKind::TScore => 1.0,
    };
    // pairwise costs make each permutation an O(K) sum
    let mut cost = vec![vec![0.0; k]; k];
    for (t, truth_col) in truth.iter().enumerate() {
        for (e, est_col) in est.iter().enumerate() {
            if est_col.len() != truth_col.len() {
                return Err(SimError::DimensionMismatch("topic lengths differ".into()));
            }
            cost[t][e] = est_col.iter().zip(truth_col).map(|(a, b)| (a - b).abs()).sum::<f64>() / scale;
        }
    }
    let mut best = (f64::INFINITY, (0..k).collect::<Vec<_>>());
    for perm in (0..k).permutations(k) {
        let total: f64 = perm.iter().enumerate().map(|(t, &e)| cost[t][e]).sum();
        if total < best.0 {
            best = (total, perm);
        }
    }
    Ok(best.1)
}
