//! Bandwidth selection by maximizing the kNN entropy of the relevance cloud.
//!
//! For each candidate `h`, the relevance vectors `B(z)` of a subsample of
//! observed embeddings are treated as points in a `K - 1` dimensional simplex
//! and scored by the `h`-dependent part of the Kozachenko-Leonenko estimate,
//! `(D / n) sum_i log eps_i`, with `eps_i` the distance to the k-th neighbor.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::EmbeddingCorpus;
use crate::density::{DensityError, DensityModel, Kernel};
use crate::kdtree::KdTree;
use crate::tscore::TopicFit;

pub const DEFAULT_SUBSAMPLE: usize = 50_000;
pub const DEFAULT_NEIGHBORS: usize = 25;
/// Neighbor distances are floored here before taking logs.
pub const DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SelectError {
    #[error("need more than k = {k} points, found {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("bandwidth grid is empty")]
    EmptyGrid,
    #[error("bandwidth grid must be positive and strictly increasing")]
    InvalidGrid,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Density(#[from] DensityError),
}

/// Entropy score per candidate bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyCurve {
    pub bandwidths: Vec<f64>,
    pub scores: Vec<f64>,
    pub best: f64,
}

/// `(D / n) sum_i log eps_i` over a row-major `n x D` block, with exact
/// k-th neighbor distances (self excluded).
pub fn knn_entropy_term(points: &[f64], dim: usize, k: usize) -> Result<f64, SelectError> {
    let n = points.len().checked_div(dim).unwrap_or(0);
    if k == 0 || n <= k {
        return Err(SelectError::TooFewPoints { n, k });
    }
    let tree = KdTree::build(points, dim);
    let sum_log: f64 = (0..n)
        .map(|i| {
            let eps = tree.kth_neighbor_distance(i, k);
            eps.max(DISTANCE_FLOOR).ln()
        })
        .sum();
    Ok(dim as f64 / n as f64 * sum_log)
}

/// Geometric grid of `count` bandwidths spanning `[lo, hi]` times the median
/// pairwise distance between net centers.
pub fn default_grid(fit: &TopicFit, count: usize, lo: f64, hi: f64) -> Vec<f64> {
    let net = &fit.net;
    let m = net.len();
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for a in 0..m {
        for b in a + 1..m {
            dists.push(crate::net::sq_dist(net.center(a), net.center(b)).sqrt());
        }
    }
    let median = if dists.is_empty() {
        1.0
    } else {
        dists.sort_by(f64::total_cmp);
        let mid = dists.len() / 2;
        if dists.len() % 2 == 0 {
            0.5 * (dists[mid - 1] + dists[mid])
        } else {
            dists[mid]
        }
    };
    geometric_grid(lo * median, hi * median, count)
}

pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|i| lo * (ratio * i as f64).exp()).collect()
}

/// Scores every bandwidth in `grid` and returns the maximizer (ties go to
/// the smaller bandwidth).
pub fn select_bandwidth(
    fit: &TopicFit,
    corpus: &EmbeddingCorpus,
    grid: &[f64],
    subsample: usize,
    k: usize,
    seed: u64,
) -> Result<EntropyCurve, SelectError> {
    select_bandwidth_with(fit, Kernel::gaussian(), corpus, grid, subsample, k, seed)
}

pub fn select_bandwidth_with(
    fit: &TopicFit,
    kernel: Kernel,
    corpus: &EmbeddingCorpus,
    grid: &[f64],
    subsample: usize,
    k: usize,
    seed: u64,
) -> Result<EntropyCurve, SelectError> {
    if grid.is_empty() {
        return Err(SelectError::EmptyGrid);
    }
    if grid[0] <= 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SelectError::InvalidGrid);
    }
    let total = corpus.total_len();
    if total == 0 {
        return Err(SelectError::EmptyCorpus);
    }
    let mut rows: Vec<usize> = if subsample >= total {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        index::sample(&mut rng, total, subsample).into_vec()
    };
    rows.sort_unstable();
    let dim = corpus.dim();
    let mut points = Vec::with_capacity(rows.len() * dim);
    for &r in &rows {
        points.extend_from_slice(corpus.embedding(r));
    }

    let n_topics = fit.k();
    let base = DensityModel::new(fit.clone(), grid[0], kernel)?;
    let mut scores = Vec::with_capacity(grid.len());
    for &h in grid {
        let model = base.with_bandwidth(h)?;
        let b = model.relevance_at(&points)?;
        // drop the last coordinate: the simplex is K - 1 dimensional
        let cloud: Vec<f64> = b
            .chunks_exact(n_topics)
            .flat_map(|row| row[..n_topics - 1].iter().copied())
            .collect();
        let score = knn_entropy_term(&cloud, n_topics - 1, k)?;
        log::info!("bandwidth {h:.6}: entropy term {score:.6}");
        scores.push(score);
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(EntropyCurve {
        bandwidths: grid.to_vec(),
        scores,
        best: grid[best],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_unit_spacing() {
        let t = knn_entropy_term(&[0.0, 1.0, 2.0], 1, 1).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn too_few_points() {
        assert_eq!(
            knn_entropy_term(&[0.0, 1.0], 1, 2),
            Err(SelectError::TooFewPoints { n: 2, k: 2 })
        );
    }

    #[test]
    fn duplicates_are_floored() {
        let t = knn_entropy_term(&[1.0, 1.0, 5.0], 1, 1).unwrap();
        let expected = (2.0 * DISTANCE_FLOOR.ln() + 4f64.ln()) / 3.0;
        assert!((t - expected).abs() < 1e-12);
    }

    #[test]
    fn grid_is_geometric() {
        let g = geometric_grid(0.5, 8.0, 5);
        for (a, b) in g.iter().zip([0.5, 1.0, 2.0, 4.0, 8.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
