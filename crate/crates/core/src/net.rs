//! Net rounding: partition the embedding space into `M` Voronoi cells
//! ("hyperwords") by k-means, then tabulate per-document cell counts.

use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::EmbeddingCorpus;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("need at least {needed} embeddings to fit {needed} centers, found {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("only {distinct} distinct embeddings, cannot place {m} distinct centers")]
    DegenerateData { distinct: usize, m: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid net: {0}")]
    Invalid(String),
}

/// Cluster centers defining the hyperword cells `R_1..R_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiNet {
    dim: usize,
    centers: Vec<f64>,
}

impl VoronoiNet {
    /// Wraps row-major `M x dim` centers. Centers must be finite and pairwise distinct.
    pub fn new(dim: usize, centers: Vec<f64>) -> Result<Self, NetError> {
        if dim == 0 || centers.is_empty() || !centers.len().is_multiple_of(dim) {
            return Err(NetError::Invalid(format!(
                "{} center values do not form rows of dimension {dim}",
                centers.len()
            )));
        }
        if centers.iter().any(|v| !v.is_finite()) {
            return Err(NetError::Invalid("non-finite center coordinate".into()));
        }
        let mut seen = HashSet::new();
        for row in centers.chunks_exact(dim) {
            if !seen.insert(row_key(row)) {
                return Err(NetError::Invalid("duplicate centers".into()));
            }
        }
        Ok(Self { dim, centers })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of hyperwords `M`.
    pub fn len(&self) -> usize {
        self.centers.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn center(&self, m: usize) -> &[f64] {
        &self.centers[m * self.dim..(m + 1) * self.dim]
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Index of the nearest center; ties go to the lowest index.
    pub fn assign(&self, z: &[f64]) -> Result<usize, NetError> {
        if z.len() != self.dim {
            return Err(NetError::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        Ok(nearest(&self.centers, self.dim, z).0)
    }

    /// Assigns every row of a row-major block.
    pub fn assign_rows(&self, rows: &[f64]) -> Vec<usize> {
        let dim = self.dim;
        rows.par_chunks_exact(dim)
            .map(|z| nearest(&self.centers, dim, z).0)
            .collect()
    }
}

/// Hyperword count matrix `X^net` (`M x n`), stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperwordCounts {
    n_rows: usize,
    counts: Vec<u64>,
    doc_totals: Vec<u64>,
}

impl HyperwordCounts {
    /// Builds from columns (one per document).
    pub fn from_columns(n_rows: usize, columns: &[Vec<u64>]) -> Self {
        let mut counts = Vec::with_capacity(n_rows * columns.len());
        let mut doc_totals = Vec::with_capacity(columns.len());
        for col in columns {
            assert_eq!(col.len(), n_rows, "column length must equal row count");
            counts.extend_from_slice(col);
            doc_totals.push(col.iter().sum());
        }
        Self {
            n_rows,
            counts,
            doc_totals,
        }
    }

    /// Builds from a column-major buffer.
    pub fn from_col_major(n_rows: usize, counts: Vec<u64>) -> Self {
        assert!(n_rows > 0 && counts.len().is_multiple_of(n_rows));
        let doc_totals = counts.chunks_exact(n_rows).map(|c| c.iter().sum()).collect();
        Self {
            n_rows,
            counts,
            doc_totals,
        }
    }

    /// Number of hyperwords `M`.
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Number of documents `n`.
    pub fn n_docs(&self) -> usize {
        self.doc_totals.len()
    }

    pub fn get(&self, m: usize, i: usize) -> u64 {
        self.counts[i * self.n_rows + m]
    }

    pub fn column(&self, i: usize) -> &[u64] {
        &self.counts[i * self.n_rows..(i + 1) * self.n_rows]
    }

    pub fn doc_totals(&self) -> &[u64] {
        &self.doc_totals
    }

    pub fn row_totals(&self) -> Vec<u64> {
        let mut totals = vec![0u64; self.n_rows];
        for col in self.counts.chunks_exact(self.n_rows) {
            for (t, c) in totals.iter_mut().zip(col) {
                *t += c;
            }
        }
        totals
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let cols: Vec<Vec<u64>> = (0..self.n_docs())
            .map(|i| rows.iter().map(|&m| self.get(m, i)).collect())
            .collect();
        Self::from_columns(rows.len(), &cols)
    }
}

/// Mini-batch k-means settings for [`fit_net`].
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansParams {
    /// Number of hyperwords `M`.
    pub m: usize,
    /// Independent restarts; the lowest full-data inertia wins.
    pub n_init: usize,
    /// Mini-batch size; `None` means 10% of all embeddings.
    pub batch_size: Option<usize>,
    pub max_iters: usize,
    /// Full Lloyd passes run after the mini-batch phase.
    pub lloyd_passes: usize,
    /// Stop once the smoothed batch inertia changes by less than this fraction.
    pub tol: f64,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(m: usize, seed: u64) -> Self {
        Self {
            m,
            n_init: 100,
            batch_size: None,
            max_iters: 100,
            lloyd_passes: 2,
            tol: 1e-4,
            seed,
        }
    }
}

/// Fits the Voronoi net by mini-batch k-means with random-point
/// initialization, keeping the best of `n_init` runs.
pub fn fit_net(corpus: &EmbeddingCorpus, params: &KMeansParams) -> Result<VoronoiNet, NetError> {
    fit_centers(corpus.embeddings(), corpus.dim(), params)
}

/// [`fit_net`] on a raw row-major point block.
pub fn fit_centers(points: &[f64], dim: usize, params: &KMeansParams) -> Result<VoronoiNet, NetError> {
    let n = points.len().checked_div(dim).unwrap_or(0);
    let m = params.m;
    if m == 0 || n < m {
        return Err(NetError::TooFewPoints {
            needed: m.max(1),
            found: n,
        });
    }
    let distinct = distinct_rows(points, dim, m);
    if distinct.len() < m {
        return Err(NetError::DegenerateData {
            distinct: distinct.len(),
            m,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let batch = params.batch_size.unwrap_or(n / 10).clamp(1, n);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for run in 0..params.n_init.max(1) {
        let centers = if m == 1 {
            mean_center(points, dim)
        } else {
            let mut centers = random_init(points, dim, m, &mut rng);
            minibatch(points, dim, &mut centers, batch, params, &mut rng);
            for _ in 0..params.lloyd_passes {
                lloyd_pass(points, dim, &mut centers);
            }
            centers
        };
        let inertia = inertia(points, dim, &centers);
        log::debug!("k-means run {run}: inertia {inertia:.6e}");
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, centers));
        }
        if m == 1 {
            break;
        }
    }
    let (_, mut centers) = best.expect("at least one run");
    dedupe_centers(points, dim, &mut centers, &distinct);
    VoronoiNet::new(dim, centers)
}

/// Builds `X^net`: `counts[m][i]` is the number of embeddings of document `i`
/// nearest to center `m`.
pub fn count_matrix(net: &VoronoiNet, corpus: &EmbeddingCorpus) -> Result<HyperwordCounts, NetError> {
    if corpus.dim() != net.dim() {
        return Err(NetError::DimensionMismatch {
            expected: net.dim(),
            got: corpus.dim(),
        });
    }
    let labels = net.assign_rows(corpus.embeddings());
    Ok(counts_from_labels(net.len(), corpus.doc_lengths(), &labels))
}

/// Tabulates precomputed per-row labels into a count matrix.
pub fn counts_from_labels(m: usize, doc_lengths: &[usize], labels: &[usize]) -> HyperwordCounts {
    let mut counts = vec![0u64; m * doc_lengths.len()];
    let mut row = 0;
    for (i, &len) in doc_lengths.iter().enumerate() {
        for &l in &labels[row..row + len] {
            counts[i * m + l] += 1;
        }
        row += len;
    }
    let doc_totals = doc_lengths.iter().map(|&l| l as u64).collect();
    HyperwordCounts {
        n_rows: m,
        counts,
        doc_totals,
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center and its squared distance; ties go to the lowest index.
#[inline]
fn nearest(centers: &[f64], dim: usize, z: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (m, c) in centers.chunks_exact(dim).enumerate() {
        let d = sq_dist(c, z);
        if d < best.1 {
            best = (m, d);
        }
    }
    best
}

fn row_key(row: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same point
    row.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// Indices of up to `limit` rows with pairwise distinct values (first occurrences).
fn distinct_rows(points: &[f64], dim: usize, limit: usize) -> Vec<usize> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, row) in points.chunks_exact(dim).enumerate() {
        if seen.insert(row_key(row)) {
            out.push(i);
            if out.len() >= limit {
                break;
            }
        }
    }
    out
}

fn mean_center(points: &[f64], dim: usize) -> Vec<f64> {
    let n = points.len() / dim;
    let mut c = vec![0.0; dim];
    for row in points.chunks_exact(dim) {
        for (a, v) in c.iter_mut().zip(row) {
            *a += v;
        }
    }
    c.iter_mut().for_each(|a| *a /= n as f64);
    c
}

fn random_init(points: &[f64], dim: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let mut centers = Vec::with_capacity(m * dim);
    let mut seen = HashSet::new();
    // Sample a few extra candidates so duplicated points rarely force a retry.
    let mut candidates = index::sample(rng, n, (m + m / 4 + 8).min(n)).into_vec();
    loop {
        for &i in &candidates {
            let row = &points[i * dim..(i + 1) * dim];
            if seen.insert(row_key(row)) {
                centers.extend_from_slice(row);
                if centers.len() == m * dim {
                    return centers;
                }
            }
        }
        candidates = (0..m).map(|_| rng.random_range(0..n)).collect();
    }
}

fn minibatch(
    points: &[f64],
    dim: usize,
    centers: &mut [f64],
    batch: usize,
    params: &KMeansParams,
    rng: &mut ChaCha8Rng,
) {
    let n = points.len() / dim;
    let m = centers.len() / dim;
    let mut counts = vec![0.0f64; m];
    let mut sums = vec![0.0f64; m * dim];
    let mut batch_counts = vec![0.0f64; m];
    let alpha = (2.0 * batch as f64 / (n as f64 + 1.0)).min(1.0);
    let mut ewa: Option<f64> = None;
    for _ in 0..params.max_iters {
        let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..n)).collect();
        let labels: Vec<(usize, f64)> = {
            let c: &[f64] = centers;
            idx.par_iter()
                .map(|&i| nearest(c, dim, &points[i * dim..(i + 1) * dim]))
                .collect()
        };
        sums.iter_mut().for_each(|s| *s = 0.0);
        batch_counts.iter_mut().for_each(|s| *s = 0.0);
        let mut batch_inertia = 0.0;
        for (&i, &(l, d)) in idx.iter().zip(&labels) {
            batch_inertia += d;
            batch_counts[l] += 1.0;
            for (s, v) in sums[l * dim..(l + 1) * dim]
                .iter_mut()
                .zip(&points[i * dim..(i + 1) * dim])
            {
                *s += v;
            }
        }
        for l in 0..m {
            if batch_counts[l] == 0.0 {
                continue;
            }
            let total = counts[l] + batch_counts[l];
            for (c, s) in centers[l * dim..(l + 1) * dim]
                .iter_mut()
                .zip(&sums[l * dim..(l + 1) * dim])
            {
                *c = (*c * counts[l] + s) / total;
            }
            counts[l] = total;
        }
        let batch_inertia = batch_inertia / batch as f64;
        let smoothed = match ewa {
            None => batch_inertia,
            Some(prev) => prev * (1.0 - alpha) + batch_inertia * alpha,
        };
        if let Some(prev) = ewa {
            if prev > 0.0 && ((prev - smoothed) / prev).abs() < params.tol {
                break;
            }
        }
        ewa = Some(smoothed);
    }
}

/// One full assignment + update pass. Empty cells are reseeded at the point
/// farthest from its assigned center.
fn lloyd_pass(points: &[f64], dim: usize, centers: &mut [f64]) {
    let m = centers.len() / dim;
    let labels: Vec<(usize, f64)> = {
        let c: &[f64] = centers;
        points
            .par_chunks_exact(dim)
            .map(|z| nearest(c, dim, z))
            .collect()
    };
    let mut sums = vec![0.0; m * dim];
    let mut counts = vec![0usize; m];
    for (row, &(l, _)) in points.chunks_exact(dim).zip(&labels) {
        counts[l] += 1;
        for (s, v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(row) {
            *s += v;
        }
    }
    let empty: Vec<usize> = (0..m).filter(|&l| counts[l] == 0).collect();
    if !empty.is_empty() {
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by(|&a, &b| labels[b].1.total_cmp(&labels[a].1).then(a.cmp(&b)));
        let mut taken = order.into_iter();
        for l in empty {
            let Some(i) = taken.by_ref().find(|&i| counts[labels[i].0] > 1) else {
                break;
            };
            let row = &points[i * dim..(i + 1) * dim];
            let from = labels[i].0;
            counts[from] -= 1;
            for (s, v) in sums[from * dim..(from + 1) * dim].iter_mut().zip(row) {
                *s -= v;
            }
            counts[l] = 1;
            sums[l * dim..(l + 1) * dim].copy_from_slice(row);
        }
    }
    for l in 0..m {
        if counts[l] > 0 {
            for (c, s) in centers[l * dim..(l + 1) * dim]
                .iter_mut()
                .zip(&sums[l * dim..(l + 1) * dim])
            {
                *c = s / counts[l] as f64;
            }
        }
    }
}

/// Within-cluster sum of squares over all points.
pub fn inertia(points: &[f64], dim: usize, centers: &[f64]) -> f64 {
    let d: Vec<f64> = points
        .par_chunks_exact(dim)
        .map(|z| nearest(centers, dim, z).1)
        .collect();
    d.iter().sum()
}

/// Replaces any coincident centers by unused distinct data points so the
/// returned net has exactly `M` distinct cells.
fn dedupe_centers(points: &[f64], dim: usize, centers: &mut [f64], distinct: &[usize]) {
    let m = centers.len() / dim;
    let mut seen = HashSet::new();
    let mut dup = Vec::new();
    for l in 0..m {
        if !seen.insert(row_key(&centers[l * dim..(l + 1) * dim])) {
            dup.push(l);
        }
    }
    let mut pool = distinct.iter();
    for l in dup {
        for &i in pool.by_ref() {
            let row = &points[i * dim..(i + 1) * dim];
            if seen.insert(row_key(row)) {
                centers[l * dim..(l + 1) * dim].copy_from_slice(row);
                break;
            }
        }
    }
}
