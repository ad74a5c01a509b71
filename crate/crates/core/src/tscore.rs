//! Topic-SCORE on hyperword counts.
//!
//! The pipeline is: normalize counts, take the leading `K` left singular
//! vectors, divide vectors `2..K` entrywise by the first (SCORE ratios), find
//! the `K` simplex vertices by successive projections, express every row in
//! barycentric coordinates, and map those back to topic vectors.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{randomized_svd, singular_spectrum, RsvdParams};
use crate::net::{HyperwordCounts, VoronoiNet};

/// Floor applied to the first singular vector before taking ratios.
pub const XI1_FLOOR: f64 = 1e-12;
/// Relative threshold below which `sigma_K` is treated as zero.
pub const RANK_TOL: f64 = 1e-12;
/// Residual norm below which a lifted vertex candidate is affinely dependent.
pub const SIMPLEX_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum TopicScoreError {
    #[error("document {0} has no counts")]
    ZeroColumn(usize),
    #[error("hyperword {0} has no counts")]
    ZeroRow(usize),
    #[error("K = {k} exceeds min(M, n) = {limit}")]
    KTooLarge { k: usize, limit: usize },
    #[error("K = {0} is below the minimum of 2")]
    KTooSmall(usize),
    #[error("rank deficient: sigma_K = {sigma_k:e} below {RANK_TOL:e} x sigma_1 = {sigma_1:e}")]
    RankDeficient { sigma_k: f64, sigma_1: f64 },
    #[error("degenerate simplex: vertices are affinely dependent")]
    DegenerateSimplex,
    #[error("need at least {k} rows for vertex hunting, found {rows}")]
    TooFewRows { k: usize, rows: usize },
    #[error("counts have {counts} hyperwords but the net has {net}")]
    NetMismatch { counts: usize, net: usize },
    #[error("max_rank {max_rank} exceeds min(M, n) = {limit}")]
    RankTooLarge { max_rank: usize, limit: usize },
}

/// Pre-SVD normalization of the count matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Column frequencies `X diag(1'X)^{-1}`.
    #[default]
    Frequency,
    /// Row scaling `diag(n^{-1} X 1)^{-1/2} X`.
    Row,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TopicScoreOptions {
    pub normalization: Normalization,
    pub svd: RsvdParams,
}

/// Output of [`topic_score`], including the spectral intermediates.
#[derive(Debug, Clone)]
pub struct TopicFit {
    /// `M x K`, columns on the probability simplex.
    pub a_net: DMatrix<f64>,
    /// Full singular spectrum of the normalized matrix, nonincreasing.
    pub singular_values: Vec<f64>,
    /// First left singular vector, sign-fixed and floored to be positive.
    pub xi1: Vec<f64>,
    /// SCORE ratio matrix `R` (`M x (K-1)`).
    pub ratios: DMatrix<f64>,
    /// Simplex vertices (`K x (K-1)`).
    pub vertices: DMatrix<f64>,
    /// Row indices of `R` chosen as vertices.
    pub vertex_rows: Vec<usize>,
    /// Clipped barycentric coordinates (`M x K`).
    pub pi: DMatrix<f64>,
    pub net: VoronoiNet,
}

impl TopicFit {
    /// Number of topics `K`.
    pub fn k(&self) -> usize {
        self.a_net.ncols()
    }

    /// Number of hyperwords `M`.
    pub fn m(&self) -> usize {
        self.a_net.nrows()
    }

    /// Topic matrix columns as vectors.
    pub fn topic_columns(&self) -> Vec<Vec<f64>> {
        (0..self.k())
            .map(|k| self.a_net.column(k).iter().copied().collect())
            .collect()
    }
}

pub fn normalize_counts(x: &HyperwordCounts, mode: Normalization) -> Result<DMatrix<f64>, TopicScoreError> {
    let (m, n) = (x.n_rows(), x.n_docs());
    match mode {
        Normalization::Frequency => {
            if let Some(i) = x.doc_totals().iter().position(|&t| t == 0) {
                return Err(TopicScoreError::ZeroColumn(i));
            }
            Ok(DMatrix::from_fn(m, n, |r, c| {
                x.get(r, c) as f64 / x.doc_totals()[c] as f64
            }))
        }
        Normalization::Row => {
            let totals = x.row_totals();
            if let Some(r) = totals.iter().position(|&t| t == 0) {
                return Err(TopicScoreError::ZeroRow(r));
            }
            let scale: Vec<f64> = totals
                .iter()
                .map(|&t| (t as f64 / n as f64).sqrt().recip())
                .collect();
            Ok(DMatrix::from_fn(m, n, |r, c| x.get(r, c) as f64 * scale[r]))
        }
    }
}

/// Estimates the hyperword topic matrix `A^net` with default options.
pub fn topic_score(x: &HyperwordCounts, k: usize, net: &VoronoiNet) -> Result<TopicFit, TopicScoreError> {
    topic_score_with(x, k, net, &TopicScoreOptions::default())
}

pub fn topic_score_with(
    x: &HyperwordCounts,
    k: usize,
    net: &VoronoiNet,
    opts: &TopicScoreOptions,
) -> Result<TopicFit, TopicScoreError> {
    let (m, n) = (x.n_rows(), x.n_docs());
    if net.len() != m {
        return Err(TopicScoreError::NetMismatch {
            counts: m,
            net: net.len(),
        });
    }
    if k < 2 {
        return Err(TopicScoreError::KTooSmall(k));
    }
    if k > m.min(n) {
        return Err(TopicScoreError::KTooLarge {
            k,
            limit: m.min(n),
        });
    }
    let totals = x.row_totals();
    if let Some(r) = totals.iter().position(|&t| t == 0) {
        return Err(TopicScoreError::ZeroRow(r));
    }
    let normalized = normalize_counts(x, opts.normalization)?;
    // undo the D^(-1/2) row scaling when rebuilding A
    let row_scale: Option<Vec<f64>> = match opts.normalization {
        Normalization::Frequency => None,
        Normalization::Row => Some(totals.iter().map(|&t| (t as f64 / n as f64).sqrt()).collect()),
    };
    topic_score_normalized(&normalized, k, net, row_scale.as_deref(), opts.svd)
}

/// Topic-SCORE from an already normalized `M x n` matrix, e.g. exact
/// frequencies. `row_scale` multiplies row `j` of the reconstruction and
/// undoes any row normalization.
pub fn topic_score_normalized(
    normalized: &DMatrix<f64>,
    k: usize,
    net: &VoronoiNet,
    row_scale: Option<&[f64]>,
    svd_params: RsvdParams,
) -> Result<TopicFit, TopicScoreError> {
    let (m, n) = normalized.shape();
    if net.len() != m {
        return Err(TopicScoreError::NetMismatch {
            counts: m,
            net: net.len(),
        });
    }
    if k < 2 {
        return Err(TopicScoreError::KTooSmall(k));
    }
    if k > m.min(n) {
        return Err(TopicScoreError::KTooLarge {
            k,
            limit: m.min(n),
        });
    }
    let spectrum = singular_spectrum(normalized);
    let svd = randomized_svd(normalized, k, svd_params);
    let (sigma_1, sigma_k) = (svd.singular_values[0], svd.singular_values[k - 1]);
    if !(sigma_k >= RANK_TOL * sigma_1) || sigma_1 <= 0.0 {
        return Err(TopicScoreError::RankDeficient { sigma_k, sigma_1 });
    }

    let mut xi = svd.u;
    let lead = xi
        .column(0)
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(1.0);
    if lead < 0.0 {
        xi.column_mut(0).neg_mut();
    }
    let xi1: Vec<f64> = xi.column(0).iter().map(|&v| v.max(XI1_FLOOR)).collect();
    let ratios = DMatrix::from_fn(m, k - 1, |j, c| xi[(j, c + 1)] / xi1[j]);

    let vertex_rows = spa_rows(&ratios, k)?;
    let vertices = DMatrix::from_fn(k, k - 1, |r, c| ratios[(vertex_rows[r], c)]);
    let pi = barycentric(&ratios, &vertices)?;

    // A_k is proportional to diag(xi_1) Pi e_k (times the inverse row scaling
    // when rows were normalized).
    let row_factor: Vec<f64> = match row_scale {
        None => xi1.clone(),
        Some(scale) => xi1.iter().zip(scale).map(|(xi, s)| xi * s).collect(),
    };
    let mut a_net = DMatrix::from_fn(m, k, |j, c| row_factor[j] * pi[(j, c)]);
    for mut col in a_net.column_iter_mut() {
        let s: f64 = col.sum();
        col /= s;
    }

    Ok(TopicFit {
        a_net,
        singular_values: spectrum,
        xi1,
        ratios,
        vertices,
        vertex_rows,
        pi,
        net: net.clone(),
    })
}

/// Successive projections: returns the `K` selected rows of `R`.
pub fn vertex_hunt_spa(r: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>, TopicScoreError> {
    let rows = spa_rows(r, k)?;
    Ok(DMatrix::from_fn(k, r.ncols(), |i, c| r[(rows[i], c)]))
}

/// Row indices picked by SPA on the affinely lifted rows `[r_j, 1]`.
pub fn spa_rows(r: &DMatrix<f64>, k: usize) -> Result<Vec<usize>, TopicScoreError> {
    let (m, dim) = r.shape();
    if m < k {
        return Err(TopicScoreError::TooFewRows { k, rows: m });
    }
    let mut y = DMatrix::from_fn(m, dim + 1, |j, c| if c < dim { r[(j, c)] } else { 1.0 });
    let lifted_norms: Vec<f64> = y.row_iter().map(|row| row.norm()).collect();
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = (0, -1.0);
        for (j, row) in y.row_iter().enumerate() {
            // picked rows are zero in exact arithmetic; rounding can leave
            // residue there when the rows span many magnitudes
            if picked.contains(&j) {
                continue;
            }
            let nrm = row.norm_squared();
            if nrm > best.1 {
                best = (j, nrm);
            }
        }
        let (j, nrm2) = best;
        // residual relative to the row's own lifted norm
        if nrm2.sqrt() <= SIMPLEX_TOL * lifted_norms[j] {
            return Err(TopicScoreError::DegenerateSimplex);
        }
        picked.push(j);
        let dir = y.row(j).transpose() / nrm2.sqrt();
        let proj: DVector<f64> = &y * &dir;
        y -= proj * dir.transpose();
    }
    Ok(picked)
}

/// Barycentric coordinates of each row of `R` with respect to the vertices,
/// negatives clipped to zero and rows renormalized.
pub fn barycentric(r: &DMatrix<f64>, vertices: &DMatrix<f64>) -> Result<DMatrix<f64>, TopicScoreError> {
    let k = vertices.nrows();
    let dim = vertices.ncols();
    // columns are the lifted vertices [v_k; 1]
    let lifted = DMatrix::from_fn(k, k, |row, col| if row < dim { vertices[(col, row)] } else { 1.0 });
    if !affinely_independent(&lifted) {
        return Err(TopicScoreError::DegenerateSimplex);
    }
    let inv = lifted.try_inverse().ok_or(TopicScoreError::DegenerateSimplex)?;
    let m = r.nrows();
    let mut pi = DMatrix::zeros(m, k);
    let mut rhs = DVector::zeros(k);
    for j in 0..m {
        for c in 0..dim {
            rhs[c] = r[(j, c)];
        }
        rhs[dim] = 1.0;
        let coords = &inv * &rhs;
        let clipped: Vec<f64> = coords.iter().map(|&v| v.max(0.0)).collect();
        let s: f64 = clipped.iter().sum();
        for c in 0..k {
            pi[(j, c)] = if s > 0.0 { clipped[c] / s } else { 1.0 / k as f64 };
        }
    }
    Ok(pi)
}

/// Gram-Schmidt over the lifted vertex columns; each residual must keep a
/// fraction `SIMPLEX_TOL` of its column's own norm, so widely differing
/// vertex magnitudes are not mistaken for degeneracy.
fn affinely_independent(lifted: &DMatrix<f64>) -> bool {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(lifted.ncols());
    for col in lifted.column_iter() {
        let mut v = col.clone_owned();
        for q in &basis {
            let c = q.dot(&v);
            v -= q * c;
        }
        let nrm = v.norm();
        if !(nrm > SIMPLEX_TOL * col.norm()) {
            return false;
        }
        basis.push(v / nrm);
    }
    true
}

/// Leading singular values of the frequency-normalized counts.
pub fn scree(x: &HyperwordCounts, max_rank: usize) -> Result<Vec<f64>, TopicScoreError> {
    let limit = x.n_rows().min(x.n_docs());
    if max_rank > limit {
        return Err(TopicScoreError::RankTooLarge { max_rank, limit });
    }
    let normalized = normalize_counts(x, Normalization::Frequency)?;
    let mut s = singular_spectrum(&normalized);
    s.truncate(max_rank);
    Ok(s)
}

/// Picks `K` in `range` at the largest consecutive singular-value ratio
/// `sigma_K / sigma_{K+1}` (the scree elbow).
pub fn suggest_k(singular_values: &[f64], range: std::ops::RangeInclusive<usize>) -> Option<usize> {
    range
        .filter(|&k| k >= 1 && k < singular_values.len())
        .map(|k| {
            let next = singular_values[k].max(f64::MIN_POSITIVE);
            (k, singular_values[k - 1] / next)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(k, _)| k)
}

/// Runs [`topic_score`] on the hyperwords that have counts and gives the
/// empty ones zero mass in every topic.
pub fn topic_score_skip_empty(
    x: &HyperwordCounts,
    k: usize,
    net: &VoronoiNet,
) -> Result<TopicFit, TopicScoreError> {
    let totals = x.row_totals();
    if totals.iter().all(|&t| t > 0) {
        return topic_score(x, k, net);
    }
    let keep: Vec<usize> = (0..x.n_rows()).filter(|&m| totals[m] > 0).collect();
    let sub = x.select_rows(&keep);
    let dim = net.dim();
    let sub_net = VoronoiNet::new(
        dim,
        keep.iter().flat_map(|&m| net.center(m).to_vec()).collect(),
    )
    .expect("subset of a valid net");
    let fit = topic_score(&sub, k, &sub_net)?;
    let full_m = x.n_rows();
    let mut a_net = DMatrix::zeros(full_m, k);
    let mut pi = DMatrix::zeros(full_m, k);
    let mut ratios = DMatrix::zeros(full_m, k - 1);
    let mut xi1 = vec![0.0; full_m];
    for (sub_row, &m) in keep.iter().enumerate() {
        a_net.set_row(m, &fit.a_net.row(sub_row));
        pi.set_row(m, &fit.pi.row(sub_row));
        ratios.set_row(m, &fit.ratios.row(sub_row));
        xi1[m] = fit.xi1[sub_row];
    }
    Ok(TopicFit {
        a_net,
        singular_values: fit.singular_values,
        xi1,
        ratios,
        vertices: fit.vertices,
        vertex_rows: fit.vertex_rows.iter().map(|&r| keep[r]).collect(),
        pi,
        net: net.clone(),
    })
}
