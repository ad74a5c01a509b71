//! Kernel smoothing of hyperword topics into continuous topic densities.
//!
//! `A_k(z0) = sum_m zeta_m(z0) A_net[m, k]`, where `zeta_m` is either the
//! rescaled kernel evaluated at the cell center or averaged over the observed
//! embeddings in the cell.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EmbeddingCorpus;
use crate::net::NetError;
use crate::tscore::TopicFit;

/// Highest supported kernel order.
pub const MAX_KERNEL_ORDER: usize = 9;

#[derive(Debug, Error, PartialEq)]
pub enum DensityError {
    #[error("kernel order {0} unsupported (1..={MAX_KERNEL_ORDER})")]
    OrderUnsupported(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("points mode needs the training corpus")]
    CorpusRequired,
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("topic index {k} out of range for {n_topics} topics")]
    TopicIndexOutOfRange { k: usize, n_topics: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelType {
    GaussianPoly,
}

/// Product kernel whose per-axis profile is `phi(u) * sum_j c_j u^(2j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    order: usize,
    /// Coefficients of the even powers `u^0, u^2, ..., u^(2r)`.
    coeffs: Vec<f64>,
}

impl Kernel {
    pub fn gaussian() -> Self {
        Self {
            order: 1,
            coeffs: vec![1.0],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn kind(&self) -> KernelType {
        KernelType::GaussianPoly
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// One-dimensional profile.
    pub fn profile(&self, u: f64) -> f64 {
        let u2 = u * u;
        let mut poly = 0.0;
        for &c in self.coeffs.iter().rev() {
            poly = poly * u2 + c;
        }
        (-0.5 * u2).exp() / (2.0 * PI).sqrt() * poly
    }

    /// `K(u)` as the product of per-axis profiles.
    pub fn eval(&self, u: &[f64]) -> f64 {
        let sq: f64 = u.iter().map(|v| v * v).sum();
        let gauss = (-0.5 * sq).exp() * (2.0 * PI).powf(-0.5 * u.len() as f64);
        if self.coeffs.len() == 1 {
            return gauss * self.coeffs[0];
        }
        let mut poly = 1.0;
        for &x in u {
            let u2 = x * x;
            let mut p = 0.0;
            for &c in self.coeffs.iter().rev() {
                p = p * u2 + c;
            }
            poly *= p;
        }
        gauss * poly
    }

    /// Rescaled kernel `K(u / h) / h^d` evaluated at `a - b`.
    pub fn eval_scaled(&self, a: &[f64], b: &[f64], h: f64) -> f64 {
        let d = a.len();
        if self.coeffs.len() == 1 {
            let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            return (-0.5 * sq / (h * h)).exp() * (2.0 * PI * h * h).powf(-0.5 * d as f64);
        }
        let u: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) / h).collect();
        self.eval(&u) / h.powi(d as i32)
    }
}

/// Builds the Gaussian-based kernel of the requested order: moments
/// `1..=order` of the per-axis profile vanish and it integrates to one.
pub fn make_kernel(order: usize) -> Result<Kernel, DensityError> {
    if order == 0 || order > MAX_KERNEL_ORDER {
        return Err(DensityError::OrderUnsupported(order));
    }
    if order == 1 {
        return Ok(Kernel::gaussian());
    }
    // Odd moments vanish by symmetry; solve for the even ones.
    // Unknowns c_0..c_r, equations sum_j c_j E[u^(2i+2j)] = [i == 0].
    let r = order / 2;
    let n = r + 1;
    let moment = |q: usize| -> f64 { (1..=q).map(|i| (2 * i - 1) as f64).product() };
    let system = DMatrix::from_fn(n, n, |i, j| moment(i + j));
    let mut rhs = DVector::zeros(n);
    rhs[0] = 1.0;
    let coeffs = system
        .lu()
        .solve(&rhs)
        .ok_or(DensityError::OrderUnsupported(order))?;
    Ok(Kernel {
        order,
        coeffs: coeffs.iter().copied().collect(),
    })
}

/// How the per-cell smoothing weights are approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZetaMode {
    /// Kernel evaluated at each cell center.
    #[default]
    Centers,
    /// Kernel averaged over the observed embeddings in each cell.
    Points,
}

/// Observed embeddings grouped by hyperword cell.
#[derive(Debug, Clone)]
pub struct CellPoints {
    dim: usize,
    cells: Vec<Vec<f64>>,
}

impl CellPoints {
    pub fn build(fit: &TopicFit, corpus: &EmbeddingCorpus) -> Result<Self, DensityError> {
        let net = &fit.net;
        if corpus.dim() != net.dim() {
            return Err(DensityError::DimensionMismatch {
                expected: net.dim(),
                got: corpus.dim(),
            });
        }
        let labels = net.assign_rows(corpus.embeddings());
        let mut cells = vec![Vec::new(); net.len()];
        for (row, &l) in labels.iter().enumerate() {
            cells[l].extend_from_slice(corpus.embedding(row));
        }
        Ok(Self {
            dim: net.dim(),
            cells,
        })
    }

    pub fn cell(&self, m: usize) -> impl Iterator<Item = &[f64]> {
        self.cells[m].chunks_exact(self.dim)
    }

    pub fn cell_len(&self, m: usize) -> usize {
        self.cells[m].len() / self.dim
    }
}

/// Topic relevance `B(z0)`; `degenerate` is set when every positive-part
/// density vanished and the uniform vector was returned instead.
#[derive(Debug, Clone, PartialEq)]
pub struct Relevance {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

/// A fitted topic model with its smoothing kernel and bandwidth.
#[derive(Debug, Clone)]
pub struct DensityModel {
    pub fit: TopicFit,
    h: f64,
    kernel: Kernel,
    zeta_mode: ZetaMode,
    cells: Option<CellPoints>,
}

impl DensityModel {
    pub fn new(fit: TopicFit, h: f64, kernel: Kernel) -> Result<Self, DensityError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(DensityError::InvalidBandwidth(h));
        }
        Ok(Self {
            fit,
            h,
            kernel,
            zeta_mode: ZetaMode::Centers,
            cells: None,
        })
    }

    /// Switches to cell-averaged weights computed from `corpus`.
    pub fn with_points(mut self, corpus: &EmbeddingCorpus) -> Result<Self, DensityError> {
        self.cells = Some(CellPoints::build(&self.fit, corpus)?);
        self.zeta_mode = ZetaMode::Points;
        Ok(self)
    }

    /// Same fit and kernel with a different bandwidth.
    pub fn with_bandwidth(&self, h: f64) -> Result<Self, DensityError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(DensityError::InvalidBandwidth(h));
        }
        let mut m = self.clone();
        m.h = h;
        Ok(m)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn zeta_mode(&self) -> ZetaMode {
        self.zeta_mode
    }

    pub fn k(&self) -> usize {
        self.fit.k()
    }

    pub fn dim(&self) -> usize {
        self.fit.net.dim()
    }

    fn check_dim(&self, z0: &[f64]) -> Result<(), DensityError> {
        if z0.len() != self.dim() {
            return Err(DensityError::DimensionMismatch {
                expected: self.dim(),
                got: z0.len(),
            });
        }
        Ok(())
    }

    /// Smoothing weights `zeta_1(z0)..zeta_M(z0)`.
    ///
    /// In points mode the corpus is taken from the model if it was attached
    /// with [`with_points`](Self::with_points), otherwise from `corpus`.
    /// Cells without observed embeddings fall back to the center value.
    pub fn zeta_weights(
        &self,
        corpus: Option<&EmbeddingCorpus>,
        z0: &[f64],
    ) -> Result<Vec<f64>, DensityError> {
        self.check_dim(z0)?;
        match self.zeta_mode {
            ZetaMode::Centers => Ok(self.center_weights(z0)),
            ZetaMode::Points => {
                let built;
                let cells = match (&self.cells, corpus) {
                    (_, Some(c)) => {
                        built = CellPoints::build(&self.fit, c)?;
                        &built
                    }
                    (Some(cells), None) => cells,
                    (None, None) => return Err(DensityError::CorpusRequired),
                };
                Ok(self.point_weights(cells, z0))
            }
        }
    }

    fn center_weights(&self, z0: &[f64]) -> Vec<f64> {
        let net = &self.fit.net;
        (0..net.len())
            .map(|m| self.kernel.eval_scaled(net.center(m), z0, self.h))
            .collect()
    }

    fn point_weights(&self, cells: &CellPoints, z0: &[f64]) -> Vec<f64> {
        let net = &self.fit.net;
        (0..net.len())
            .map(|m| {
                let n = cells.cell_len(m);
                if n == 0 {
                    self.kernel.eval_scaled(net.center(m), z0, self.h)
                } else {
                    cells
                        .cell(m)
                        .map(|z| self.kernel.eval_scaled(z, z0, self.h))
                        .sum::<f64>()
                        / n as f64
                }
            })
            .collect()
    }

    /// Signed density estimates `(A_1(z0), ..., A_K(z0))`.
    pub fn estimate_density(&self, z0: &[f64]) -> Result<Vec<f64>, DensityError> {
        let zeta = match self.zeta_mode {
            ZetaMode::Centers => self.zeta_weights(None, z0)?,
            ZetaMode::Points => {
                self.check_dim(z0)?;
                let cells = self.cells.as_ref().ok_or(DensityError::CorpusRequired)?;
                self.point_weights(cells, z0)
            }
        };
        let a = &self.fit.a_net;
        Ok((0..a.ncols())
            .map(|k| zeta.iter().zip(a.column(k).iter()).map(|(z, v)| z * v).sum())
            .collect())
    }

    /// Positive part `max(A_k(z0), 0)`.
    pub fn estimate_density_positive(&self, z0: &[f64]) -> Result<Vec<f64>, DensityError> {
        Ok(self
            .estimate_density(z0)?
            .into_iter()
            .map(|v| v.max(0.0))
            .collect())
    }

    /// Normalized positive-part densities `B(z0)`.
    pub fn relevance(&self, z0: &[f64]) -> Result<Relevance, DensityError> {
        Ok(relevance_from_density(&self.estimate_density(z0)?))
    }

    /// Observed embeddings ranked by `B_k` (descending; ties by document then
    /// position). With `dedupe_words`, only the first hit of each surface word
    /// is kept.
    pub fn top_anchor_embeddings(
        &self,
        corpus: &EmbeddingCorpus,
        k: usize,
        m_top: usize,
        dedupe_words: bool,
    ) -> Result<Vec<AnchorHit>, DensityError> {
        if k >= self.k() {
            return Err(DensityError::TopicIndexOutOfRange {
                k,
                n_topics: self.k(),
            });
        }
        if corpus.total_len() == 0 {
            return Err(DensityError::EmptyCorpus);
        }
        let scores = self.relevance_at_rows(corpus)?;
        let ranked = rank_rows(&scores, self.k(), k);
        let mut out = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for row in ranked {
            if out.len() >= m_top {
                break;
            }
            let word = corpus.tokens().map(|t| t[row].clone());
            if dedupe_words {
                if let Some(w) = &word {
                    if !seen.insert(w.clone()) {
                        continue;
                    }
                }
            }
            let (doc, position) = corpus.locate(row);
            out.push(AnchorHit {
                doc,
                position,
                word,
                score: scores[row * self.k() + k],
            });
        }
        Ok(out)
    }

    /// `B(z)` at every corpus embedding, row-major `T x K`.
    pub fn relevance_at_rows(&self, corpus: &EmbeddingCorpus) -> Result<Vec<f64>, DensityError> {
        if corpus.dim() != self.dim() {
            return Err(DensityError::DimensionMismatch {
                expected: self.dim(),
                got: corpus.dim(),
            });
        }
        self.relevance_at(corpus.embeddings())
    }

    /// `B(z)` for each row of a row-major point block, row-major `n x K`.
    pub fn relevance_at(&self, points: &[f64]) -> Result<Vec<f64>, DensityError> {
        use rayon::prelude::*;
        let dim = self.dim();
        let rows: Vec<Result<Relevance, DensityError>> =
            points.par_chunks_exact(dim).map(|z| self.relevance(z)).collect();
        let mut out = Vec::with_capacity(points.len() / dim * self.k());
        let mut degenerate = 0;
        for r in rows {
            let r = r?;
            degenerate += usize::from(r.degenerate);
            out.extend(r.values);
        }
        if degenerate > 0 {
            log::warn!("all topic densities vanish at {degenerate} points; relevance set to uniform there");
        }
        Ok(out)
    }
}

pub fn relevance_from_density(density: &[f64]) -> Relevance {
    let k = density.len();
    let pos: Vec<f64> = density.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pos.iter().sum();
    if total > 0.0 && total.is_finite() {
        Relevance {
            values: pos.iter().map(|v| v / total).collect(),
            degenerate: false,
        }
    } else {
        Relevance {
            values: vec![1.0 / k as f64; k],
            degenerate: true,
        }
    }
}

/// Row order by `scores[row][k]` descending, ties by row index ascending.
fn rank_rows(scores: &[f64], n_topics: usize, k: usize) -> Vec<usize> {
    let n = scores.len() / n_topics;
    let mut rows: Vec<usize> = (0..n).collect();
    rows.sort_by(|&a, &b| {
        scores[b * n_topics + k]
            .total_cmp(&scores[a * n_topics + k])
            .then(a.cmp(&b))
    });
    rows
}

/// One ranked embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorHit {
    pub doc: usize,
    pub position: usize,
    pub word: Option<String>,
    pub score: f64,
}
