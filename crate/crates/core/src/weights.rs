//! Per-document topic weights by (ridge) regression of hyperword frequencies
//! on the estimated topic matrix, projected back onto the simplex.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::net::{counts_from_labels, HyperwordCounts, NetError};
use crate::tscore::TopicFit;

/// Default ridge penalty for corpus-scale fits.
pub const DEFAULT_RIDGE: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum WeightsError {
    #[error("document {0} has no embeddings")]
    ZeroDocument(usize),
    #[error("new document has no embeddings")]
    EmptyDocument,
    #[error("normal equations are singular; use a positive ridge penalty")]
    SingularSystem,
    #[error("counts have {counts} hyperwords but the fit has {fit}")]
    HyperwordMismatch { counts: usize, fit: usize },
    #[error("ridge penalty must be nonnegative and finite, got {0}")]
    InvalidLambda(f64),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Estimated weights, one simplex column per document.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    /// `K x n`.
    pub w_hat: DMatrix<f64>,
    pub ridge_lambda: f64,
}

impl WeightMatrix {
    pub fn doc(&self, i: usize) -> Vec<f64> {
        self.w_hat.column(i).iter().copied().collect()
    }
}

/// Factored normal equations `(A'A + lambda I)`, reused across documents.
pub struct RidgeSolver {
    at: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    lambda: f64,
}

impl RidgeSolver {
    pub fn new(a_net: &DMatrix<f64>, lambda: f64) -> Result<Self, WeightsError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(WeightsError::InvalidLambda(lambda));
        }
        let at = a_net.transpose();
        let mut gram = &at * a_net;
        let k = gram.nrows();
        if lambda == 0.0 {
            let eig = gram.clone().symmetric_eigenvalues();
            let (lo, hi) = (eig.min(), eig.max());
            if !(hi > 0.0 && lo > 1e-12 * hi) {
                return Err(WeightsError::SingularSystem);
            }
        }
        for i in 0..k {
            gram[(i, i)] += lambda;
        }
        let chol = gram.cholesky().ok_or(WeightsError::SingularSystem)?;
        Ok(Self { at, chol, lambda })
    }

    /// Unprojected minimizer of `||y - A b||^2 + lambda ||b||^2`.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let rhs = &self.at * DVector::from_column_slice(y);
        self.chol.solve(&rhs).iter().copied().collect()
    }

    /// Regression on the frequencies of one count column, then projection.
    pub fn weights_for_counts(&self, counts: &[u64]) -> Option<Vec<f64>> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return None;
        }
        let y: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Some(project_simplex(&self.solve(&y)))
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Clips negatives to zero and rescales to unit sum; an all-nonpositive
/// input maps to the uniform vector.
pub fn project_simplex(b: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = b.iter().map(|&v| v.max(0.0)).collect();
    let s: f64 = clipped.iter().sum();
    if s > 0.0 {
        clipped.iter().map(|v| v / s).collect()
    } else {
        vec![1.0 / b.len() as f64; b.len()]
    }
}

pub fn estimate_weights(fit: &TopicFit, x: &HyperwordCounts, lambda: f64) -> Result<WeightMatrix, WeightsError> {
    if x.n_rows() != fit.m() {
        return Err(WeightsError::HyperwordMismatch {
            counts: x.n_rows(),
            fit: fit.m(),
        });
    }
    if let Some(i) = x.doc_totals().iter().position(|&t| t == 0) {
        return Err(WeightsError::ZeroDocument(i));
    }
    let solver = RidgeSolver::new(&fit.a_net, lambda)?;
    let k = fit.k();
    let mut w_hat = DMatrix::zeros(k, x.n_docs());
    for i in 0..x.n_docs() {
        let w = solver.weights_for_counts(x.column(i)).expect("nonzero column");
        w_hat.set_column(i, &DVector::from_vec(w));
    }
    Ok(WeightMatrix {
        w_hat,
        ridge_lambda: lambda,
    })
}

/// Weights for an unseen document given as row-major `N* x d` embeddings,
/// using the fitted net unchanged.
pub fn infer_new_doc(fit: &TopicFit, embeddings: &[f64], lambda: f64) -> Result<Vec<f64>, WeightsError> {
    let dim = fit.net.dim();
    if embeddings.is_empty() {
        return Err(WeightsError::EmptyDocument);
    }
    if !embeddings.len().is_multiple_of(dim) {
        return Err(NetError::DimensionMismatch {
            expected: dim,
            got: embeddings.len() % dim,
        }
        .into());
    }
    let labels = fit.net.assign_rows(embeddings);
    let counts = counts_from_labels(fit.m(), &[labels.len()], &labels);
    let solver = RidgeSolver::new(&fit.a_net, lambda)?;
    Ok(solver.weights_for_counts(counts.column(0)).expect("nonempty"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_cases() {
        let p = project_simplex(&[0.5, -0.1, 0.6]);
        let expect = [0.5 / 1.1, 0.0, 0.6 / 1.1];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(project_simplex(&[0.25, 0.75]), vec![0.25, 0.75]);
        assert_eq!(project_simplex(&[-1.0, -2.0]), vec![0.5, 0.5]);
        assert_eq!(project_simplex(&[0.0, 0.0, 0.0, 0.0]), vec![0.25; 4]);
    }

    #[test]
    fn exact_least_squares_two_topics() {
        let a = DMatrix::from_row_slice(4, 2, &[0.5, 0.0, 0.5, 0.1, 0.0, 0.4, 0.0, 0.5]);
        let solver = RidgeSolver::new(&a, 0.0).unwrap();
        let w = [0.3, 0.7];
        let y: Vec<f64> = (0..4).map(|j| a[(j, 0)] * w[0] + a[(j, 1)] * w[1]).collect();
        let b = solver.solve(&y);
        assert!((b[0] - 0.3).abs() < 1e-12 && (b[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn huge_ridge_goes_uniform() {
        let a = DMatrix::from_row_slice(3, 3, &[0.6, 0.1, 0.2, 0.3, 0.8, 0.2, 0.1, 0.1, 0.6]);
        let solver = RidgeSolver::new(&a, 1e300).unwrap();
        let b = solver.solve(&[0.2, 0.3, 0.5]);
        assert!(b.iter().all(|v| v.abs() < 1e-290));
        let w = solver.weights_for_counts(&[1, 0, 0]).unwrap();
        // shrunk but still proportional to A'y, so not uniform; the all-zero
        // limit is uniform
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(project_simplex(&[0.0, 0.0, 0.0]), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn singular_system_detected() {
        let a = DMatrix::from_row_slice(3, 2, &[0.5, 0.5, 0.5, 0.5, 0.0, 0.0]);
        assert!(matches!(RidgeSolver::new(&a, 0.0), Err(WeightsError::SingularSystem)));
        assert!(RidgeSolver::new(&a, 0.01).is_ok());
        assert!(matches!(RidgeSolver::new(&a, -1.0), Err(WeightsError::InvalidLambda(_))));
    }
}
