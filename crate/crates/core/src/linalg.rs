//! Dense linear-algebra helpers: truncated SVD by randomized subspace
//! iteration and the singular spectrum via the smaller Gram matrix.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Leading left singular vectors and singular values of a matrix.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// `rows x rank`, orthonormal columns.
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct RsvdParams {
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for RsvdParams {
    fn default() -> Self {
        Self {
            oversample: 8,
            power_iters: 4,
            seed: 0x5eed,
        }
    }
}

/// Randomized range finder followed by an exact SVD of the projected matrix.
pub fn randomized_svd(a: &DMatrix<f64>, rank: usize, params: RsvdParams) -> TruncatedSvd {
    let (rows, cols) = a.shape();
    let width = (rank + params.oversample).min(rows.min(cols)).max(rank);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let omega = DMatrix::from_fn(cols, width, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormal_basis(a * omega);
    let at = a.transpose();
    for _ in 0..params.power_iters {
        let z = orthonormal_basis(&at * &q);
        q = orthonormal_basis(a * z);
    }
    // b = q^T a is small (width x cols); its SVD gives the rotation inside the range.
    let b = q.transpose() * a;
    let svd = b.svd(true, false);
    let ub = svd.u.expect("requested u");
    let order = descending_order(svd.singular_values.as_slice());
    let mut u = DMatrix::zeros(rows, rank);
    let mut s = DVector::zeros(rank);
    for (k, &src) in order.iter().take(rank).enumerate() {
        u.set_column(k, &(&q * ub.column(src)));
        s[k] = svd.singular_values[src];
    }
    TruncatedSvd {
        u,
        singular_values: s,
    }
}

/// All `min(rows, cols)` singular values, nonincreasing.
pub fn singular_spectrum(a: &DMatrix<f64>) -> Vec<f64> {
    let (rows, cols) = a.shape();
    if rows.min(cols) <= 64 {
        let mut s = a.singular_values().as_slice().to_vec();
        s.sort_by(|x, y| y.total_cmp(x));
        return s;
    }
    let gram = if rows <= cols {
        a * a.transpose()
    } else {
        a.transpose() * a
    };
    let mut s: Vec<f64> = gram
        .symmetric_eigenvalues()
        .iter()
        .map(|&e| e.max(0.0).sqrt())
        .collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

fn orthonormal_basis(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}
