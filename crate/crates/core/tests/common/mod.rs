#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trace_core::VoronoiNet;

/// Separable hyperword topics: rows `0..K` are anchors (row `k` only loads on
/// topic `k`), the rest random; columns sum to one.
pub fn separable_topics(m: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::from_fn(m, k, |_, _| rng.random_range(0.2..1.0));
    for t in 0..k {
        for c in 0..k {
            a[(t, c)] = if t == c { rng.random_range(1.0..2.0) } else { 0.0 };
        }
    }
    for mut col in a.column_iter_mut() {
        let s = col.sum();
        col /= s;
    }
    a
}

/// `K x n` weights with one pure document per topic first.
pub fn weights_with_pure_docs(k: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DMatrix::from_fn(k, n, |_, _| rng.random_range(0.0..1.0));
    for i in 0..k {
        w.column_mut(i).fill(0.0);
        w[(i, i)] = 1.0;
    }
    for mut col in w.column_iter_mut() {
        let s = col.sum();
        col /= s;
    }
    w
}

/// Net with `m` distinct centers on a line in `dim` dimensions.
pub fn line_net(m: usize, dim: usize) -> VoronoiNet {
    let centers = (0..m).flat_map(|i| (0..dim).map(move |c| if c == 0 { i as f64 } else { 0.0 })).collect();
    VoronoiNet::new(dim, centers).unwrap()
}

/// Independent brute-force alignment: the column permutation of `est`
/// minimizing the summed max-abs column error against `truth`.
pub fn best_permutation(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> (Vec<usize>, f64) {
    fn permutations(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }
    let k = truth.ncols();
    let mut best = (Vec::new(), f64::INFINITY);
    for perm in permutations(k) {
        let err = (0..k)
            .flat_map(|t| (0..truth.nrows()).map(move |j| (t, j)))
            .map(|(t, j)| (est[(j, perm[t])] - truth[(j, t)]).abs())
            .fold(0.0, f64::max);
        if err < best.1 {
            best = (perm, err);
        }
    }
    best
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// O(n^2) k-th neighbor distances, self excluded.
pub fn brute_kth_distances(points: &[f64], dim: usize, k: usize) -> Vec<f64> {
    let n = points.len() / dim;
    (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    (0..dim)
                        .map(|c| (points[i * dim + c] - points[j * dim + c]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect()
}
