mod common;

use common::brute_kth_distances;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use trace_core::metrics::{embedded_tc, embedded_td, membership_coords, polygon_vertices, WordEmbeddingTable};
use trace_core::select::{geometric_grid, knn_entropy_term};
use trace_core::sim::{
    align_topics, gen_truth, loss_trace, loss_tscore, sample_corpus, scale_objective, solve_word_scales, LossKind,
    LossScale, SimError, SimTruth,
};
use trace_core::{DensityModel, Kernel, SimConfig, TopicFit, VoronoiNet};

fn uniform_points(n: usize, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * dim).map(|_| rng.random_range(0.0..1.0)).collect()
}

#[test]
fn knn_term_matches_brute_force() {
    for (dim, seed) in [(2, 1), (3, 2), (1, 3)] {
        let pts = uniform_points(200, dim, seed);
        let brute = brute_kth_distances(&pts, dim, 5);
        let oracle = dim as f64 / 200.0 * brute.iter().map(|e| e.ln()).sum::<f64>();
        let got = knn_entropy_term(&pts, dim, 5).unwrap();
        assert!((got - oracle).abs() < 1e-12, "dim {dim}: {got} vs {oracle}");
    }
}

#[test]
fn knn_term_scaling_identity() {
    let pts = uniform_points(300, 2, 7);
    let base = knn_entropy_term(&pts, 2, 4).unwrap();
    for c in [0.1, 3.0, 17.5] {
        let scaled: Vec<f64> = pts.iter().map(|v| v * c).collect();
        let got = knn_entropy_term(&scaled, 2, 4).unwrap();
        assert!((got - base - 2.0 * f64::ln(c)).abs() < 1e-10);
    }
}

#[test]
fn geometric_grid_endpoints_and_ratio() {
    let g = geometric_grid(0.05, 0.8, 5);
    assert!((g[0] - 0.05).abs() < 1e-15 && (g[4] - 0.8).abs() < 1e-14);
    for w in g.windows(2) {
        assert!((w[1] / w[0] - 2.0).abs() < 1e-12);
    }
}

#[test]
fn word_scales_solve_feasible_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // a known nonnegative solution makes the optimum exactly zero
    let b = DMatrix::from_fn(3, 8, |_, _| rng.random_range(0.0..1.0));
    let f_star: Vec<f64> = (0..8).map(|_| rng.random_range(0.1..1.0)).collect();
    let target = &b * nalgebra::DVector::from_vec(f_star);
    let b = DMatrix::from_fn(3, 8, |r, c| b[(r, c)] / target[r]);
    let f = solve_word_scales(&b, &mut rng).unwrap();
    assert!(f.iter().all(|&v| v >= 0.0));
    assert!(scale_objective(&b, &f) < 1e-10);
}

#[test]
fn word_scales_report_infeasible_system() {
    let b = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    match solve_word_scales(&b, &mut rng) {
        Err(SimError::PgdNotConverged(obj)) => assert!((obj - 1.0).abs() < 1e-6),
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn every_topic_has_anchor_words() {
    for seed in 0..20 {
        let cfg = SimConfig {
            p: 120,
            n: 20,
            doc_len: 10.0,
            k: 3,
            d: 3,
            rho: 2,
            tau: 0.8,
            seed,
        };
        let truth = gen_truth(&cfg).unwrap();
        let anchors = truth.anchor_words();
        for t in 0..3 {
            assert!(anchors.iter().any(|&(_, k)| k == t), "seed {seed} topic {t}");
        }
        for (j, t) in anchors {
            for other in 0..3 {
                assert_eq!(truth.a[(j, other)] > 0.0, other == t);
            }
        }
    }
}

#[test]
fn word_frequencies_follow_document_mixture() {
    let cfg = SimConfig {
        p: 30,
        n: 4,
        doc_len: 100_000.0,
        k: 2,
        d: 2,
        rho: 1,
        tau: 0.8,
        seed: 9,
    };
    let truth = gen_truth(&cfg).unwrap();
    let sample = sample_corpus(&truth, &cfg);
    for i in 0..cfg.n {
        let len: u64 = sample.word_counts.column(i).iter().sum();
        let mut pearson = 0.0;
        let mut cells = 0;
        for j in 0..cfg.p {
            let prob: f64 = (0..2).map(|t| truth.a[(j, t)] * truth.w[(t, i)]).sum();
            if prob == 0.0 {
                assert_eq!(sample.word_counts.get(j, i), 0);
                continue;
            }
            let expected = len as f64 * prob;
            pearson += (sample.word_counts.get(j, i) as f64 - expected).powi(2) / expected;
            cells += 1;
        }
        let crit = ChiSquared::new((cells - 1) as f64).unwrap().inverse_cdf(0.999);
        assert!(pearson < crit, "doc {i}: {pearson} >= {crit}");
    }
}

#[test]
fn document_lengths_have_poisson_moments() {
    let cfg = SimConfig {
        p: 10,
        n: 10_000,
        doc_len: 30.0,
        k: 2,
        d: 2,
        rho: 1,
        tau: 0.8,
        seed: 4,
    };
    let truth = gen_truth(&cfg).unwrap();
    let lens: Vec<f64> = sample_corpus(&truth, &cfg)
        .corpus
        .doc_lengths()
        .iter()
        .map(|&l| l as f64)
        .collect();
    let n = lens.len() as f64;
    let mean = lens.iter().sum::<f64>() / n;
    let var = lens.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((mean - 30.0).abs() < 3.0 * (30.0 / n).sqrt());
    // Var of the sample variance of Poisson(l) is about (l + 2 l^2) / n
    assert!((var - 30.0).abs() < 3.0 * ((30.0 + 2.0 * 900.0) / n).sqrt());
}

fn hand_truth() -> SimTruth {
    SimTruth {
        mu: DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 2.0]),
        a: DMatrix::from_row_slice(3, 2, &[0.6, 0.0, 0.0, 0.5, 0.4, 0.5]),
        w: DMatrix::from_row_slice(2, 1, &[0.5, 0.5]),
        b_tilde: DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, 0.5]),
    }
}

fn model_on_mu(truth: &SimTruth, a_net: DMatrix<f64>) -> DensityModel {
    let net = VoronoiNet::new(2, truth.mu.transpose().as_slice().to_vec()).unwrap();
    let (m, k) = a_net.shape();
    let fit = TopicFit {
        a_net,
        singular_values: vec![1.0; k],
        xi1: vec![1.0; m],
        ratios: DMatrix::zeros(m, k - 1),
        vertices: DMatrix::zeros(k, k - 1),
        vertex_rows: (0..k).collect(),
        pi: DMatrix::zeros(m, k),
        net,
    };
    DensityModel::new(fit, 1.0, Kernel::gaussian()).unwrap()
}

#[test]
fn trace_loss_by_hand() {
    let truth = hand_truth();
    let phi = |sq: f64| (-0.5 * sq).exp() / (2.0 * std::f64::consts::PI);
    // squared distances between the three centers
    let d2 = [[0.0, 1.0, 4.0], [1.0, 0.0, 5.0], [4.0, 5.0, 0.0]];
    let dens = |a: &DMatrix<f64>, j: usize, t: usize| -> f64 { (0..3).map(|m| a[(m, t)] * phi(d2[j][m])).sum() };

    // with h = 1 and the true centers the estimate is exact
    let exact = model_on_mu(&truth, truth.a.clone());
    assert!(loss_trace(&exact, &truth, &[0, 1], LossScale::GaussianPeak).unwrap() < 1e-15);

    let est = DMatrix::from_row_slice(3, 2, &[0.5, 0.1, 0.1, 0.4, 0.4, 0.5]);
    let model = model_on_mu(&truth, est.clone());
    let mut l1 = 0.0;
    let mut mass = 0.0;
    for t in 0..2 {
        for j in 0..3 {
            l1 += (dens(&est, j, t) - dens(&truth.a, j, t)).abs();
            mass += dens(&truth.a, j, t);
        }
    }
    let peak = 1.0 / (2.0 * std::f64::consts::PI);
    let got = loss_trace(&model, &truth, &[0, 1], LossScale::GaussianPeak).unwrap();
    assert!((got - l1 / peak).abs() < 1e-12);
    let got = loss_trace(&model, &truth, &[0, 1], LossScale::TruthMass).unwrap();
    assert!((got - l1 / (mass / 2.0)).abs() < 1e-12);
}

#[test]
fn tscore_loss_and_alignment_by_brute_force() {
    let truth = hand_truth();
    let swapped = DMatrix::from_row_slice(3, 2, &[0.0, 0.5, 0.6, 0.1, 0.4, 0.4]);
    let est: Vec<Vec<f64>> = swapped.column_iter().map(|c| c.iter().copied().collect()).collect();
    let perm = align_topics(&est, &truth.topic_columns(), LossKind::TScore).unwrap();
    assert_eq!(perm, vec![1, 0]);
    // |0.5-0.6| + |0.1-0| + |0.4-0.4| + |0-0| + |0.6-0.5| + |0.4-0.5|
    assert!((loss_tscore(&swapped, &truth, &perm).unwrap() - 0.4).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t: Vec<Vec<f64>> = (0..4).map(|_| (0..6).map(|_| rng.random::<f64>()).collect()).collect();
    let e: Vec<Vec<f64>> = (0..4).map(|_| (0..6).map(|_| rng.random::<f64>()).collect()).collect();
    let perm = align_topics(&e, &t, LossKind::Trace { lambda: 2.0 }).unwrap();
    let cost = |p: &[usize]| -> f64 {
        (0..4)
            .map(|k| e[p[k]].iter().zip(&t[k]).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .sum()
    };
    let mut best = f64::INFINITY;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut s = p.to_vec();
                    s.sort_unstable();
                    if s == [0, 1, 2, 3] {
                        best = best.min(cost(&p));
                    }
                }
            }
        }
    }
    assert!((cost(&perm) - best).abs() < 1e-12);
}

fn table() -> WordEmbeddingTable {
    let words = ["a", "b", "c"].map(String::from).to_vec();
    WordEmbeddingTable::new(words, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap()
}

fn topics() -> Vec<Vec<String>> {
    vec![vec!["a".into(), "c".into()], vec!["b".into(), "c".into()]]
}

#[test]
fn coherence_and_diversity_by_hand() {
    // both topics hold two ordered pairs at cosine 1/sqrt(2)
    let tc = embedded_tc(&topics(), &table()).unwrap();
    assert!((tc - 2.0 / 2f64.sqrt()).abs() < 1e-12);
    // means (1, 0.5) and (0.5, 1)
    let td = embedded_td(&topics(), &table()).unwrap();
    assert!((td - 0.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn coherence_is_scale_invariant_and_diversity_rotation_invariant() {
    let base = table();
    let scaled = WordEmbeddingTable::new(
        ["a", "b", "c"].map(String::from).to_vec(),
        2,
        vec![3.0, 0.0, 0.0, 0.2, 7.0, 7.0],
    )
    .unwrap();
    assert!((embedded_tc(&topics(), &scaled).unwrap() - embedded_tc(&topics(), &base).unwrap()).abs() < 1e-12);

    let (s, c) = 0.7f64.sin_cos();
    let rotated: Vec<f64> = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
        .iter()
        .flat_map(|v| [c * v[0] - s * v[1], s * v[0] + c * v[1]])
        .collect();
    let rot = WordEmbeddingTable::new(["a", "b", "c"].map(String::from).to_vec(), 2, rotated).unwrap();
    assert!((embedded_td(&topics(), &rot).unwrap() - embedded_td(&topics(), &base).unwrap()).abs() < 1e-12);
}

#[test]
fn membership_coords_are_affine() {
    for k in 2..7 {
        let uniform = vec![1.0 / k as f64; k];
        let o = membership_coords(&uniform).unwrap();
        assert!(o[0].abs() < 1e-12 && o[1].abs() < 1e-12);
        let verts = polygon_vertices(k);
        for (t, v) in verts.iter().enumerate() {
            let mut e = vec![0.0; k];
            e[t] = 1.0;
            let p = membership_coords(&e).unwrap();
            assert!((p[0] - v[0]).abs() < 1e-15 && (p[1] - v[1]).abs() < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let mut draw = || {
            let mut b: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let s: f64 = b.iter().sum();
            b.iter_mut().for_each(|v| *v /= s);
            b
        };
        let (b1, b2) = (draw(), draw());
        let mix: Vec<f64> = b1.iter().zip(&b2).map(|(x, y)| 0.3 * x + 0.7 * y).collect();
        let (p1, p2, pm) = (
            membership_coords(&b1).unwrap(),
            membership_coords(&b2).unwrap(),
            membership_coords(&mix).unwrap(),
        );
        for c in 0..2 {
            assert!((pm[c] - 0.3 * p1[c] - 0.7 * p2[c]).abs() < 1e-12);
        }
    }
    assert!(membership_coords(&[0.5, 0.6]).is_err());
}
