use nalgebra::DMatrix;
use proptest::prelude::*;
use trace_core::density::relevance_from_density;
use trace_core::metrics::membership_coords;
use trace_core::net::counts_from_labels;
use trace_core::select::knn_entropy_term;
use trace_core::weights::project_simplex;
use trace_core::{count_matrix, make_kernel, topic_score, EmbeddingCorpus, HyperwordCounts, VoronoiNet};

fn corpus_strategy() -> impl Strategy<Value = EmbeddingCorpus> {
    (1usize..4, prop::collection::vec(0usize..6, 0..6), any::<bool>()).prop_flat_map(|(dim, lens, tokens)| {
        let total: usize = lens.iter().sum();
        (
            // the file stores f32
            prop::collection::vec((-1e6f32..1e6).prop_map(f64::from), total * dim),
            prop::collection::vec("[a-z]{0,6}", total),
        )
            .prop_map(move |(emb, words)| {
                EmbeddingCorpus::new(dim, lens.clone(), emb, tokens.then_some(words)).unwrap()
            })
    })
}

fn simplex_strategy(max_k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 1..=max_k).prop_filter_map("positive mass", |v| {
        let s: f64 = v.iter().sum();
        (s > 1e-3).then(|| v.iter().map(|x| x / s).collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_bytes_round_trip(c in corpus_strategy()) {
        let back = EmbeddingCorpus::from_bytes(&c.to_bytes()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn doc_slices_concatenate_to_embeddings(c in corpus_strategy()) {
        let joined: Vec<f64> = c.docs().flat_map(|d| d.as_slice().to_vec()).collect();
        prop_assert_eq!(joined.as_slice(), c.embeddings());
        for row in 0..c.total_len() {
            let (doc, pos) = c.locate(row);
            prop_assert_eq!(c.row_index(doc, pos), row);
        }
    }

    #[test]
    fn counts_conserve_tokens(
        lens in prop::collection::vec(0usize..20, 1..8),
        seed in 0u64..1000,
        m in 1usize..6,
    ) {
        let total: usize = lens.iter().sum();
        let labels: Vec<usize> = (0..total).map(|i| ((i as u64 * 2654435761 + seed) % m as u64) as usize).collect();
        let x = counts_from_labels(m, &lens, &labels);
        let expected: Vec<u64> = lens.iter().map(|&l| l as u64).collect();
        prop_assert_eq!(x.doc_totals(), expected.as_slice());
        prop_assert_eq!(x.row_totals().iter().sum::<u64>(), total as u64);
    }

    #[test]
    fn count_matrix_matches_assignments(
        pts in prop::collection::vec(-5.0f64..5.0, 2..60),
        centers in prop::collection::btree_set(-50i32..50, 1..6),
    ) {
        let pts: Vec<f64> = pts[..pts.len() / 2 * 2].to_vec();
        let centers: Vec<f64> = centers.iter().flat_map(|&c| [c as f64 / 10.0, 0.0]).collect();
        let net = VoronoiNet::new(2, centers).unwrap();
        let n = pts.len() / 2;
        let corpus = EmbeddingCorpus::new(2, vec![n], pts.clone(), None).unwrap();
        let x = count_matrix(&net, &corpus).unwrap();
        for m in 0..net.len() {
            let hits = pts.chunks(2).filter(|z| net.assign(z).unwrap() == m).count() as u64;
            prop_assert_eq!(x.get(m, 0), hits);
        }
    }

    #[test]
    fn topic_matrix_is_column_stochastic(
        cols in prop::collection::vec(prop::collection::vec(1u64..50, 8), 6..12),
        k in 2usize..4,
    ) {
        let x = HyperwordCounts::from_columns(8, &cols);
        let net = VoronoiNet::new(1, (0..8).map(f64::from).collect()).unwrap();
        if let Ok(fit) = topic_score(&x, k, &net) {
            for col in fit.a_net.column_iter() {
                prop_assert!((col.sum() - 1.0).abs() < 1e-12);
                prop_assert!(col.iter().all(|&v| v >= 0.0));
            }
            for row in fit.pi.row_iter() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            }
            prop_assert!(fit.xi1.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn simplex_projection_is_idempotent(b in prop::collection::vec(-2.0f64..2.0, 1..8)) {
        let once = project_simplex(&b);
        prop_assert!((once.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(once.iter().all(|&v| v >= 0.0));
        let twice = project_simplex(&once);
        for (a, c) in once.iter().zip(&twice) {
            prop_assert!((a - c).abs() < 1e-15);
        }
    }

    #[test]
    fn relevance_is_on_simplex(d in prop::collection::vec(-1.0f64..1.0, 1..8)) {
        let r = relevance_from_density(&d);
        prop_assert!((r.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(r.values.iter().all(|&v| v >= 0.0));
        prop_assert_eq!(r.degenerate, d.iter().all(|&v| v <= 0.0));
    }

    #[test]
    fn membership_coords_stay_in_unit_disc(b in simplex_strategy(8)) {
        let p = membership_coords(&b).unwrap();
        prop_assert!(p[0].hypot(p[1]) <= 1.0 + 1e-12);
    }

    #[test]
    fn entropy_term_shifts_by_log_scale(
        pts in prop::collection::vec(-1.0f64..1.0, 40..80),
        c in 0.01f64..100.0,
    ) {
        let pts: Vec<f64> = pts[..pts.len() / 2 * 2].to_vec();
        let scaled: Vec<f64> = pts.iter().map(|v| v * c).collect();
        let a = knn_entropy_term(&pts, 2, 3).unwrap();
        let b = knn_entropy_term(&scaled, 2, 3).unwrap();
        prop_assert!((b - a - 2.0 * c.ln()).abs() < 1e-9);
    }

    #[test]
    fn kernel_profiles_are_even(order in 1usize..10, u in -6.0f64..6.0) {
        let k = make_kernel(order).unwrap();
        prop_assert!((k.profile(u) - k.profile(-u)).abs() <= 1e-15 * k.profile(u).abs().max(1e-300));
        prop_assert_eq!(k.eval(&[u, 0.5]), k.eval(&[-u, -0.5]));
    }

    #[test]
    fn normalized_frequencies_sum_to_one(cols in prop::collection::vec(prop::collection::vec(0u64..9, 4), 1..6)) {
        prop_assume!(cols.iter().all(|c| c.iter().sum::<u64>() > 0));
        let x = HyperwordCounts::from_columns(4, &cols);
        let f = trace_core::tscore::normalize_counts(&x, trace_core::tscore::Normalization::Frequency).unwrap();
        let ones = DMatrix::from_element(1, 4, 1.0) * f;
        prop_assert!(ones.iter().all(|&s| (s - 1.0).abs() < 1e-12));
    }
}
