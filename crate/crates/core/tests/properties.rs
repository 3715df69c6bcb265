use edgeid_core::detect::{
    gmrf_lrt_edge_sum, gmrf_lrt_local_trace, gmrf_lrt_noiseless, gmrf_penalty_global, gmrf_penalty_local,
};
use edgeid_core::graph::{neighborhood, path_edge_set};
use edgeid_core::spectral::{filter_matrix, gft};
use edgeid_core::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::sample::subsequence;

const FILTERS: [GraphFilter; 3] = [
    GraphFilter::Gmrf,
    GraphFilter::Tikhonov { alpha: 0.5 },
    GraphFilter::Heat { tau: 0.2 },
];

fn random_graph(n: usize, k: usize, seed: u64) -> WeightedGraph {
    let params = WattsStrogatz {
        n,
        k_per_side: k,
        p_rewire: 0.3,
        ..WattsStrogatz::default()
    };
    watts_strogatz(&params, seed).unwrap()
}

fn graph_strategy() -> impl Strategy<Value = WeightedGraph> {
    (5usize..=14, 1usize..=2, any::<u64>()).prop_map(|(n, k, seed)| random_graph(n, k, seed))
}

/// A graph with a random edge subset of size 1..=3.
fn graph_and_subset() -> impl Strategy<Value = (WeightedGraph, Vec<EdgeKey>)> {
    graph_strategy().prop_flat_map(|g| {
        let keys = g.edge_keys();
        (Just(g), subsequence(keys, 1..=3))
    })
}

/// A graph with nested subsets `small ⊂ large`.
fn nested_subsets() -> impl Strategy<Value = (WeightedGraph, Vec<EdgeKey>, Vec<EdgeKey>)> {
    graph_strategy().prop_flat_map(|g| {
        let keys = g.edge_keys();
        (Just(g), subsequence(keys, 2..=4)).prop_flat_map(|(g, large)| {
            let len = large.len();
            (Just(g), subsequence(large.clone(), 1..len), Just(large))
        })
    })
}

fn batch(l: &LaplacianView, p: ModelParams, m: usize, seed: u64) -> SignalBatch {
    generate(&SignalModel::new(l.clone(), p).unwrap(), m, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_invariants(g in graph_strategy()) {
        let l = laplacian(&g).unwrap();
        let fro = l.matrix().norm();
        let ones = DVector::from_element(g.n_vertices(), 1.0);
        prop_assert!((l.matrix() * &ones).norm() <= 1e-10 * fro);
        let rebuilt = l.spectral_matrix(|x| x);
        prop_assert!((rebuilt - l.matrix()).norm() <= 1e-10 * fro);
        prop_assert_eq!(l.zero_eig_count(), 1);
        for w in l.eigenvalues().as_slice().windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn perturbation_matches_rebuild((g, keys) in graph_and_subset()) {
        let l0 = laplacian(&g).unwrap();
        let (lk, hyp) = apply_hypothesis(&l0, &keys).unwrap();
        let rebuilt = laplacian(&g.without_edges(&keys).unwrap()).unwrap();
        prop_assert!((lk.matrix() - rebuilt.matrix()).amax() <= 1e-12);
        let e = hyp.perturbation(g.n_vertices());
        for r in 0..g.n_vertices() {
            for c in 0..g.n_vertices() {
                if !hyp.affected_vertices.contains(&r) || !hyp.affected_vertices.contains(&c) {
                    prop_assert_eq!(e[(r, c)], 0.0);
                }
            }
        }
        for r in 0..g.n_vertices() {
            prop_assert!(lk.matrix().row(r).sum().abs() < 1e-12);
            for c in 0..g.n_vertices() {
                if r != c {
                    prop_assert!(lk.matrix()[(r, c)] <= 0.0);
                }
            }
        }
    }

    #[test]
    fn weyl_interlacing((g, small, large) in nested_subsets()) {
        let l0 = laplacian(&g).unwrap();
        let (l_small, _) = apply_hypothesis(&l0, &small).unwrap();
        let (l_large, _) = apply_hypothesis(&l0, &large).unwrap();
        for (a, b) in l_large.eigenvalues().iter().zip(l_small.eigenvalues().iter()) {
            prop_assert!(*a <= *b + 1e-10);
        }
    }

    #[test]
    fn penalty_monotone_in_nesting((g, small, large) in nested_subsets(), sw in 0.05f64..2.0) {
        let l0 = laplacian(&g).unwrap();
        let (l_small, _) = apply_hypothesis(&l0, &small).unwrap();
        let (l_large, _) = apply_hypothesis(&l0, &large).unwrap();
        // GMRF gives h(0) = 0, so an extra component breaks the monotone-filter premise.
        prop_assume!(l_large.is_connected());
        let s = sample_covariance(&batch(&l0, ModelParams::new(GraphFilter::Gmrf, 1.0, sw).unwrap(), 5, 1));
        for f in FILTERS {
            let p = ModelParams::new(f, 1.0, sw).unwrap();
            let rho_small = lrt_statistic(&s, &l0, &l_small, &p).unwrap().penalty;
            let rho_large = lrt_statistic(&s, &l0, &l_large, &p).unwrap().penalty;
            prop_assert!(rho_small <= rho_large + 1e-10, "{f}: {rho_small} > {rho_large}");
        }
    }

    #[test]
    fn null_hypothesis_scores_zero(g in graph_strategy(), seed in any::<u64>(), sw in 0.0f64..2.0) {
        let l0 = laplacian(&g).unwrap();
        for f in FILTERS {
            let p = ModelParams::new(f, 1.0, sw).unwrap();
            let s = sample_covariance(&batch(&l0, p, 7, seed));
            let stat = lrt_statistic(&s, &l0, &l0, &p).unwrap();
            prop_assert!(stat.penalized.abs() <= 1e-12);
        }
    }

    #[test]
    fn spectral_form_matches_direct((g, keys) in graph_and_subset(), seed in any::<u64>(), noisy in any::<bool>()) {
        let sw = if noisy { 1.0 } else { 0.1 };
        let l0 = laplacian(&g).unwrap();
        let (lk, _) = apply_hypothesis(&l0, &keys).unwrap();
        for f in FILTERS {
            let p = ModelParams::new(f, 1.0, sw).unwrap();
            let data = batch(&lk, p, 30, seed);
            let direct = lrt_statistic(&sample_covariance(&data), &l0, &lk, &p).unwrap().value;
            let spectral = lrt_spectral(&data, &l0, &lk, &p).unwrap();
            prop_assert!((direct - spectral).abs() <= 1e-8 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn gmrf_forms_and_locality((g, keys) in graph_and_subset(), seed in any::<u64>(), sx in 0.2f64..3.0) {
        let l0 = laplacian(&g).unwrap();
        let (lk, hyp) = apply_hypothesis(&l0, &keys).unwrap();
        let p = ModelParams::new(GraphFilter::Gmrf, sx, 0.0).unwrap();
        let data = batch(&lk, p, 40, seed);
        let s = sample_covariance(&data);
        let dirichlet = gmrf_lrt_noiseless(&data, &l0, &hyp, &p).unwrap();
        let edge_sum = gmrf_lrt_edge_sum(&data, &hyp, sx);
        let trace = gmrf_lrt_local_trace(&s, &hyp, sx);
        let tol = 1e-9 * (1.0 + dirichlet.abs());
        prop_assert!((dirichlet - edge_sum).abs() <= tol);
        prop_assert!((dirichlet - trace).abs() <= tol);

        // Overwrite every entry of S_y outside the S x S block.
        let n = g.n_vertices();
        let inside = |v: usize| hyp.affected_vertices.contains(&v);
        let mut moved = s.matrix.clone();
        for r in 0..n {
            for c in r..n {
                if !(inside(r) && inside(c)) {
                    let v = ((r * 31 + c * 17) as f64).sin() * 3.0;
                    moved[(r, c)] = v;
                    moved[(c, r)] = v;
                }
            }
        }
        let moved = SampleCovariance { matrix: moved, m_count: s.m_count };
        let before = lrt_statistic(&s, &l0, &lk, &p).unwrap();
        let after = lrt_statistic(&moved, &l0, &lk, &p).unwrap();
        prop_assert!((before.penalized - after.penalized).abs() <= 1e-9 * (1.0 + before.penalized.abs()));
        let local_before = gmrf_lrt_local_trace(&s, &hyp, sx);
        let local_after = gmrf_lrt_local_trace(&moved, &hyp, sx);
        prop_assert_eq!(local_before, local_after);
    }

    #[test]
    fn penalty_local_identity((g, keys) in graph_and_subset(), sx in 0.2f64..3.0) {
        let l0 = laplacian(&g).unwrap();
        let (lk, hyp) = apply_hypothesis(&l0, &keys).unwrap();
        prop_assume!(lk.is_connected());
        let global = gmrf_penalty_global(&l0, &lk, sx).unwrap();
        let local = gmrf_penalty_local(&l0, &hyp).unwrap();
        prop_assert!((global - local).abs() <= 1e-8 * (1.0 + global.abs()));
    }

    #[test]
    fn neighborhoods_grow_with_beta(g in graph_strategy(), v in 0usize..5, beta in 0usize..4) {
        let small = neighborhood(&g, v, beta);
        let large = neighborhood(&g, v, beta + 1);
        prop_assert!(small.iter().all(|x| large.contains(x)));
        for (a, b) in path_edge_set(&g, v, beta) {
            prop_assert!(small.contains(&a) && small.contains(&b));
        }
    }

    #[test]
    fn parseval_and_commuting_filter(g in graph_strategy(), seed in any::<u64>()) {
        let l = laplacian(&g).unwrap();
        let a = batch(&l, ModelParams::new(GraphFilter::Gmrf, 0.0, 1.0).unwrap(), 1, seed).samples().column(0).into_owned();
        let spec = gft(&l, &a).unwrap();
        prop_assert!((spec.coefficients().norm() - a.norm()).abs() <= 1e-10 * (1.0 + a.norm()));
        for f in FILTERS {
            let h = filter_matrix(&l, &f);
            let comm = &h * l.matrix() - l.matrix() * &h;
            prop_assert!(comm.norm() <= 1e-9 * (1.0 + l.matrix().norm()));
        }
    }

    #[test]
    fn binary_ml_is_thresholded_lrt((g, keys) in graph_and_subset(), seed in any::<u64>(), h1 in any::<bool>()) {
        let l0 = laplacian(&g).unwrap();
        let (lk, hyp) = apply_hypothesis(&l0, &keys).unwrap();
        let p = ModelParams::new(GraphFilter::Tikhonov { alpha: 0.5 }, 1.0, 0.5).unwrap();
        let source = if h1 { &lk } else { &l0 };
        let s = sample_covariance(&batch(source, p, 20, seed));
        let d = ml_decision(&s, &[DisconnectionHypothesis::null(), hyp], &l0, &p).unwrap();
        let stat = lrt_statistic(&s, &l0, &lk, &p).unwrap();
        prop_assert_eq!(d.index == 1, stat.decide(0.0));
    }

    #[test]
    fn psi_invariant_to_eigenvector_signs(g in graph_strategy(), seed in any::<u64>()) {
        let l = laplacian(&g).unwrap();
        let data = batch(&l, ModelParams::new(GraphFilter::Heat { tau: 0.2 }, 1.0, 0.1).unwrap(), 9, seed);
        let psi = frequency_energies(&data, &l).unwrap().psi;
        let mut flipped = l.eigenvectors().clone();
        for c in (0..flipped.ncols()).step_by(2) {
            flipped.column_mut(c).neg_mut();
        }
        let coeffs = flipped.tr_mul(data.samples());
        for (k, v) in psi.iter().enumerate() {
            let direct = coeffs.row(k).norm_squared() / 9.0;
            prop_assert!((v - direct).abs() <= 1e-12 * (1.0 + v));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn local_greedy_with_full_radius_equals_full_greedy(g in graph_strategy(), seed in any::<u64>(), f in 0usize..3) {
        let l0 = laplacian(&g).unwrap();
        let keys = g.edge_keys();
        let truth = vec![keys[seed as usize % keys.len()]];
        let (lk, _) = apply_hypothesis(&l0, &truth).unwrap();
        let p = ModelParams::new(FILTERS[f], 1.0, 0.2).unwrap();
        let s = sample_covariance(&batch(&lk, p, 300, seed));
        let full = greedy_identify(&s, &l0, &g, &p, Some(4)).unwrap();
        let local = greedy_identify_local(&s, &l0, &g, &p, g.diameter(), Some(4)).unwrap();
        prop_assert_eq!(&full.edges, &local.edges);
        // Same inputs, same trace.
        prop_assert_eq!(greedy_identify(&s, &l0, &g, &p, Some(4)).unwrap(), full.clone());
        for rec in full.trace.iter().filter(|r| r.accepted) {
            prop_assert!(rec.best.unwrap().score > 0.0);
        }
        prop_assert!(full.edges.len() <= 4);
    }

    #[test]
    fn greedy_never_beats_exhaustive(seed in any::<u64>()) {
        let g = random_graph(7, 1, seed);
        let l0 = laplacian(&g).unwrap();
        let keys = g.edge_keys();
        let (lk, _) = apply_hypothesis(&l0, &keys[..1]).unwrap();
        let p = ModelParams::new(GraphFilter::Heat { tau: 0.2 }, 1.0, 0.1).unwrap();
        let s = sample_covariance(&batch(&lk, p, 500, seed));
        let hyps = enumerate_hypotheses(g.edges(), 2, 1000).unwrap();
        let d = ml_decision(&s, &hyps, &l0, &p).unwrap();
        let out = greedy_identify(&s, &l0, &g, &p, Some(2)).unwrap();
        let greedy = penalized_score(&s, &l0, &out.edges, &p).unwrap().penalized;
        prop_assert!(d.scores[d.index].penalized >= greedy - 1e-9);
    }
}

#[test]
fn restricted_score_needs_vertices() {
    let g = random_graph(8, 1, 3);
    let l0 = laplacian(&g).unwrap();
    let s = sample_covariance(&batch(
        &l0,
        ModelParams::new(GraphFilter::Gmrf, 1.0, 0.1).unwrap(),
        5,
        1,
    ));
    let p = ModelParams::new(GraphFilter::Gmrf, 1.0, 0.1).unwrap();
    assert!(phi1(&s, &l0, &DMatrix::zeros(8, 8), &[], &p).is_err());
}
