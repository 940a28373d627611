mod common;

use common::*;
use consensus_core::graph::{
    graph_scrambling, is_delta_scrambling, laplacian, left_null_vector, root_partition,
    scrambling_coefficient, wra, SpanningTree, WeightedDigraph,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn paired_roots_laplacian_matches_expected_matrix() {
    let g = WeightedDigraph::from_edges(
        4,
        &[
            (1, 0, 1.0),
            (0, 1, 1.0),
            (0, 2, 1.0),
            (0, 3, 1.0),
            (1, 3, 1.0),
        ],
    )
    .unwrap();
    let expect = DMatrix::from_row_slice(
        4,
        4,
        &[
            1., -1., 0., 0., -1., 1., 0., 0., -1., 0., 1., 0., -1., -1., 0., 2.,
        ],
    );
    assert_eq!(laplacian(&g).matrix(), &expect);
    assert_eq!(g, paired_roots());
}

#[test]
fn paired_roots_root_partition_and_weights() {
    let g = paired_roots();
    let p = root_partition(&g);
    let p = p.partition().expect("rooted at the pair {0, 1}");
    assert_eq!(p.roots, vec![0, 1]);
    assert_eq!(p.non_roots, vec![2, 3]);
    let l1 = g.laplacian().block(&p.roots);
    assert_eq!(left_null_vector(&l1).unwrap().xi, vec![0.5, 0.5]);
    let x = [3.0, -1.0, 100.0, 7.0];
    assert_eq!(wra(&x, &g).unwrap(), 1.0);
}

#[test]
fn complete_k3_is_all_roots() {
    let g = WeightedDigraph::complete(3, 1.0).unwrap();
    let p = root_partition(&g);
    assert_eq!(p.partition().unwrap().roots, vec![0, 1, 2]);
    assert!(p.partition().unwrap().non_roots.is_empty());
}

#[test]
fn two_sources_has_no_spanning_tree() {
    match root_partition(&two_sources()) {
        SpanningTree::None { source_components } => {
            assert_eq!(source_components, vec![vec![0, 1], vec![4, 5]]);
        }
        SpanningTree::Rooted(p) => panic!("unexpected partition {p:?}"),
    }
}

#[test]
fn double_star_wra_is_mean_of_the_two_roots() {
    let g = double_star();
    let x: Vec<f64> = (0..12).map(|i| (i as f64) * 0.7 - 3.0).collect();
    let w = wra(&x, &g).unwrap();
    assert!((w - (x[0] + x[1]) / 2.0).abs() < 1e-15);
    assert_eq!(root_partition(&g).partition().unwrap().roots, vec![0, 1]);
}

#[test]
fn directed_three_cycle_weights_verified_by_multiplication() {
    let g = WeightedDigraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap();
    let l = g.laplacian();
    let xi = left_null_vector(l.matrix()).unwrap().xi;
    for v in &xi {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    let row = DMatrix::from_row_slice(1, 3, &xi) * l.matrix();
    assert!(row.amax() < 1e-15);
}

#[test]
fn paired_roots_scrambling_value_by_enumeration() {
    let g = paired_roots();
    let m = g.laplacian().metzler();
    assert_eq!(eta_by_enumeration(&m), 1.0);
    assert_eq!(scrambling_coefficient(&m).unwrap(), 1.0);
}

#[test]
fn complete_graph_scrambling_is_n_delta() {
    for n in 2..8 {
        let delta = 0.25;
        let g = WeightedDigraph::complete(n, delta).unwrap();
        let eta = graph_scrambling(&g);
        assert!((eta - n as f64 * delta).abs() < 1e-12, "n = {n}: {eta}");
    }
    let g = WeightedDigraph::complete(50, 0.1).unwrap();
    assert!((graph_scrambling(&g) - 5.0).abs() < 1e-12);
    assert!(is_delta_scrambling(&g, 0.1).unwrap());
}

#[test]
fn every_digraph_up_to_four_vertices_matches_brute_force_roots() {
    for n in 1..=4usize {
        let pairs = n * (n - 1);
        for mask in 0..(1u64 << pairs) {
            check_roots(&digraph_from_mask(n, mask, 1.0));
        }
    }
}

fn check_roots(g: &WeightedDigraph) {
    let brute = brute_force_roots(g);
    match root_partition(g) {
        SpanningTree::Rooted(p) => {
            assert_eq!(p.roots, brute, "{g:?}");
            // roots induce a strongly connected subgraph
            assert!(g.induced(&p.roots).is_strongly_connected());
            // block form: nothing enters S1 from S2
            let pl = g.laplacian().permuted(&p.permutation);
            let k = p.roots.len();
            for i in 0..k {
                for j in k..g.n() {
                    assert_eq!(pl[(i, j)], 0.0);
                }
            }
            assert_eq!(p.roots.len() == g.n(), g.is_strongly_connected());
        }
        SpanningTree::None { .. } => assert!(brute.is_empty(), "{g:?}"),
    }
}

fn random_metzler(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..3.0f64], n * n)
        .prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
}

fn random_graph() -> impl Strategy<Value = WeightedDigraph> {
    (2usize..=7).prop_flat_map(|n| {
        prop::collection::vec(prop_oneof![2 => Just(0.0), 1 => 0.05..2.0f64], n * n).prop_map(
            move |v| {
                let w = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { v[i * n + j] });
                WeightedDigraph::new(w).unwrap()
            },
        )
    })
}

proptest! {
    #[test]
    fn random_digraphs_match_brute_force_roots(g in random_graph()) {
        check_roots(&g);
    }

    #[test]
    fn laplacian_rows_sum_to_zero(g in random_graph()) {
        let l = g.laplacian();
        for i in 0..g.n() {
            let s: f64 = l.matrix().row(i).iter().sum();
            prop_assert!(s.abs() <= 1e-12);
            for j in 0..g.n() {
                if i != j {
                    prop_assert!(l.matrix()[(i, j)] <= 0.0);
                }
            }
        }
    }

    #[test]
    fn scrambling_ignores_the_diagonal(
        m in (2usize..=7).prop_flat_map(random_metzler),
        diag in prop::collection::vec(-5.0..5.0f64, 7),
    ) {
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] = diag[i];
        }
        prop_assert_eq!(scrambling_coefficient(&m).unwrap(), scrambling_coefficient(&shifted).unwrap());
        prop_assert!((scrambling_coefficient(&m).unwrap() - eta_by_enumeration(&m)).abs() < 1e-12);
    }

    #[test]
    fn delta_scrambling_implies_eta_at_least_delta(g in random_graph(), delta in 0.01..2.0f64) {
        if is_delta_scrambling(&g, delta).unwrap() {
            prop_assert!(graph_scrambling(&g) >= delta);
        }
    }

    #[test]
    fn null_vector_of_strongly_connected_graphs(g in random_graph()) {
        if let SpanningTree::Rooted(p) = root_partition(&g) {
            let l1 = g.laplacian().block(&p.roots);
            let xi = left_null_vector(&l1).unwrap().xi;
            let row = DMatrix::from_row_slice(1, xi.len(), &xi) * &l1;
            prop_assert!(row.amax() <= 1e-10);
            prop_assert!(xi.iter().all(|&v| v > 0.0));
            prop_assert!((xi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
