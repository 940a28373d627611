#![allow(dead_code, clippy::needless_range_loop)]

use consensus_core::graph::WeightedDigraph;
use nalgebra::DMatrix;

pub fn from_laplacian_rows(n: usize, rows: &[f64]) -> WeightedDigraph {
    WeightedDigraph::from_laplacian(&DMatrix::from_row_slice(n, n, rows)).unwrap()
}

pub fn paired_roots() -> WeightedDigraph {
    from_laplacian_rows(
        4,
        &[
            1., -1., 0., 0., //
            -1., 1., 0., 0., //
            -1., 0., 1., 0., //
            -1., -1., 0., 2.,
        ],
    )
}

pub fn two_sources() -> WeightedDigraph {
    from_laplacian_rows(
        6,
        &[
            1., -1., 0., 0., 0., 0., //
            -1., 1., 0., 0., 0., 0., //
            -1., 0., 2., 0., -1., 0., //
            0., -1., 0., 2., 0., -1., //
            0., 0., 0., 0., 1., -1., //
            0., 0., 0., 0., -1., 1.,
        ],
    )
}

/// 12 vertices: roots 0 and 1 linked both ways, 0 feeds 2..=6, 1 feeds 7..=11.
pub fn double_star() -> WeightedDigraph {
    let mut l = DMatrix::<f64>::zeros(12, 12);
    l[(0, 0)] = 1.0;
    l[(0, 1)] = -1.0;
    l[(1, 0)] = -1.0;
    l[(1, 1)] = 1.0;
    for r in 2..12 {
        l[(r, r)] = 1.0;
        l[(r, if r < 7 { 0 } else { 1 })] = -1.0;
    }
    WeightedDigraph::from_laplacian(&l).unwrap()
}

pub fn two_node() -> WeightedDigraph {
    WeightedDigraph::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap()
}

/// Digraph on `n` vertices from a bitmask over the `n(n-1)` ordered pairs.
pub fn digraph_from_mask(n: usize, mask: u64, weight: f64) -> WeightedDigraph {
    let mut edges = Vec::new();
    let mut bit = 0;
    for src in 0..n {
        for dst in 0..n {
            if src == dst {
                continue;
            }
            if mask >> bit & 1 == 1 {
                edges.push((src, dst, weight));
            }
            bit += 1;
        }
    }
    WeightedDigraph::from_edges(n, &edges).unwrap()
}

/// Brute force: vertex `r` roots a spanning tree iff BFS from `r` reaches everyone.
pub fn brute_force_roots(g: &WeightedDigraph) -> Vec<usize> {
    let n = g.n();
    (0..n)
        .filter(|&r| {
            let mut seen = vec![false; n];
            seen[r] = true;
            let mut stack = vec![r];
            while let Some(u) = stack.pop() {
                for v in 0..n {
                    if !seen[v] && g.edge_weight(u, v) > 0.0 {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            seen.iter().all(|&s| s)
        })
        .collect()
}

/// Pair coupling term straight from the max-form definition, over ordered
/// pairs `i != j`, negated back to the positive convention.
pub fn eta_by_enumeration(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut shared = 0.0;
            for k in 0..n {
                if k != i && k != j {
                    shared += m[(i, k)].min(m[(j, k)]);
                }
            }
            worst = worst.max(-(m[(i, j)] + m[(j, i)]) - shared);
        }
    }
    -worst
}

use consensus_core::dynamics::Trajectory;
use consensus_core::graph::WeightedRootAverage;
use consensus_core::protocol::ClassAFunction;

/// Shrinking within `2 dt |L|_inf sup|gamma|` between consecutive samples.
pub fn assert_shrinking(traj: &Trajectory, graph: &WeightedDigraph) {
    let norm = graph.laplacian().max_row_abs_sum();
    let sup_gamma = traj
        .samples
        .iter()
        .flat_map(|s| s.gamma.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let slack = 2.0 * traj.dt * norm * sup_gamma;
    for w in traj.samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let amax = a.x.iter().cloned().fold(f64::MIN, f64::max);
        let amin = a.x.iter().cloned().fold(f64::MAX, f64::min);
        let bmax = b.x.iter().cloned().fold(f64::MIN, f64::max);
        let bmin = b.x.iter().cloned().fold(f64::MAX, f64::min);
        assert!(
            bmax <= amax + slack,
            "max grew at t = {}: {amax} -> {bmax}",
            b.t
        );
        assert!(
            bmin >= amin - slack,
            "min shrank at t = {}: {amin} -> {bmin}",
            b.t
        );
    }
}

/// Largest drift of the weighted root average over the stored samples.
pub fn wra_drift(traj: &Trajectory, graph: &WeightedDigraph) -> f64 {
    let w = WeightedRootAverage::new(graph).unwrap();
    let w0 = w.eval(&traj.samples[0].x);
    traj.samples
        .iter()
        .map(|s| (w.eval(&s.x) - w0).abs())
        .fold(0.0, f64::max)
}

/// Every recorded selection lies in the band-widened Filippov interval.
pub fn assert_selections_valid(traj: &Trajectory, g: &ClassAFunction) {
    for s in &traj.samples {
        for (&x, &gamma) in s.x.iter().zip(&s.gamma) {
            let lo = g.left_limit(x - traj.band);
            let hi = g.right_limit(x + traj.band);
            let tol = 1e-12 * lo.abs().max(hi.abs()).max(1.0);
            assert!(
                gamma >= lo - tol && gamma <= hi + tol,
                "gamma {gamma} outside [{lo}, {hi}] at x = {x}, t = {}",
                s.t
            );
        }
    }
}
