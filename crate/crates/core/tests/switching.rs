mod common;

use std::sync::Arc;

use common::*;
use consensus_core::dynamics::SimOptions;
use consensus_core::exec::{stream_rng, Execution};
use consensus_core::graph::graph_scrambling;
use consensus_core::protocol::ClassAFunction;
use consensus_core::switching::{
    estimate_expected_eta, estimate_expected_eta_with, sample_blinking, sample_schedule,
    simulate_switching, BlinkingModel, DurationDist, FixedGraph, GraphSampler, SwitchingOptions,
    SwitchingProcess, SwitchingRun, DECAY_SLACK_STEPS,
};
use rand::Rng;

fn unit_jump() -> ClassAFunction {
    ClassAFunction::preset("unit-jump").unwrap()
}

fn paired_roots_process() -> SwitchingProcess {
    SwitchingProcess::new(
        DurationDist::Constant(1.0),
        Arc::new(FixedGraph(paired_roots())),
    )
    .unwrap()
}

fn blinking_process(p: f64) -> SwitchingProcess {
    let m = BlinkingModel::new(50, 0, p, 0.1).unwrap();
    SwitchingProcess::new(DurationDist::Uniform { lo: 0.0, hi: 1.0 }, Arc::new(m)).unwrap()
}

/// Per-interval decay, monotone V across switches, and the chained bound.
fn check_decay(run: &SwitchingRun) {
    let slack = DECAY_SLACK_STEPS * run.trajectory.dt;
    let eps = run.summary.epsilon;
    let v0 = run.intervals[0].v_start;
    let mut exponent = 0.0;
    for (k, r) in run.intervals.iter().enumerate() {
        assert!(r.eta >= 0.0);
        assert!(r.v_end <= r.bound_rhs + slack, "interval {k}: {r:?}");
        assert!(r.v_end <= r.v_start + slack, "interval {k}: {r:?}");
        exponent += eps * r.eta * r.dt;
        let chained = (-exponent).exp() * v0 + (k + 1) as f64 * slack;
        assert!(r.v_end <= chained, "interval {k}: {} > {chained}", r.v_end);
        if k > 0 {
            assert_eq!(r.v_start, run.intervals[k - 1].v_end);
        }
    }
    assert_eq!(run.summary.decay_violations, 0);
}

#[test]
fn constant_schedule_and_replay() {
    let p = SwitchingProcess::new(
        DurationDist::Constant(1.0),
        Arc::new(FixedGraph(paired_roots())),
    )
    .unwrap();
    let starts: Vec<f64> = sample_schedule(&p, 3.5, 9)
        .unwrap()
        .iter()
        .map(|s| s.start)
        .collect();
    assert_eq!(starts, vec![0.0, 1.0, 2.0, 3.0]);

    let b = blinking_process(0.1);
    let a = sample_schedule(&b, 20.0, 42).unwrap();
    let again = sample_schedule(&b, 20.0, 42).unwrap();
    assert_eq!(a, again);
    assert_ne!(a, sample_schedule(&b, 20.0, 43).unwrap());
    for w in a.windows(2) {
        assert!(w[1].start > w[0].start);
        assert_eq!(w[1].start, w[0].start + w[0].duration);
    }
}

#[test]
fn durations_do_not_depend_on_the_graph_sampler() {
    // Same seed, different graph source: identical switch times.
    let a = sample_schedule(&blinking_process(0.1), 30.0, 5).unwrap();
    let b = sample_schedule(&blinking_process(0.9), 30.0, 5).unwrap();
    let ta: Vec<f64> = a.iter().map(|s| s.start).collect();
    let tb: Vec<f64> = b.iter().map(|s| s.start).collect();
    assert_eq!(ta, tb);
}

#[test]
fn renewal_rate_matches_mean_duration() {
    for (dist, horizon) in [
        (DurationDist::Uniform { lo: 0.0, hi: 1.0 }, 5_000.0),
        (DurationDist::Exponential { rate: 4.0 }, 2_000.0),
    ] {
        let p = SwitchingProcess::new(dist, Arc::new(FixedGraph(two_node()))).unwrap();
        let count = sample_schedule(&p, horizon, 17).unwrap().len() as f64;
        let expect = horizon / dist.mean();
        assert!(
            (count - expect).abs() <= 0.05 * expect,
            "{dist:?}: {count} vs {expect}"
        );
    }
}

#[test]
fn blinking_extremes() {
    let mut rng = stream_rng(1, 0);
    let full = sample_blinking(&BlinkingModel::new(7, 0, 1.0, 0.3).unwrap(), &mut rng);
    assert_eq!(
        full,
        consensus_core::graph::WeightedDigraph::complete(7, 0.3).unwrap()
    );
    let empty = sample_blinking(&BlinkingModel::new(7, 0, 0.0, 0.3).unwrap(), &mut rng);
    assert_eq!(empty.edge_count(), 0);
    assert_eq!(graph_scrambling(&empty), 0.0);
}

#[test]
fn blinking_edge_count_is_binomial() {
    let m = BlinkingModel::new(50, 0, 0.1, 0.1).unwrap();
    let samples = 10_000;
    let mut rng = stream_rng(2024, 1);
    let total: usize = (0..samples)
        .map(|_| sample_blinking(&m, &mut rng).edge_count())
        .sum();
    let mean = total as f64 / samples as f64;
    let sd_mean = (2450.0 * 0.1 * 0.9f64).sqrt() / (samples as f64).sqrt();
    assert!(
        (mean - 245.0).abs() <= 3.0 * sd_mean,
        "mean {mean}, 3 sigma {}",
        3.0 * sd_mean
    );
}

#[test]
fn blinking_links_are_uncorrelated() {
    let m = BlinkingModel::new(12, 1, 0.3, 0.1).unwrap();
    let samples = 10_000;
    let mut rng = stream_rng(8, 1);
    let graphs: Vec<_> = (0..samples)
        .map(|_| sample_blinking(&m, &mut rng))
        .collect();
    // a reversed pair, pairs sharing an endpoint, and a disjoint pair
    let pairs = [
        ((0, 5), (5, 0)),
        ((0, 5), (0, 6)),
        ((3, 8), (10, 8)),
        ((2, 7), (4, 10)),
    ];
    let bound = 3.0 / (samples as f64).sqrt();
    for ((a, b), (c, d)) in pairs {
        assert!(!m.is_backbone(a, b) && !m.is_backbone(c, d));
        let u: Vec<f64> = graphs
            .iter()
            .map(|g| (g.edge_weight(a, b) > 0.0) as u8 as f64)
            .collect();
        let v: Vec<f64> = graphs
            .iter()
            .map(|g| (g.edge_weight(c, d) > 0.0) as u8 as f64)
            .collect();
        let r = correlation(&u, &v);
        assert!(r.abs() <= bound, "links {a}->{b}, {c}->{d}: r = {r}");
    }
}

fn correlation(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len() as f64;
    let (mu, mv) = (u.iter().sum::<f64>() / n, v.iter().sum::<f64>() / n);
    let cov: f64 = u.iter().zip(v).map(|(a, b)| (a - mu) * (b - mv)).sum();
    let su: f64 = u.iter().map(|a| (a - mu).powi(2)).sum();
    let sv: f64 = v.iter().map(|b| (b - mv).powi(2)).sum();
    cov / (su * sv).sqrt()
}

#[test]
fn paired_roots_process_decays_at_least_exponentially() {
    let g = unit_jump();
    let mut rng = stream_rng(61, 0);
    let x0: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
    let opts = SwitchingOptions {
        sim: SimOptions {
            t_max: 10.0,
            ..SimOptions::default()
        },
        seed: 61,
        delta: Some(1.0),
        stop_at_consensus: false,
    };
    let run = simulate_switching(&paired_roots_process(), &g, &x0, &opts).unwrap();
    assert_eq!(run.summary.epsilon, 1.0);
    assert_eq!(run.intervals.len(), 10);
    let v0 = run.intervals[0].v_start;
    let slack = DECAY_SLACK_STEPS * opts.sim.dt;
    for r in &run.intervals {
        assert_eq!(r.eta, 1.0);
        assert_eq!(r.delta_scrambling, Some(true));
        let k = (r.k + 1) as f64;
        assert!(
            r.v_end <= v0 * (-k).exp() + slack,
            "k = {k}: {} vs {}",
            r.v_end,
            v0 * (-k).exp()
        );
    }
    check_decay(&run);
    assert_eq!(run.summary.delta_scrambling_fraction(), Some(1.0));
    assert_shrinking(&run.trajectory, &paired_roots());
    assert_selections_valid(&run.trajectory, &g);
}

#[test]
fn consensus_start_reports_zero_disagreement() {
    let opts = SwitchingOptions {
        sim: SimOptions {
            t_max: 5.0,
            ..SimOptions::default()
        },
        stop_at_consensus: false,
        ..SwitchingOptions::default()
    };
    let run = simulate_switching(&paired_roots_process(), &unit_jump(), &[0.7; 4], &opts).unwrap();
    assert!(!run.intervals.is_empty());
    for r in &run.intervals {
        assert_eq!((r.v_start, r.v_end), (0.0, 0.0));
    }
}

#[test]
fn blinking_run_reaches_consensus_and_respects_the_bound() {
    let g = unit_jump();
    let mut rng = stream_rng(3, 7);
    let x0: Vec<f64> = (0..50).map(|_| rng.random_range(-5.0..5.0)).collect();
    let opts = SwitchingOptions {
        sim: SimOptions {
            t_max: 400.0,
            consensus_tol: 1e-3,
            output_stride: 100,
            ..SimOptions::default()
        },
        seed: 3,
        delta: Some(0.1),
        stop_at_consensus: true,
    };
    let run = simulate_switching(&blinking_process(0.1), &g, &x0, &opts).unwrap();
    assert!(
        run.summary.consensus_reached,
        "final spread {}",
        run.summary.final_spread
    );
    check_decay(&run);
    let m = BlinkingModel::new(50, 0, 0.1, 0.1).unwrap();
    for s in &run.trajectory.samples {
        assert!(s.t <= 400.0);
    }
    assert!(m.laplacian_bound() >= 0.1);
}

#[test]
fn expected_eta_on_fixed_and_extreme_samplers() {
    let fixed = FixedGraph(paired_roots());
    let e = estimate_expected_eta(&fixed, 100, 1).unwrap();
    assert_eq!((e.mean, e.std_error), (1.0, 0.0));
    assert!(e.certifies_positive());

    let off = BlinkingModel::new(10, 0, 0.0, 0.1).unwrap();
    let e = estimate_expected_eta(&off, 100, 1).unwrap();
    assert_eq!(e.mean, 0.0);
    assert!(!e.certifies_positive());

    let on = BlinkingModel::new(10, 0, 1.0, 0.1).unwrap();
    let e = estimate_expected_eta(&on, 100, 1).unwrap();
    assert!((e.mean - 1.0).abs() < 1e-12);
    assert!(e.std_error < 1e-12);
    assert!(estimate_expected_eta(&on, 1, 1).is_err());
}

#[test]
fn expected_eta_is_backend_independent() {
    let m = BlinkingModel::new(8, 1, 0.5, 0.2).unwrap();
    let seq = estimate_expected_eta_with(Execution::Sequential, &m, 500, 99).unwrap();
    let par = estimate_expected_eta_with(Execution::default(), &m, 500, 99).unwrap();
    assert_eq!(seq, par);
    assert!(seq.mean > 0.0);
}
