//! Randomly switching topologies and the per-interval decay check.
//!
//! Interval lengths and graphs are drawn from two separate random streams of
//! the run seed, so the duration sequence is independent of the graph sequence.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::dynamics::{
    disagreement, DynamicsError, RunCounters, SimOptions, State, Stepper, Trajectory,
};
use crate::exec::{map_indexed, stream_rng, Execution};
use crate::graph::{graph_scrambling, is_delta_scrambling, GraphError, WeightedDigraph};
use crate::protocol::{epsilon_separation, ClassAFunction, ProtocolError};

const DURATION_STREAM: u64 = 0;
const GRAPH_STREAM: u64 = 1;

/// Per-interval slack for the decay inequality, in multiples of the step size.
pub const DECAY_SLACK_STEPS: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwitchingError {
    #[error("invalid duration distribution: {0}")]
    BadDurations(String),
    #[error("duration sample {0} is not positive")]
    NonPositiveDuration(f64),
    #[error("invalid graph sampler: {0}")]
    BadSampler(String),
    #[error("invalid blinking model: {0}")]
    BadBlinking(String),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("t_max must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("initial state has {got} entries, process has {expected} vertices")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Separation(#[from] ProtocolError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// I.i.d. interval lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DurationDist {
    Constant(f64),
    /// Uniform on the open interval `(lo, hi)`.
    Uniform {
        lo: f64,
        hi: f64,
    },
    Exponential {
        rate: f64,
    },
}

impl DurationDist {
    pub fn validate(&self) -> Result<(), SwitchingError> {
        let bad = |m: String| Err(SwitchingError::BadDurations(m));
        match *self {
            DurationDist::Constant(c) if !(c > 0.0 && c.is_finite()) => {
                bad(format!("constant {c}"))
            }
            DurationDist::Uniform { lo, hi } if !(lo >= 0.0 && lo < hi && hi.is_finite()) => {
                bad(format!("uniform({lo}, {hi}) needs 0 <= lo < hi"))
            }
            DurationDist::Exponential { rate } if !(rate > 0.0 && rate.is_finite()) => {
                bad(format!("exponential rate {rate}"))
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DurationDist::Constant(c) => c,
            DurationDist::Uniform { lo, hi } => 0.5 * (lo + hi),
            DurationDist::Exponential { rate } => 1.0 / rate,
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        match *self {
            DurationDist::Constant(c) => c,
            DurationDist::Uniform { lo, hi } => loop {
                let v = lo + (hi - lo) * rng.random::<f64>();
                if v > lo {
                    break v;
                }
            },
            DurationDist::Exponential { rate } => {
                let exp = Exp::new(rate).expect("validated rate");
                loop {
                    let v: f64 = exp.sample(rng);
                    if v > 0.0 {
                        break v;
                    }
                }
            }
        }
    }
}

/// Source of i.i.d. interval graphs.
pub trait GraphSampler: Send + Sync {
    fn n(&self) -> usize;
    fn sample(&self, rng: &mut dyn RngCore) -> WeightedDigraph;
    /// Uniform bound on `|l_ij|` over every graph the sampler can emit.
    fn laplacian_bound(&self) -> f64;
}

fn laplacian_abs_max(g: &WeightedDigraph) -> f64 {
    let w = g.weights();
    (0..g.n())
        .map(|i| w.row(i).iter().sum::<f64>().max(w.row(i).max()))
        .fold(0.0, f64::max)
}

/// Emits the same graph every interval.
#[derive(Debug, Clone)]
pub struct FixedGraph(pub WeightedDigraph);

impl GraphSampler for FixedGraph {
    fn n(&self) -> usize {
        self.0.n()
    }

    fn sample(&self, _rng: &mut dyn RngCore) -> WeightedDigraph {
        self.0.clone()
    }

    fn laplacian_bound(&self) -> f64 {
        laplacian_abs_max(&self.0)
    }
}

/// Picks one of several graphs with given probabilities.
#[derive(Debug, Clone)]
pub struct GraphMixture {
    graphs: Vec<WeightedDigraph>,
    cumulative: Vec<f64>,
}

impl GraphMixture {
    pub fn new(
        graphs: Vec<WeightedDigraph>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self, SwitchingError> {
        if graphs.is_empty() {
            return Err(SwitchingError::BadSampler("no graphs".into()));
        }
        let n = graphs[0].n();
        if graphs.iter().any(|g| g.n() != n) {
            return Err(SwitchingError::BadSampler(
                "graphs differ in vertex count".into(),
            ));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; graphs.len()]);
        if weights.len() != graphs.len() || weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(SwitchingError::BadSampler(
                "one nonnegative weight per graph required".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(SwitchingError::BadSampler("weights sum to zero".into()));
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Ok(Self { graphs, cumulative })
    }
}

impl GraphSampler for GraphMixture {
    fn n(&self) -> usize {
        self.graphs[0].n()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> WeightedDigraph {
        if self.graphs.len() == 1 {
            return self.graphs[0].clone();
        }
        let u: f64 = rng.random();
        let k = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.graphs.len() - 1);
        self.graphs[k].clone()
    }

    fn laplacian_bound(&self) -> f64 {
        self.graphs
            .iter()
            .map(laplacian_abs_max)
            .fold(0.0, f64::max)
    }
}

/// Directed blinking network: a ring backbone where every vertex is linked
/// both ways to its `k` nearest neighbours on each side, plus every other
/// directed link switched on independently with probability `p` per interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlinkingModel {
    pub n: usize,
    pub k: usize,
    pub p: f64,
    pub weight: f64,
}

impl BlinkingModel {
    pub fn new(n: usize, k: usize, p: f64, weight: f64) -> Result<Self, SwitchingError> {
        if n == 0 {
            return Err(SwitchingError::BadBlinking("n must be positive".into()));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(SwitchingError::BadBlinking(format!(
                "p = {p} outside [0, 1]"
            )));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(SwitchingError::BadBlinking(format!(
                "weight = {weight} must be positive"
            )));
        }
        Ok(Self { n, k, p, weight })
    }

    pub fn is_backbone(&self, i: usize, j: usize) -> bool {
        let d = i.abs_diff(j);
        let ring = d.min(self.n - d);
        ring >= 1 && ring <= self.k
    }

    /// Number of directed links that blink.
    pub fn switchable_links(&self) -> usize {
        (0..self.n)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && !self.is_backbone(i, j))
            .count()
    }
}

pub fn sample_blinking(m: &BlinkingModel, rng: &mut dyn RngCore) -> WeightedDigraph {
    let n = m.n;
    let mut w = nalgebra::DMatrix::zeros(n, n);
    for dst in 0..n {
        for src in 0..n {
            if src == dst {
                continue;
            }
            let on = m.is_backbone(src, dst) || rng.random::<f64>() < m.p;
            if on {
                w[(dst, src)] = m.weight;
            }
        }
    }
    WeightedDigraph::new(w).expect("blinking weights are valid")
}

impl GraphSampler for BlinkingModel {
    fn n(&self) -> usize {
        self.n
    }

    fn sample(&self, rng: &mut dyn RngCore) -> WeightedDigraph {
        sample_blinking(self, rng)
    }

    fn laplacian_bound(&self) -> f64 {
        (self.n.saturating_sub(1)) as f64 * self.weight
    }
}

/// Durations plus graph source.
#[derive(Clone)]
pub struct SwitchingProcess {
    pub durations: DurationDist,
    pub graphs: Arc<dyn GraphSampler>,
}

impl std::fmt::Debug for SwitchingProcess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SwitchingProcess")
            .field("durations", &self.durations)
            .field("n", &self.graphs.n())
            .finish()
    }
}

impl SwitchingProcess {
    pub fn new(
        durations: DurationDist,
        graphs: Arc<dyn GraphSampler>,
    ) -> Result<Self, SwitchingError> {
        durations.validate()?;
        Ok(Self { durations, graphs })
    }

    pub fn n(&self) -> usize {
        self.graphs.n()
    }

    pub fn laplacian_bound(&self) -> f64 {
        self.graphs.laplacian_bound()
    }

    pub fn schedule(&self, t_max: f64, seed: u64) -> Result<ScheduleIter<'_>, SwitchingError> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(SwitchingError::BadHorizon(t_max));
        }
        Ok(ScheduleIter {
            process: self,
            durations: stream_rng(seed, DURATION_STREAM),
            graphs: stream_rng(seed, GRAPH_STREAM),
            t: 0.0,
            k: 0,
            t_max,
        })
    }
}

/// Topology held on `[start, start + duration)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchInterval {
    pub k: usize,
    pub start: f64,
    pub duration: f64,
    pub graph: WeightedDigraph,
}

/// Lazily generated switching schedule, truncated at `t_max`.
pub struct ScheduleIter<'a> {
    process: &'a SwitchingProcess,
    durations: rand_chacha::ChaCha8Rng,
    graphs: rand_chacha::ChaCha8Rng,
    t: f64,
    k: usize,
    t_max: f64,
}

impl Iterator for ScheduleIter<'_> {
    type Item = Result<SwitchInterval, SwitchingError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.t >= self.t_max {
            return None;
        }
        let duration = self.process.durations.sample(&mut self.durations);
        if !(duration > 0.0 && duration.is_finite()) {
            self.t = f64::INFINITY;
            return Some(Err(SwitchingError::NonPositiveDuration(duration)));
        }
        let graph = self.process.graphs.sample(&mut self.graphs);
        let item = SwitchInterval {
            k: self.k,
            start: self.t,
            duration,
            graph,
        };
        self.t += duration;
        self.k += 1;
        Some(Ok(item))
    }
}

/// All switching intervals starting before `t_max`.
pub fn sample_schedule(
    process: &SwitchingProcess,
    t_max: f64,
    seed: u64,
) -> Result<Vec<SwitchInterval>, SwitchingError> {
    process.schedule(t_max, seed)?.collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchingOptions {
    pub sim: SimOptions,
    pub seed: u64,
    /// Threshold for the δ-scrambling tally.
    pub delta: Option<f64>,
    pub stop_at_consensus: bool,
}

impl Default for SwitchingOptions {
    fn default() -> Self {
        Self {
            sim: SimOptions::default(),
            seed: 0,
            delta: None,
            stop_at_consensus: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalReport {
    pub k: usize,
    pub start: f64,
    /// Simulated length (the last interval is cut at the horizon).
    pub dt: f64,
    pub eta: f64,
    pub v_start: f64,
    pub v_end: f64,
    /// `v_start * exp(-eps * eta * dt)`.
    pub bound_rhs: f64,
    pub delta_scrambling: Option<bool>,
}

impl IntervalReport {
    pub fn decay_holds(&self, slack: f64) -> bool {
        self.eta < 0.0 || self.v_end <= self.bound_rhs + slack
    }
}

pub fn intervals_to_csv(reports: &[IntervalReport]) -> String {
    let mut out = String::from("k,dt,eta,v_start,v_end,bound_rhs\n");
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.k, r.dt, r.eta, r.v_start, r.v_end, r.bound_rhs
        )
        .unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSummary {
    pub epsilon: f64,
    pub epsilon_exact: bool,
    pub consensus_reached: bool,
    pub time_to_tol: Option<f64>,
    pub final_time: f64,
    pub final_spread: f64,
    /// `eps * sum_k eta_k dt_k`.
    pub cumulative_exponent: f64,
    pub interval_count: usize,
    pub delta: Option<f64>,
    pub delta_scrambling_count: usize,
    /// Intervals where `v_end > bound_rhs + DECAY_SLACK_STEPS * dt`.
    pub decay_violations: usize,
    pub counters: RunCounters,
}

impl SwitchingSummary {
    pub fn delta_scrambling_fraction(&self) -> Option<f64> {
        self.delta
            .filter(|_| self.interval_count > 0)
            .map(|_| self.delta_scrambling_count as f64 / self.interval_count as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingRun {
    pub trajectory: Trajectory,
    pub intervals: Vec<IntervalReport>,
    /// Graph of every interval, kept only when requested.
    pub graphs: Vec<WeightedDigraph>,
    pub summary: SwitchingSummary,
}

/// Integrates across the switching schedule and checks the decay bound per interval.
pub fn simulate_switching(
    process: &SwitchingProcess,
    g: &ClassAFunction,
    x0: &[f64],
    opts: &SwitchingOptions,
) -> Result<SwitchingRun, SwitchingError> {
    run_switching(process, g, x0, opts, None)
}

/// Like [`simulate_switching`], additionally keeping every `stride`-th interval graph.
pub fn simulate_switching_keep_graphs(
    process: &SwitchingProcess,
    g: &ClassAFunction,
    x0: &[f64],
    opts: &SwitchingOptions,
    stride: usize,
) -> Result<SwitchingRun, SwitchingError> {
    run_switching(process, g, x0, opts, Some(stride.max(1)))
}

fn run_switching(
    process: &SwitchingProcess,
    g: &ClassAFunction,
    x0: &[f64],
    opts: &SwitchingOptions,
    keep_graphs: Option<usize>,
) -> Result<SwitchingRun, SwitchingError> {
    let sim = opts.sim;
    sim.validate()?;
    if x0.len() != process.n() {
        return Err(SwitchingError::DimensionMismatch {
            expected: process.n(),
            got: x0.len(),
        });
    }
    if let Some(agent) = x0.iter().position(|v| !v.is_finite()) {
        return Err(DynamicsError::NonFinite { t: 0.0, agent }.into());
    }
    if let Some(d) = opts.delta {
        if !(d > 0.0 && d.is_finite()) {
            return Err(GraphError::BadDelta(d).into());
        }
    }
    // the trajectory stays inside the initial hull, so eps over the hull is valid throughout
    let hull = disagreement(x0);
    let sep = epsilon_separation(g, hull.min, hull.max)?;
    let eps = sep.epsilon;
    let slack = DECAY_SLACK_STEPS * sim.dt;

    let mut traj = Trajectory::new(&sim);
    traj.seed = Some(opts.seed);
    let mut counters = RunCounters::default();
    let mut state = State {
        t: 0.0,
        x: x0.to_vec(),
    };
    let mut reports = Vec::new();
    let mut graphs = Vec::new();
    let mut exponent = 0.0;
    let mut delta_count = 0;
    let mut violations = 0;
    let mut last_stepper_graph: Option<WeightedDigraph> = None;

    for interval in process.schedule(sim.t_max, opts.seed)? {
        let interval = interval?;
        let v_start = disagreement(&state.x).spread;
        if opts.stop_at_consensus && v_start < sim.consensus_tol {
            break;
        }
        let end = (interval.start + interval.duration).min(sim.t_max);
        let l = interval.graph.laplacian();
        let eta = graph_scrambling(&interval.graph);
        let stepper = Stepper::new(&l, g, sim)?;
        let start_t = state.t;
        state = stepper.run(state, end, opts.stop_at_consensus, &mut traj, &mut counters)?;
        let dt = state.t - start_t;
        let v_end = disagreement(&state.x).spread;
        let bound_rhs = v_start * (-eps * eta * dt).exp();
        let delta_scrambling = match opts.delta {
            Some(d) => Some(is_delta_scrambling(&interval.graph, d)?),
            None => None,
        };
        if delta_scrambling == Some(true) {
            delta_count += 1;
        }
        let report = IntervalReport {
            k: interval.k,
            start: start_t,
            dt,
            eta,
            v_start,
            v_end,
            bound_rhs,
            delta_scrambling,
        };
        if !report.decay_holds(slack) {
            violations += 1;
        }
        exponent += eps * eta * dt;
        reports.push(report);
        if let Some(stride) = keep_graphs {
            if interval.k % stride == 0 {
                graphs.push(interval.graph.clone());
            }
        }
        last_stepper_graph = Some(interval.graph);
    }

    if traj.last().is_none_or(|s| s.t < state.t) {
        let graph = last_stepper_graph.unwrap_or_else(|| WeightedDigraph::empty(process.n()));
        let l = graph.laplacian();
        traj.samples
            .push(Stepper::new(&l, g, sim)?.sample_at(&state));
    }
    let final_spread = disagreement(&state.x).spread;
    let reached = final_spread < sim.consensus_tol;
    let summary = SwitchingSummary {
        epsilon: eps,
        epsilon_exact: sep.exact,
        consensus_reached: reached,
        time_to_tol: reached.then_some(state.t),
        final_time: state.t,
        final_spread,
        cumulative_exponent: exponent,
        interval_count: reports.len(),
        delta: opts.delta,
        delta_scrambling_count: delta_count,
        decay_violations: violations,
        counters,
    };
    Ok(SwitchingRun {
        trajectory: traj,
        intervals: reports,
        graphs,
        summary,
    })
}

/// Monte Carlo estimate of `E eta(-L)` over a graph sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    /// Fraction of samples that were scrambling.
    pub scrambling_fraction: f64,
}

impl EtaEstimate {
    /// `mean - 3 * std_error > 0`.
    pub fn certifies_positive(&self) -> bool {
        self.mean - 3.0 * self.std_error > 0.0
    }
}

pub fn estimate_expected_eta(
    sampler: &dyn GraphSampler,
    n_samples: usize,
    seed: u64,
) -> Result<EtaEstimate, SwitchingError> {
    estimate_expected_eta_with(Execution::default(), sampler, n_samples, seed)
}

/// Sample `i` draws from stream `i` of `seed`, so the estimate does not
/// depend on the execution back end.
pub fn estimate_expected_eta_with(
    exec: Execution,
    sampler: &dyn GraphSampler,
    n_samples: usize,
    seed: u64,
) -> Result<EtaEstimate, SwitchingError> {
    if n_samples < 2 {
        return Err(SwitchingError::TooFewSamples(n_samples));
    }
    let etas = map_indexed(exec, n_samples, |i| {
        let mut rng = stream_rng(seed, i as u64);
        graph_scrambling(&sampler.sample(&mut rng))
    });
    let n = n_samples as f64;
    let mean = etas.iter().sum::<f64>() / n;
    let var = etas.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let scrambling = etas.iter().filter(|&&e| e > 0.0).count();
    Ok(EtaEstimate {
        mean,
        std_error: (var / n).sqrt(),
        samples: n_samples,
        scrambling_fraction: scrambling as f64 / n,
    })
}
