//! Filippov-aware integration of `x' = -L g(x)` on a fixed graph.
//!
//! Each step picks a selection `gamma_i in K[g](x_i)`. Agents away from every
//! breakpoint use `g(x_i)`. Agents inside the tolerance band of a breakpoint get
//! the selection that keeps them still (`(L gamma)_i = 0`), clamped into
//! `[g(d-), g(d+)]` one violator at a time; those left strictly inside the
//! interval are sliding and stay pinned to the breakpoint. An explicit Euler
//! step follows, shortened so that no agent jumps over a breakpoint.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::graph::{
    left_null_vector, root_partition, GraphError, Laplacian, SpanningTree, WeightedDigraph,
    WeightedRootAverage,
};
use crate::protocol::{Breakpoint, ClassAFunction};

/// Selections this far outside their interval trigger clamping.
const CLAMP_TOL: f64 = 1e-12;

/// `finite_time_bound` treats the average as sitting on a breakpoint within this distance.
pub const BREAKPOINT_SNAP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid option `{name}` = {value}: must be positive and finite")]
    BadOption { name: &'static str, value: f64 },
    #[error("state has {got} entries, graph has {expected} vertices")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state is not finite at t = {t} (agent {agent})")]
    NonFinite { t: f64, agent: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    /// Distance from a breakpoint inside which an agent counts as on it.
    pub band: f64,
    pub consensus_tol: f64,
    pub t_max: f64,
    /// Integrator steps between stored trajectory samples.
    pub output_stride: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            band: 1e-6,
            consensus_tol: 1e-6,
            t_max: 100.0,
            output_stride: 10,
        }
    }
}

impl SimOptions {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (name, value) in [
            ("dt", self.dt),
            ("band", self.band),
            ("consensus_tol", self.consensus_tol),
            ("t_max", self.t_max),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(DynamicsError::BadOption { name, value });
            }
        }
        if self.output_stride == 0 {
            return Err(DynamicsError::BadOption {
                name: "output_stride",
                value: 0.0,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub x: Vec<f64>,
}

/// Max, min and spread of a state vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disagreement {
    pub max: f64,
    pub min: f64,
    pub spread: f64,
}

pub fn disagreement(x: &[f64]) -> Disagreement {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    if x.is_empty() {
        return Disagreement {
            max: 0.0,
            min: 0.0,
            spread: 0.0,
        };
    }
    Disagreement {
        max,
        min,
        spread: max - min,
    }
}

/// One stored point of a trajectory, with the selection used from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub gamma: Vec<f64>,
    pub sliding: Vec<usize>,
}

impl Sample {
    pub fn spread(&self) -> f64 {
        disagreement(&self.x).spread
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub dt: f64,
    pub band: f64,
    pub seed: Option<u64>,
}

impl Trajectory {
    pub fn new(opts: &SimOptions) -> Self {
        Self {
            samples: Vec::new(),
            dt: opts.dt,
            band: opts.band,
            seed: None,
        }
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// CSV with header `t,x_0,...,x_{n-1},V`.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let n = self.samples.first().map_or(0, |s| s.x.len());
        out.push('t');
        for i in 0..n {
            write!(out, ",x_{i}").unwrap();
        }
        out.push_str(",V\n");
        for s in &self.samples {
            write!(out, "{}", s.t).unwrap();
            for v in &s.x {
                write!(out, ",{v}").unwrap();
            }
            writeln!(out, ",{}", s.spread()).unwrap();
        }
        out
    }
}

/// Result of a single integrator step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: State,
    /// Selection used for the step.
    pub gamma: Vec<f64>,
    /// Agents held on a breakpoint during the step.
    pub sliding: Vec<usize>,
    /// Step length actually taken.
    pub h: f64,
    /// The step was shortened to land an agent on a breakpoint.
    pub event: bool,
    /// The sliding system was singular and the midpoint fallback was used.
    pub singular_fallback: bool,
}

/// Selection at a state.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub gamma: Vec<f64>,
    pub sliding: Vec<usize>,
    /// Breakpoint each banded agent is attached to.
    pub banded: Vec<(usize, Breakpoint)>,
    pub singular_fallback: bool,
}

/// Reusable integrator for one Laplacian and coupling function.
#[derive(Debug, Clone)]
pub struct Stepper<'g> {
    n: usize,
    /// Off-diagonal nonzeros per row as `(j, l_ij)`.
    rows: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
    dense: DMatrix<f64>,
    g: &'g ClassAFunction,
    opts: SimOptions,
}

impl<'g> Stepper<'g> {
    pub fn new(
        l: &Laplacian,
        g: &'g ClassAFunction,
        opts: SimOptions,
    ) -> Result<Self, DynamicsError> {
        opts.validate()?;
        let m = l.matrix();
        let n = l.n();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && m[(i, j)] != 0.0)
                    .map(|j| (j, m[(i, j)]))
                    .collect()
            })
            .collect();
        let diag = (0..n).map(|i| m[(i, i)]).collect();
        Ok(Self {
            n,
            rows,
            diag,
            dense: m.clone(),
            g,
            opts,
        })
    }

    pub fn options(&self) -> &SimOptions {
        &self.opts
    }

    /// `(L gamma)_i`.
    fn row_dot(&self, i: usize, gamma: &[f64]) -> f64 {
        self.rows[i]
            .iter()
            .fold(self.diag[i] * gamma[i], |acc, &(j, l)| acc + l * gamma[j])
    }

    pub fn select(&self, x: &[f64]) -> Selection {
        let g = self.g;
        let band = self.opts.band;
        let mut gamma = vec![0.0; self.n];
        let mut banded = Vec::new();
        for (i, &xi) in x.iter().enumerate() {
            match g.breakpoint_near(xi, band) {
                Some(bp) => {
                    banded.push((i, *bp));
                    gamma[i] = 0.5 * (bp.left + bp.right);
                }
                None => {
                    gamma[i] = g
                        .value(xi)
                        .unwrap_or_else(|| g.eval_interval(xi).midpoint())
                }
            }
        }
        if banded.is_empty() {
            return Selection {
                gamma,
                sliding: Vec::new(),
                banded,
                singular_fallback: false,
            };
        }

        // positions into `banded` still free to slide
        let mut free: Vec<usize> = (0..banded.len()).collect();
        let mut singular_fallback = false;
        while !free.is_empty() {
            let (solution, singular) = self.solve_sliding(&banded, &free, &gamma);
            singular_fallback |= singular;
            for (&p, &v) in free.iter().zip(solution.iter()) {
                gamma[banded[p].0] = v;
            }
            // worst violator
            let mut worst: Option<(usize, f64, f64)> = None;
            for (slot, &p) in free.iter().enumerate() {
                let bp = &banded[p].1;
                let v = gamma[banded[p].0];
                let scale = CLAMP_TOL * bp.left.abs().max(bp.right.abs()).max(1.0);
                let (excess, bound) = if v > bp.right + scale {
                    (v - bp.right, bp.right)
                } else if v < bp.left - scale {
                    (bp.left - v, bp.left)
                } else {
                    continue;
                };
                if worst.is_none_or(|(_, e, _)| excess > e) {
                    worst = Some((slot, excess, bound));
                }
            }
            match worst {
                Some((slot, _, bound)) => {
                    let p = free.remove(slot);
                    gamma[banded[p].0] = bound;
                }
                None => break,
            }
        }
        let mut sliding: Vec<usize> = free
            .iter()
            .map(|&p| {
                let (i, bp) = banded[p];
                gamma[i] = gamma[i].clamp(bp.left, bp.right);
                i
            })
            .collect();
        sliding.sort_unstable();
        Selection {
            gamma,
            sliding,
            banded,
            singular_fallback,
        }
    }

    /// Solves `(L gamma)_i = 0` for the free banded agents, all others fixed.
    fn solve_sliding(
        &self,
        banded: &[(usize, Breakpoint)],
        free: &[usize],
        gamma: &[f64],
    ) -> (Vec<f64>, bool) {
        let k = free.len();
        let idx: Vec<usize> = free.iter().map(|&p| banded[p].0).collect();
        let a = DMatrix::from_fn(k, k, |r, c| self.dense[(idx[r], idx[c])]);
        let mut fixed = gamma.to_vec();
        for &i in &idx {
            fixed[i] = 0.0;
        }
        let b = DVector::from_fn(k, |r, _| -self.row_dot(idx[r], &fixed));
        let lu = a.clone().full_piv_lu();
        if lu.is_invertible() {
            if let Some(sol) = lu.solve(&b) {
                if sol.iter().all(|v| v.is_finite()) {
                    return (sol.iter().copied().collect(), false);
                }
            }
        }
        // Singular: the solution closest to the interval midpoints.
        let mid = DVector::from_fn(k, |r, _| {
            let bp = &banded[free[r]].1;
            0.5 * (bp.left + bp.right)
        });
        let resid = &b - &a * &mid;
        let svd = a.svd(true, true);
        let eps = 1e-10 * svd.singular_values.max().max(1.0);
        let correction = svd.solve(&resid, eps).unwrap_or_else(|_| DVector::zeros(k));
        ((mid + correction).iter().copied().collect(), true)
    }

    /// One step from `state`, never longer than `h_max`.
    pub fn advance(&self, state: &State, h_max: f64) -> Result<StepOutcome, DynamicsError> {
        let sel = self.select(&state.x);
        self.advance_with(state, sel, h_max)
    }

    fn advance_with(
        &self,
        state: &State,
        sel: Selection,
        h_max: f64,
    ) -> Result<StepOutcome, DynamicsError> {
        let n = self.n;
        let band = self.opts.band;
        let mut pinned: Vec<Option<f64>> = vec![None; n];
        let mut attached: Vec<bool> = vec![false; n];
        for &(i, bp) in &sel.banded {
            attached[i] = true;
            if sel.sliding.binary_search(&i).is_ok() {
                pinned[i] = Some(bp.at);
            }
        }
        let velocity: Vec<f64> = (0..n)
            .map(|i| {
                if pinned[i].is_some() {
                    0.0
                } else {
                    -self.row_dot(i, &sel.gamma)
                }
            })
            .collect();

        let mut h = self.opts.dt.min(h_max);
        let mut landing: Vec<Option<(f64, f64)>> = vec![None; n];
        for i in 0..n {
            let v = velocity[i];
            if v == 0.0 || pinned[i].is_some() {
                continue;
            }
            let skip = if attached[i] { band } else { 0.0 };
            let xi = state.x[i];
            let next = if v > 0.0 {
                self.g.next_breakpoint_above(xi, skip)
            } else {
                self.g.next_breakpoint_below(xi, skip)
            };
            if let Some(bp) = next {
                let tau = (bp.at - xi) / v;
                if tau <= h {
                    landing[i] = Some((tau, bp.at));
                }
            }
        }
        let mut event = false;
        if let Some(tau_min) = landing
            .iter()
            .flatten()
            .map(|&(tau, _)| tau)
            .reduce(f64::min)
        {
            if tau_min < h {
                h = tau_min;
            }
            event = true;
        }

        let mut x = Vec::with_capacity(n);
        for i in 0..n {
            let xi = match (pinned[i], landing[i]) {
                (Some(d), _) => d,
                (None, Some((tau, d))) if tau <= h * (1.0 + 1e-12) => d,
                _ => state.x[i] + h * velocity[i],
            };
            if !xi.is_finite() {
                return Err(DynamicsError::NonFinite {
                    t: state.t + h,
                    agent: i,
                });
            }
            x.push(xi);
        }
        Ok(StepOutcome {
            state: State { t: state.t + h, x },
            gamma: sel.gamma,
            sliding: sel.sliding,
            h,
            event,
            singular_fallback: sel.singular_fallback,
        })
    }

    /// Integrates from `state` up to time `t_end` or until the spread drops
    /// below the consensus tolerance (when `stop_at_consensus`), storing every
    /// `output_stride`-th step into `traj`.
    pub(crate) fn run(
        &self,
        mut state: State,
        t_end: f64,
        stop_at_consensus: bool,
        traj: &mut Trajectory,
        counters: &mut RunCounters,
    ) -> Result<State, DynamicsError> {
        let tol = self.opts.consensus_tol;
        // time comparisons tolerate accumulated rounding in t
        let t_eps = 1e-9 * t_end.abs().max(1.0);
        while state.t < t_end - t_eps {
            if stop_at_consensus && disagreement(&state.x).spread < tol {
                break;
            }
            let sel = self.select(&state.x);
            if counters
                .steps
                .is_multiple_of(self.opts.output_stride as u64)
            {
                traj.samples.push(Sample {
                    t: state.t,
                    x: state.x.clone(),
                    gamma: sel.gamma.clone(),
                    sliding: sel.sliding.clone(),
                });
            }
            let out = self.advance_with(&state, sel, t_end - state.t)?;
            counters.steps += 1;
            counters.events += out.event as u64;
            counters.singular_fallbacks += out.singular_fallback as u64;
            state = out.state;
            if (t_end - state.t).abs() <= t_eps {
                state.t = t_end;
            }
        }
        Ok(state)
    }

    pub(crate) fn sample_at(&self, state: &State) -> Sample {
        let sel = self.select(&state.x);
        Sample {
            t: state.t,
            x: state.x.clone(),
            gamma: sel.gamma,
            sliding: sel.sliding,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunCounters {
    pub steps: u64,
    pub events: u64,
    pub singular_fallbacks: u64,
}

/// One explicit step of `x' = -L gamma`.
pub fn step(
    state: &State,
    l: &Laplacian,
    g: &ClassAFunction,
    opts: &SimOptions,
) -> Result<StepOutcome, DynamicsError> {
    if state.x.len() != l.n() {
        return Err(DynamicsError::DimensionMismatch {
            expected: l.n(),
            got: state.x.len(),
        });
    }
    Stepper::new(l, g, *opts)?.advance(state, opts.dt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedSummary {
    pub consensus_reached: bool,
    /// Mean of the final state, when consensus was reached.
    pub consensus_value: Option<f64>,
    pub time_to_tol: Option<f64>,
    /// Weighted root average of the initial state, when a spanning tree exists.
    pub wra_predicted: Option<f64>,
    pub final_time: f64,
    pub final_spread: f64,
    pub counters: RunCounters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedRun {
    pub trajectory: Trajectory,
    pub summary: FixedSummary,
}

/// Integrates on a fixed graph until consensus or `t_max`.
pub fn simulate_fixed(
    graph: &WeightedDigraph,
    g: &ClassAFunction,
    x0: &[f64],
    opts: &SimOptions,
) -> Result<FixedRun, DynamicsError> {
    if x0.len() != graph.n() {
        return Err(DynamicsError::DimensionMismatch {
            expected: graph.n(),
            got: x0.len(),
        });
    }
    if let Some(agent) = x0.iter().position(|v| !v.is_finite()) {
        return Err(DynamicsError::NonFinite { t: 0.0, agent });
    }
    let l = graph.laplacian();
    let stepper = Stepper::new(&l, g, *opts)?;
    let wra_predicted = WeightedRootAverage::new(graph).ok().map(|w| w.eval(x0));

    let mut traj = Trajectory::new(opts);
    let mut counters = RunCounters::default();
    let start = State {
        t: 0.0,
        x: x0.to_vec(),
    };
    let end = stepper.run(start, opts.t_max, true, &mut traj, &mut counters)?;
    if traj.last().is_none_or(|s| s.t < end.t) {
        traj.samples.push(stepper.sample_at(&end));
    }
    let spread = disagreement(&end.x).spread;
    let reached = spread < opts.consensus_tol;
    let summary = FixedSummary {
        consensus_reached: reached,
        consensus_value: reached.then(|| end.x.iter().sum::<f64>() / end.x.len() as f64),
        time_to_tol: reached.then_some(end.t),
        wra_predicted,
        final_time: end.t,
        final_spread: spread,
        counters,
    };
    Ok(FixedRun {
        trajectory: traj,
        summary,
    })
}

/// `V_L(x) = sum_i xi_i int_{xbar}^{x_i} [g(s) - gamma_bar] ds`, with `xi` the
/// normalised left null vector of the (irreducible) `l` and `gamma_bar` the
/// midpoint of `K[g](xbar)`.
pub fn lyapunov_vl(
    x: &[f64],
    l: &Laplacian,
    g: &ClassAFunction,
    xbar: f64,
) -> Result<f64, DynamicsError> {
    if x.len() != l.n() {
        return Err(DynamicsError::DimensionMismatch {
            expected: l.n(),
            got: x.len(),
        });
    }
    let xi = left_null_vector(l.matrix())?.xi;
    Ok(vl_with_weights(x, &xi, g, xbar))
}

fn vl_with_weights(x: &[f64], xi: &[f64], g: &ClassAFunction, xbar: f64) -> f64 {
    let gamma_bar = g.eval_interval(xbar).midpoint();
    x.iter()
        .zip(xi)
        .map(|(&xi_val, &w)| w * (g.integral(xbar, xi_val) - gamma_bar * (xi_val - xbar)))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub enum FiniteTimeBound {
    Bound {
        t_star: f64,
        xbar: f64,
        /// Second largest eigenvalue of `-(Xi L + L^T Xi)` (nonpositive).
        lambda2: f64,
        v_l: f64,
        jump: f64,
    },
    /// The consensus value is a continuity point of `g`.
    NotApplicable { xbar: f64 },
}

impl FiniteTimeBound {
    pub fn t_star(&self) -> Option<f64> {
        match self {
            FiniteTimeBound::Bound { t_star, .. } => Some(*t_star),
            FiniteTimeBound::NotApplicable { .. } => None,
        }
    }
}

/// `T* = 4 V_L(x0) / (|lambda2| (g(xbar+) - g(xbar-))^2)` for a strongly connected graph.
pub fn finite_time_bound(
    l: &Laplacian,
    g: &ClassAFunction,
    x0: &[f64],
) -> Result<FiniteTimeBound, DynamicsError> {
    let n = l.n();
    if x0.len() != n {
        return Err(DynamicsError::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    let xi = left_null_vector(l.matrix())?.xi;
    let raw: f64 = xi.iter().zip(x0).map(|(w, v)| w * v).sum();
    let bp = match g.breakpoint_near(raw, BREAKPOINT_SNAP * raw.abs().max(1.0)) {
        Some(bp) => *bp,
        None => return Ok(FiniteTimeBound::NotApplicable { xbar: raw }),
    };
    let xbar = bp.at;
    let v_l = vl_with_weights(x0, &xi, g, xbar);
    let jump = bp.jump();
    if n == 1 {
        return Ok(FiniteTimeBound::Bound {
            t_star: 0.0,
            xbar,
            lambda2: 0.0,
            v_l,
            jump,
        });
    }
    let xi_m = DMatrix::from_diagonal(&DVector::from_column_slice(&xi));
    let lm = l.matrix();
    let sym = -(&xi_m * lm + lm.transpose() * &xi_m);
    let mut eig: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let lambda2 = eig[1];
    let t_star = if v_l == 0.0 {
        0.0
    } else {
        4.0 * v_l / (lambda2.abs() * jump * jump)
    };
    Ok(FiniteTimeBound::Bound {
        t_star,
        xbar,
        lambda2,
        v_l,
        jump,
    })
}

/// Initial state that cannot reach consensus on a graph without a spanning tree.
///
/// One source component gets `a`, the vertices it cannot reach get `c`, and
/// the remaining vertices it does reach get `middle(vertex)`. The first and
/// last groups have no inputs from outside themselves, so they never move.
/// Returns `None` when the graph has a spanning tree.
pub fn non_consensus_witness(
    graph: &WeightedDigraph,
    a: f64,
    c: f64,
    mut middle: impl FnMut(usize) -> f64,
) -> Option<Vec<f64>> {
    let sources = match root_partition(graph) {
        SpanningTree::Rooted(_) => return None,
        SpanningTree::None { source_components } => source_components,
    };
    let root_set = &sources[0];
    let reach = graph.reachable_from(root_set);
    Some(
        (0..graph.n())
            .map(|v| {
                if root_set.contains(&v) {
                    a
                } else if reach[v] {
                    middle(v)
                } else {
                    c
                }
            })
            .collect(),
    )
}
