//! Consensus of multi-agent systems `x_i' = -sum_j l_ij g(x_j)` with a
//! discontinuous, increasing coupling `g`, on fixed and randomly switching
//! weighted digraphs.
//!
//! - [`graph`]: digraphs, Laplacians, root sets, weighted root average, scrambling.
//! - [`protocol`]: class A coupling functions and their set-valued extension.
//! - [`dynamics`]: Filippov-aware Euler integration and fixed-topology diagnostics.
//! - [`switching`]: random switching processes, blinking networks, decay checks.
//! - [`exec`]: sequential / parallel batch execution with reproducible streams.

// `!(a > b)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod exec;
pub mod graph;
pub mod protocol;
pub mod switching;

pub use dynamics::{
    disagreement, finite_time_bound, lyapunov_vl, non_consensus_witness, simulate_fixed, step,
    Disagreement, DynamicsError, FiniteTimeBound, FixedRun, FixedSummary, SimOptions, State,
    StepOutcome, Trajectory,
};
pub use exec::Execution;
pub use graph::{
    is_delta_scrambling, laplacian, left_null_vector, root_partition, scrambling_coefficient, wra,
    GraphError, Laplacian, RootPartition, RootWeights, SpanningTree, WeightedDigraph,
};
pub use protocol::{
    epsilon_separation, eval_interval, validate_class_a, ClassAFunction, FilippovInterval,
    ProtocolError,
};
pub use switching::{
    estimate_expected_eta, sample_blinking, sample_schedule, simulate_switching, BlinkingModel,
    DurationDist, IntervalReport, SwitchingOptions, SwitchingProcess,
};
