//! TOML experiment description.

use std::fmt;
use std::path::{Path, PathBuf};

use consensus_core::dynamics::SimOptions;
use consensus_core::exec::stream_rng;
use consensus_core::graph::{parse_edge_list, WeightedDigraph};
use consensus_core::protocol::{Branch, Breakpoint, ClassAFunction, Piece};
use consensus_core::switching::{BlinkingModel, DurationDist};
use rand::Rng;
use serde::Deserialize;

use crate::error::CliError;

/// Random stream reserved for drawing initial states; streams 0 and 1 drive switching.
pub const X0_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Analyze,
    Fixed,
    Switching,
    Blinking,
    ExpectedEta,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Analyze => "analyze",
            Mode::Fixed => "fixed",
            Mode::Switching => "switching",
            Mode::Blinking => "blinking",
            Mode::ExpectedEta => "expected-eta",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub graph: Option<GraphSpec>,
    pub function: Option<FunctionSpec>,
    pub x0: Option<InitialState>,
    #[serde(default)]
    pub sim: SimSpec,
    pub switching: Option<SwitchingSpec>,
    pub blinking: Option<BlinkingSpec>,
    pub durations: Option<DurationSpec>,
    pub expected_eta: Option<EtaSpec>,
    pub analyze: Option<AnalyzeSpec>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text)
            .map_err(|e| CliError::config(e.to_string().trim_end().replace('\n', " ")))
    }

    pub fn graph(&self, base: &Path) -> Result<WeightedDigraph, CliError> {
        self.graph
            .as_ref()
            .ok_or_else(|| CliError::config("missing [graph] section"))?
            .build(base)
    }

    pub fn function(&self) -> Result<ClassAFunction, CliError> {
        match &self.function {
            Some(f) => f.build(),
            None => Err(CliError::config(
                "missing [function] section (try `preset = \"unit-jump\"`)",
            )),
        }
    }

    pub fn sim_options(&self) -> Result<SimOptions, CliError> {
        let o = self.sim.options();
        o.validate()
            .map_err(|e| CliError::config(format!("[sim]: {e}")))?;
        Ok(o)
    }

    pub fn durations(&self) -> Result<DurationDist, CliError> {
        let d = self.durations.unwrap_or_default().dist();
        d.validate()
            .map_err(|e| CliError::config(format!("[durations]: {e}")))?;
        Ok(d)
    }

    pub fn blinking_model(&self) -> Result<BlinkingModel, CliError> {
        let b = self
            .blinking
            .as_ref()
            .ok_or_else(|| CliError::config("missing [blinking] section"))?;
        BlinkingModel::new(b.n, b.k, b.p, b.weight)
            .map_err(|e| CliError::config(format!("[blinking]: {e}")))
    }
}

/// Exactly one of an inline edge list (with `n`) or an edge-list file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub n: Option<usize>,
    pub edges: Option<Vec<(usize, usize, f64)>>,
    pub edges_file: Option<PathBuf>,
}

impl GraphSpec {
    /// `edges_file` is resolved against `base`.
    pub fn build(&self, base: &Path) -> Result<WeightedDigraph, CliError> {
        match (&self.edges, &self.edges_file) {
            (Some(edges), None) => {
                let n = self.n.ok_or_else(|| {
                    CliError::config("[graph]: inline `edges` need a vertex count `n`")
                })?;
                WeightedDigraph::from_edges(n, edges)
                    .map_err(|e| CliError::config(format!("[graph]: {e}")))
            }
            (None, Some(file)) => {
                let path = base.join(file);
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    CliError::config(format!("cannot read edge list {}: {e}", path.display()))
                })?;
                let g = parse_edge_list(&text)
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
                if let Some(n) = self.n {
                    if n != g.n() {
                        return Err(CliError::config(format!(
                            "[graph]: n = {n} but {} declares {} vertices",
                            path.display(),
                            g.n()
                        )));
                    }
                }
                Ok(g)
            }
            (Some(_), Some(_)) => Err(CliError::config(
                "[graph]: give either `edges` or `edges_file`, not both",
            )),
            (None, None) => match self.n {
                Some(n) if n > 0 => Ok(WeightedDigraph::empty(n)),
                _ => Err(CliError::config(
                    "[graph]: needs `edges` with `n`, or `edges_file`",
                )),
            },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    pub preset: Option<String>,
    pub pieces: Option<Vec<PieceSpec>>,
    /// Optional declared limits; checked against the pieces.
    pub breakpoints: Option<Vec<BreakpointSpec>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceSpec {
    pub interval: [f64; 2],
    #[serde(default = "affine_kind")]
    pub kind: String,
    pub slope: f64,
    pub intercept: f64,
}

fn affine_kind() -> String {
    "affine".into()
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreakpointSpec {
    pub at: f64,
    pub left: f64,
    pub right: f64,
}

impl FunctionSpec {
    pub fn build(&self) -> Result<ClassAFunction, CliError> {
        let wrap = |e: consensus_core::protocol::ProtocolError| {
            CliError::config(format!("[function]: {e}"))
        };
        match (&self.preset, &self.pieces) {
            (Some(name), None) => {
                if self.breakpoints.is_some() {
                    return Err(CliError::config(
                        "[function]: presets carry their own breakpoints",
                    ));
                }
                ClassAFunction::preset(name).map_err(wrap)
            }
            (None, Some(pieces)) => {
                for (i, p) in pieces.iter().enumerate() {
                    if p.kind != "affine" {
                        return Err(CliError::config(format!(
                            "[function]: piece {i} has kind `{}`; only `affine` pieces can be configured",
                            p.kind
                        )));
                    }
                }
                let raw: Vec<(f64, f64, f64, f64)> = pieces
                    .iter()
                    .map(|p| (p.interval[0], p.interval[1], p.slope, p.intercept))
                    .collect();
                match &self.breakpoints {
                    None => ClassAFunction::piecewise_affine(&raw).map_err(wrap),
                    Some(bps) => {
                        let pieces = raw
                            .iter()
                            .map(|&(lo, hi, slope, intercept)| Piece {
                                lo,
                                hi,
                                branch: Branch::affine(slope, intercept),
                            })
                            .collect();
                        let bps = bps
                            .iter()
                            .map(|b| Breakpoint {
                                at: b.at,
                                left: b.left,
                                right: b.right,
                            })
                            .collect();
                        ClassAFunction::new(pieces, bps).map_err(wrap)
                    }
                }
            }
            (Some(_), Some(_)) => Err(CliError::config(
                "[function]: give either `preset` or `pieces`, not both",
            )),
            (None, None) => Err(CliError::config("[function]: needs `preset` or `pieces`")),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialState {
    Explicit {
        values: Vec<f64>,
    },
    /// I.i.d. uniform on `[lo, hi)`; `seed` defaults to the run seed.
    Uniform {
        lo: f64,
        hi: f64,
        seed: Option<u64>,
    },
    /// Non-consensus witness for graphs without a spanning tree: one source
    /// component at `high`, everything it cannot reach at `low`, the rest uniform.
    Adversarial {
        high: f64,
        low: f64,
        #[serde(default = "minus_five")]
        lo: f64,
        #[serde(default = "plus_five")]
        hi: f64,
        seed: Option<u64>,
    },
}

fn minus_five() -> f64 {
    -5.0
}

fn plus_five() -> f64 {
    5.0
}

impl InitialState {
    pub fn build(
        &self,
        n: usize,
        run_seed: u64,
        graph: Option<&WeightedDigraph>,
    ) -> Result<Vec<f64>, CliError> {
        let uniform = |lo: f64, hi: f64| -> Result<(), CliError> {
            if lo < hi && lo.is_finite() && hi.is_finite() {
                Ok(())
            } else {
                Err(CliError::config(format!(
                    "[x0]: need finite lo < hi, got [{lo}, {hi}]"
                )))
            }
        };
        let x = match self {
            InitialState::Explicit { values } => values.clone(),
            InitialState::Uniform { lo, hi, seed } => {
                uniform(*lo, *hi)?;
                let mut rng = stream_rng(seed.unwrap_or(run_seed), X0_STREAM);
                (0..n).map(|_| rng.random_range(*lo..*hi)).collect()
            }
            InitialState::Adversarial {
                high,
                low,
                lo,
                hi,
                seed,
            } => {
                uniform(*lo, *hi)?;
                let graph = graph.ok_or_else(|| {
                    CliError::config("[x0]: adversarial states need a fixed [graph]")
                })?;
                let mut rng = stream_rng(seed.unwrap_or(run_seed), X0_STREAM);
                consensus_core::dynamics::non_consensus_witness(graph, *high, *low, |_| {
                    rng.random_range(*lo..*hi)
                })
                .ok_or_else(|| {
                    CliError::config(
                        "[x0]: adversarial states need a graph without a spanning tree",
                    )
                })?
            }
        };
        if x.len() != n {
            return Err(CliError::config(format!(
                "[x0]: {} values for {n} agents",
                x.len()
            )));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(CliError::config(format!("[x0]: non-finite value {v}")));
        }
        Ok(x)
    }
}

/// Unset fields fall back to [`SimOptions::default`].
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub dt: Option<f64>,
    pub band: Option<f64>,
    pub consensus_tol: Option<f64>,
    pub t_max: Option<f64>,
    pub output_stride: Option<usize>,
}

impl SimSpec {
    pub fn options(&self) -> SimOptions {
        let d = SimOptions::default();
        SimOptions {
            dt: self.dt.unwrap_or(d.dt),
            band: self.band.unwrap_or(d.band),
            consensus_tol: self.consensus_tol.unwrap_or(d.consensus_tol),
            t_max: self.t_max.unwrap_or(d.t_max),
            output_stride: self.output_stride.unwrap_or(d.output_stride),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingSpec {
    #[serde(default)]
    pub graphs: Vec<MixtureEntry>,
    pub delta: Option<f64>,
    /// Write every `k`-th interval graph; 0 disables.
    #[serde(default)]
    pub dump_graphs_stride: usize,
    #[serde(default = "yes")]
    pub stop_at_consensus: bool,
}

fn yes() -> bool {
    true
}

/// One candidate topology with its selection probability (default equal).
#[derive(Debug, Clone, Deserialize)]
pub struct MixtureEntry {
    pub probability: Option<f64>,
    #[serde(flatten)]
    pub graph: GraphSpec,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlinkingSpec {
    pub n: usize,
    #[serde(default)]
    pub k: usize,
    pub p: f64,
    #[serde(default = "blinking_weight")]
    pub weight: f64,
}

fn blinking_weight() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DurationSpec {
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
}

impl Default for DurationSpec {
    fn default() -> Self {
        DurationSpec::Uniform { lo: 0.0, hi: 1.0 }
    }
}

impl DurationSpec {
    pub fn dist(&self) -> DurationDist {
        match *self {
            DurationSpec::Constant { value } => DurationDist::Constant(value),
            DurationSpec::Uniform { lo, hi } => DurationDist::Uniform { lo, hi },
            DurationSpec::Exponential { rate } => DurationDist::Exponential { rate },
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaSpec {
    #[serde(default = "eta_samples")]
    pub samples: usize,
}

impl Default for EtaSpec {
    fn default() -> Self {
        Self {
            samples: eta_samples(),
        }
    }
}

fn eta_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeSpec {
    #[serde(default)]
    pub deltas: Vec<f64>,
}
