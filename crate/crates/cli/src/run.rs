use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use consensus_core::dynamics::{finite_time_bound, simulate_fixed, FiniteTimeBound, SimOptions};
use consensus_core::exec::{derive_seed, map_indexed, Execution};
use consensus_core::graph::{
    graph_scrambling, is_delta_scrambling, root_partition, write_edge_list, SpanningTree,
    WeightedDigraph, WeightedRootAverage,
};
use consensus_core::protocol::{epsilon_separation, ClassAFunction};
use consensus_core::switching::{
    estimate_expected_eta_with, intervals_to_csv, simulate_switching,
    simulate_switching_keep_graphs, GraphMixture, GraphSampler, SwitchingError, SwitchingOptions,
    SwitchingProcess,
};
use serde_json::{json, Map, Value};

use crate::config::{ExperimentConfig, Mode, SwitchingSpec};
use crate::error::CliError;
use crate::examples::find_example;

/// Raw config text plus where relative paths inside it resolve from.
#[derive(Debug, Clone)]
pub struct ConfigSource {
    pub label: String,
    pub text: String,
    pub base_dir: PathBuf,
}

impl ConfigSource {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            label,
            text,
            base_dir,
        })
    }

    pub fn bundled(name: &str) -> Result<Self, CliError> {
        let ex = find_example(name).ok_or_else(|| {
            CliError::config(format!(
                "no bundled example `{name}` (run `consensus-lab examples` for the list)"
            ))
        })?;
        Ok(Self {
            label: ex.name.to_string(),
            text: ex.text.to_string(),
            base_dir: PathBuf::from("."),
        })
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub t_max: Option<f64>,
    pub runs: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub output_dir: PathBuf,
    pub summary: Value,
    /// One-line human-readable outcome.
    pub headline: String,
}

struct Prepared<'a> {
    mode: Mode,
    cfg: ExperimentConfig,
    source: &'a ConfigSource,
    sim: SimOptions,
}

pub fn run(mode: Mode, source: &ConfigSource, overrides: &Overrides) -> Result<Report, CliError> {
    let cfg = ExperimentConfig::parse(&source.text)?;
    if let Some(m) = cfg.mode {
        if m != mode {
            return Err(CliError::config(format!(
                "config `{}` is for mode `{m}`, not `{mode}`",
                source.label
            )));
        }
    }
    let seed = overrides.seed.unwrap_or(cfg.seed);
    let mut sim = cfg.sim_options()?;
    if let Some(t) = overrides.t_max {
        sim.t_max = t;
        sim.validate()
            .map_err(|e| CliError::config(format!("--t-max: {e}")))?;
    }
    let out = overrides
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&source.label));
    let runs = overrides.runs.unwrap_or(1);
    if runs == 0 {
        return Err(CliError::config("--runs must be at least 1"));
    }
    if runs > 1 && matches!(mode, Mode::Analyze | Mode::ExpectedEta) {
        return Err(CliError::config(format!(
            "--runs is not supported in `{mode}` mode"
        )));
    }
    let prep = Prepared {
        mode,
        cfg,
        source,
        sim,
    };

    if runs == 1 {
        let (summary, headline) = run_once(&prep, seed, &out)?;
        return Ok(Report {
            output_dir: out,
            summary,
            headline,
        });
    }

    let results = map_indexed(Execution::default(), runs, |i| {
        let run_seed = derive_seed(seed, i as u64);
        run_once(&prep, run_seed, &out.join(format!("run_{i:03}"))).map(|(s, _)| (run_seed, s))
    });
    let mut rows = Vec::with_capacity(runs);
    let mut csv = String::from("run,seed,consensus_reached,time_to_tol,final_spread\n");
    let mut reached = 0;
    for (i, r) in results.into_iter().enumerate() {
        let (run_seed, s) = r?;
        let ok = s["consensus_reached"].as_bool().unwrap_or(false);
        reached += ok as usize;
        csv.push_str(&format!(
            "{i},{run_seed},{ok},{},{}\n",
            s["time_to_tol"]
                .as_f64()
                .map_or(String::new(), |t| t.to_string()),
            s["final_spread"]
        ));
        rows.push(json!({
            "run": i,
            "seed": run_seed,
            "consensus_reached": ok,
            "time_to_tol": s["time_to_tol"],
            "final_spread": s["final_spread"],
        }));
    }
    let mut summary = header(&prep, seed, &out);
    summary.insert("runs".into(), json!(runs));
    summary.insert("runs_reaching_consensus".into(), json!(reached));
    summary.insert("per_run".into(), Value::Array(rows));
    let summary = Value::Object(summary);
    write(&out.join("runs.csv"), &csv)?;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(Report {
        output_dir: out,
        summary,
        headline: format!("{reached} of {runs} runs reached consensus"),
    })
}

fn run_once(prep: &Prepared, seed: u64, dir: &Path) -> Result<(Value, String), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut s = header(prep, seed, dir);
    let headline = match prep.mode {
        Mode::Analyze => analyze(prep, seed, dir, &mut s)?,
        Mode::Fixed => fixed(prep, seed, dir, &mut s)?,
        Mode::Switching => {
            let spec = switching_spec(&prep.cfg)?;
            let mixture = mixture(&prep.cfg, prep.source)?;
            switching(prep, Arc::new(mixture), &spec, seed, dir, &mut s)?
        }
        Mode::Blinking => {
            let spec = prep.cfg.switching.clone().unwrap_or(SwitchingSpec {
                graphs: Vec::new(),
                delta: None,
                dump_graphs_stride: 0,
                stop_at_consensus: true,
            });
            let model = prep.cfg.blinking_model()?;
            s.insert(
                "blinking".into(),
                json!({"n": model.n, "k": model.k, "p": model.p, "weight": model.weight}),
            );
            switching(prep, Arc::new(model), &spec, seed, dir, &mut s)?
        }
        Mode::ExpectedEta => expected_eta(prep, seed, &mut s)?,
    };
    let summary = Value::Object(s);
    write_json(&dir.join("summary.json"), &summary)?;
    Ok((summary, headline))
}

fn header(prep: &Prepared, seed: u64, dir: &Path) -> Map<String, Value> {
    let sim = prep.sim;
    let mut m = Map::new();
    m.insert("mode".into(), json!(prep.mode.name()));
    m.insert("seed".into(), json!(seed));
    m.insert("crate_version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert(
        "effective".into(),
        json!({
            "output_dir": dir.display().to_string(),
            "sim": {
                "dt": sim.dt,
                "band": sim.band,
                "consensus_tol": sim.consensus_tol,
                "t_max": sim.t_max,
                "output_stride": sim.output_stride,
            },
        }),
    );
    m.insert(
        "config".into(),
        json!({"source": prep.source.label, "text": prep.source.text}),
    );
    m
}

fn analyze(
    prep: &Prepared,
    seed: u64,
    dir: &Path,
    s: &mut Map<String, Value>,
) -> Result<String, CliError> {
    let graph = prep.cfg.graph(&prep.source.base_dir)?;
    write(&dir.join("graph.edges"), &write_edge_list(&graph))?;
    let deltas = prep.cfg.analyze.clone().unwrap_or_default().deltas;
    graph_report(&graph, &deltas, s)?;
    let g = prep.cfg.function.as_ref().map(|f| f.build()).transpose()?;
    if let Some(spec) = &prep.cfg.x0 {
        let x0 = spec.build(graph.n(), seed, Some(&graph))?;
        s.insert("wra_predicted".into(), wra_json(&graph, &x0));
        if let Some(g) = &g {
            s.insert(
                "finite_time_bound".into(),
                finite_time_json(&graph, g, &x0)?,
            );
            s.insert("epsilon".into(), epsilon_json(g, &x0));
        }
        s.insert("x0".into(), json!(x0));
    }
    Ok(format!(
        "spanning tree: {}; eta = {}; scrambling: {}",
        s["spanning_tree"], s["eta"], s["scrambling"]
    ))
}

fn fixed(
    prep: &Prepared,
    seed: u64,
    dir: &Path,
    s: &mut Map<String, Value>,
) -> Result<String, CliError> {
    let graph = prep.cfg.graph(&prep.source.base_dir)?;
    let g = prep.cfg.function()?;
    let x0 = prep
        .cfg
        .x0
        .as_ref()
        .ok_or_else(|| CliError::config("missing [x0] section"))?
        .build(graph.n(), seed, Some(&graph))?;
    write(&dir.join("graph.edges"), &write_edge_list(&graph))?;
    graph_report(&graph, &[], s)?;

    let mut run = simulate_fixed(&graph, &g, &x0, &prep.sim).map_err(CliError::runtime)?;
    run.trajectory.seed = Some(seed);
    write(&dir.join("trajectory.csv"), &run.trajectory.to_csv())?;

    let sum = &run.summary;
    s.insert("x0".into(), json!(x0));
    s.insert("consensus_reached".into(), json!(sum.consensus_reached));
    s.insert("consensus_value".into(), json!(sum.consensus_value));
    s.insert("wra_predicted".into(), json!(sum.wra_predicted));
    s.insert("time_to_tol".into(), json!(sum.time_to_tol));
    s.insert("final_time".into(), json!(sum.final_time));
    s.insert("final_spread".into(), json!(sum.final_spread));
    s.insert(
        "finite_time_bound".into(),
        finite_time_json(&graph, &g, &x0)?,
    );
    s.insert(
        "integrator".into(),
        json!({
            "steps": sum.counters.steps,
            "events": sum.counters.events,
            "singular_fallbacks": sum.counters.singular_fallbacks,
        }),
    );
    Ok(match (sum.consensus_value, sum.wra_predicted) {
        (Some(v), Some(w)) => format!(
            "consensus at {v} after t = {}; predicted {w}",
            sum.final_time
        ),
        (Some(v), None) => format!("consensus at {v} after t = {}", sum.final_time),
        (None, _) => format!(
            "no consensus by t = {}; final spread {}",
            sum.final_time, sum.final_spread
        ),
    })
}

fn switching(
    prep: &Prepared,
    sampler: Arc<dyn GraphSampler>,
    spec: &SwitchingSpec,
    seed: u64,
    dir: &Path,
    s: &mut Map<String, Value>,
) -> Result<String, CliError> {
    let g = prep.cfg.function()?;
    let n = sampler.n();
    let x0 = prep
        .cfg
        .x0
        .as_ref()
        .ok_or_else(|| CliError::config("missing [x0] section"))?
        .build(n, seed, None)?;
    let process = SwitchingProcess::new(prep.cfg.durations()?, sampler)
        .map_err(|e| CliError::config(e.to_string()))?;
    let opts = SwitchingOptions {
        sim: prep.sim,
        seed,
        delta: spec.delta,
        stop_at_consensus: spec.stop_at_consensus,
    };
    let run = if spec.dump_graphs_stride > 0 {
        simulate_switching_keep_graphs(&process, &g, &x0, &opts, spec.dump_graphs_stride)
    } else {
        simulate_switching(&process, &g, &x0, &opts)
    }
    .map_err(switching_error)?;

    write(&dir.join("trajectory.csv"), &run.trajectory.to_csv())?;
    write(
        &dir.join("intervals.csv"),
        &intervals_to_csv(&run.intervals),
    )?;
    if spec.dump_graphs_stride > 0 {
        let gdir = dir.join("graphs");
        fs::create_dir_all(&gdir)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", gdir.display())))?;
        for (j, graph) in run.graphs.iter().enumerate() {
            let k = j * spec.dump_graphs_stride;
            write(
                &gdir.join(format!("interval_{k:05}.edges")),
                &write_edge_list(graph),
            )?;
        }
    }

    let sum = &run.summary;
    let etas: Vec<f64> = run.intervals.iter().map(|r| r.eta).collect();
    let scrambling = etas.iter().filter(|&&e| e > 0.0).count();
    s.insert("n".into(), json!(n));
    s.insert(
        "durations".into(),
        json!(format!("{:?}", process.durations)),
    );
    s.insert("x0".into(), json!(x0));
    s.insert(
        "epsilon".into(),
        json!({"value": sum.epsilon, "exact": sum.epsilon_exact}),
    );
    s.insert("consensus_reached".into(), json!(sum.consensus_reached));
    s.insert("time_to_tol".into(), json!(sum.time_to_tol));
    s.insert("final_time".into(), json!(sum.final_time));
    s.insert("final_spread".into(), json!(sum.final_spread));
    s.insert("cumulative_exponent".into(), json!(sum.cumulative_exponent));
    s.insert("interval_count".into(), json!(sum.interval_count));
    s.insert("scrambling_intervals".into(), json!(scrambling));
    s.insert(
        "delta_scrambling".into(),
        json!({
            "delta": sum.delta,
            "count": sum.delta_scrambling_count,
            "fraction": sum.delta_scrambling_fraction(),
        }),
    );
    s.insert("decay_violations".into(), json!(sum.decay_violations));
    s.insert(
        "integrator".into(),
        json!({
            "steps": sum.counters.steps,
            "events": sum.counters.events,
            "singular_fallbacks": sum.counters.singular_fallbacks,
        }),
    );
    Ok(format!(
        "{} after t = {} over {} intervals; final spread {}; decay violations {}",
        if sum.consensus_reached {
            "consensus"
        } else {
            "no consensus"
        },
        sum.final_time,
        sum.interval_count,
        sum.final_spread,
        sum.decay_violations
    ))
}

fn expected_eta(
    prep: &Prepared,
    seed: u64,
    s: &mut Map<String, Value>,
) -> Result<String, CliError> {
    let sampler: Arc<dyn GraphSampler> = if prep.cfg.blinking.is_some() {
        Arc::new(prep.cfg.blinking_model()?)
    } else {
        Arc::new(mixture(&prep.cfg, prep.source)?)
    };
    let samples = prep.cfg.expected_eta.unwrap_or_default().samples;
    let e = estimate_expected_eta_with(Execution::default(), sampler.as_ref(), samples, seed)
        .map_err(|e| CliError::config(format!("[expected_eta]: {e}")))?;
    let certified = e.certifies_positive();
    s.insert("samples".into(), json!(e.samples));
    s.insert("mean".into(), json!(e.mean));
    s.insert("std_error".into(), json!(e.std_error));
    s.insert("lower_3sigma".into(), json!(e.mean - 3.0 * e.std_error));
    s.insert("scrambling_fraction".into(), json!(e.scrambling_fraction));
    s.insert("certified_positive".into(), json!(certified));
    Ok(format!(
        "E eta ~ {} +/- {} over {} samples; positive {}",
        e.mean,
        e.std_error,
        e.samples,
        if certified {
            "certified"
        } else {
            "NOT certified"
        }
    ))
}

fn switching_spec(cfg: &ExperimentConfig) -> Result<SwitchingSpec, CliError> {
    cfg.switching
        .clone()
        .ok_or_else(|| CliError::config("missing [switching] section"))
}

fn mixture(cfg: &ExperimentConfig, source: &ConfigSource) -> Result<GraphMixture, CliError> {
    let spec = switching_spec(cfg)?;
    if spec.graphs.is_empty() {
        return Err(CliError::config(
            "[switching]: list at least one [[switching.graphs]] entry",
        ));
    }
    let graphs = spec
        .graphs
        .iter()
        .map(|e| e.graph.build(&source.base_dir))
        .collect::<Result<Vec<_>, _>>()?;
    let weights = if spec.graphs.iter().any(|e| e.probability.is_some()) {
        Some(
            spec.graphs
                .iter()
                .map(|e| e.probability.unwrap_or(0.0))
                .collect(),
        )
    } else {
        None
    };
    GraphMixture::new(graphs, weights).map_err(|e| CliError::config(format!("[switching]: {e}")))
}

fn switching_error(e: SwitchingError) -> CliError {
    match e {
        SwitchingError::Separation(p) => CliError::config(format!(
            "[function]: {p}; use a function whose branches have slopes bounded away from zero on the initial hull"
        )),
        SwitchingError::DimensionMismatch { .. } | SwitchingError::BadHorizon(_) => CliError::config(e.to_string()),
        other => CliError::runtime(other),
    }
}

fn graph_report(
    graph: &WeightedDigraph,
    deltas: &[f64],
    s: &mut Map<String, Value>,
) -> Result<(), CliError> {
    let l = graph.laplacian();
    let rows: Vec<Vec<f64>> = (0..graph.n())
        .map(|i| l.matrix().row(i).iter().copied().collect())
        .collect();
    s.insert("n".into(), json!(graph.n()));
    s.insert("edge_count".into(), json!(graph.edge_count()));
    s.insert("laplacian".into(), json!(rows));
    s.insert(
        "strongly_connected".into(),
        json!(graph.is_strongly_connected()),
    );
    match root_partition(graph) {
        SpanningTree::Rooted(p) => {
            let w = WeightedRootAverage::new(graph).map_err(CliError::runtime)?;
            s.insert("spanning_tree".into(), json!(true));
            s.insert(
                "root_partition".into(),
                json!({
                    "roots": p.roots,
                    "non_roots": p.non_roots,
                    "permutation": p.permutation,
                    "xi": w.xi,
                }),
            );
        }
        SpanningTree::None { source_components } => {
            s.insert("spanning_tree".into(), json!(false));
            s.insert("source_components".into(), json!(source_components));
        }
    }
    let eta = graph_scrambling(graph);
    s.insert("eta".into(), json!(eta));
    s.insert("scrambling".into(), json!(eta > 0.0));
    let mut verdicts = Vec::new();
    for &d in deltas {
        let v = is_delta_scrambling(graph, d)
            .map_err(|e| CliError::config(format!("[analyze]: {e}")))?;
        verdicts.push(json!({"delta": d, "delta_scrambling": v}));
    }
    if !verdicts.is_empty() {
        s.insert("delta_scrambling".into(), Value::Array(verdicts));
    }
    Ok(())
}

fn wra_json(graph: &WeightedDigraph, x0: &[f64]) -> Value {
    WeightedRootAverage::new(graph).map_or(Value::Null, |w| json!(w.eval(x0)))
}

fn finite_time_json(
    graph: &WeightedDigraph,
    g: &ClassAFunction,
    x0: &[f64],
) -> Result<Value, CliError> {
    if !graph.is_strongly_connected() {
        return Ok(json!({"applicable": false, "reason": "graph is not strongly connected"}));
    }
    Ok(
        match finite_time_bound(&graph.laplacian(), g, x0).map_err(CliError::runtime)? {
            FiniteTimeBound::Bound {
                t_star,
                xbar,
                lambda2,
                v_l,
                jump,
            } => json!({
                "applicable": true,
                "t_star": t_star,
                "xbar": xbar,
                "lambda2": lambda2,
                "v_l": v_l,
                "jump": jump,
            }),
            FiniteTimeBound::NotApplicable { xbar } => json!({
                "applicable": false,
                "reason": "consensus value is a continuity point of g",
                "xbar": xbar,
            }),
        },
    )
}

fn epsilon_json(g: &ClassAFunction, x0: &[f64]) -> Value {
    let lo = x0.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match epsilon_separation(g, lo, hi) {
        Ok(sep) => json!({"value": sep.epsilon, "exact": sep.exact, "domain": [lo, hi]}),
        Err(e) => json!({"error": e.to_string(), "domain": [lo, hi]}),
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).map_err(CliError::runtime)?;
    text.push('\n');
    write(path, &text)
}
