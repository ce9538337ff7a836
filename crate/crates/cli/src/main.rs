use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use normgraph_core::graph::{nearest_node, GraphAgent};
use normgraph_core::harness::{
    apply_sweep, case_seed, fit_graph, fit_walk, run_benchmark, run_pipeline, run_sensitivity,
    sample_case, sensitivity_base, Case, ExperimentSpec, GraphSearchKind, Split, SweepKind,
    WalkKind,
};
use normgraph_core::io;
use normgraph_core::rng::derive_seed;
use normgraph_core::sim::{run_graph, run_norm, Positions, SimConfig, SimRecord};
use normgraph_core::walk::{project_log_to_graph, WalkModel};
use normgraph_core::BBox;

#[derive(Parser)]
#[command(
    name = "normgraph",
    version,
    about = "Norm-based vs graph-based epidemic simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON). Defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seeds.master` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct Methods {
    #[arg(long, default_value = "tsxm")]
    graph_search: GraphSearchKind,
    #[arg(long, default_value = "mac")]
    walk: WalkKind,
}

#[derive(Copy, Clone, ValueEnum)]
enum Mode {
    Norm,
    Graph,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation of the test case drawn from the seed.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "norm")]
        mode: Mode,
        /// Graph directory (nodes.csv, edges.csv); graph mode only.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Walk model file; graph mode only.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Fit a graph to the positions of a norm `simulate` run.
    FitGraph {
        #[command(flatten)]
        common: Common,
        /// Output directory of a norm `simulate` run.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "tsxm")]
        graph_search: GraphSearchKind,
    },
    /// Fit a walk model to a norm `simulate` run on a fitted graph.
    FitWalk {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value = "mac")]
        walk: WalkKind,
    },
    /// Run the full pipeline on one case.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        methods: Methods,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Tune on the training split and evaluate every configured method pair.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Sweep one case parameter and report agreement.
    Sensitivity {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        methods: Methods,
        #[arg(long)]
        sweep: SweepKind,
        /// Sweep interval; defaults to the sweep's standard range.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        range: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10)]
        cases: usize,
        #[arg(long)]
        replicates: Option<usize>,
    },
}

fn load_spec(common: &Common, fallback: fn() -> ExperimentSpec) -> Result<ExperimentSpec> {
    let mut spec = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentSpec::from_json(&text)?
        }
        None => fallback(),
    };
    if let Some(s) = common.seed {
        spec.seeds.master = s;
    }
    spec.validate()?;
    Ok(spec)
}

fn out_dir(common: &Common) -> Result<&Path> {
    fs::create_dir_all(&common.out)
        .with_context(|| format!("creating {}", common.out.display()))?;
    Ok(&common.out)
}

fn the_case(spec: &ExperimentSpec) -> Result<(u64, Case)> {
    let seed = case_seed(spec.seeds.master, Split::Test, 0);
    Ok((seed, sample_case(spec, seed)?))
}

fn write_manifest(
    dir: &Path,
    command: &str,
    spec: &ExperimentSpec,
    extra: serde_json::Value,
) -> Result<()> {
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": spec,
        "master_seed": spec.seeds.master,
        "details": extra,
    });
    io::write_json(&manifest, &dir.join("manifest.json"))?;
    Ok(())
}

fn write_record(dir: &Path, rec: &SimRecord) -> Result<()> {
    io::write_trajectory(&rec.trajectory, io::create(&dir.join("trajectory.csv"))?)?;
    match &rec.positions {
        Positions::Norm(log) => io::write_positions(log, io::create(&dir.join("positions.csv"))?)?,
        Positions::Graph(log) => {
            io::write_node_log(log, io::create(&dir.join("nodes_visited.csv"))?)?
        }
    }
    io::write_epi_log(&rec.epi, io::create(&dir.join("states.csv"))?)?;
    Ok(())
}

fn simulate(common: &Common, mode: Mode, graph: Option<&Path>, model: Option<&Path>) -> Result<()> {
    let spec = load_spec(common, ExperimentSpec::default)?;
    let dir = out_dir(common)?;
    let (seed, case) = the_case(&spec)?;
    let cfg = SimConfig::new(case.params.model(), spec.sim.steps);
    let rec = match mode {
        Mode::Norm => {
            if graph.is_some() || model.is_some() {
                bail!("--graph and --model apply to graph mode only");
            }
            run_norm(
                case.population.clone(),
                &case.env,
                &case.params,
                &spec.sim.walk,
                &cfg,
                derive_seed(seed, &[0]),
            )?
        }
        Mode::Graph => {
            let (Some(g), Some(m)) = (graph, model) else {
                bail!("graph mode needs --graph DIR and --model FILE");
            };
            let g = io::load_graph(g)?;
            let text = fs::read_to_string(m).with_context(|| format!("reading {}", m.display()))?;
            let walk = WalkModel::from_json(&text)?;
            walk.check_graph(&g)?;
            let pop = case
                .population
                .iter()
                .map(|a| GraphAgent {
                    epi: a.epi,
                    node: nearest_node(&g, a.pos),
                })
                .collect();
            let cfg = SimConfig {
                dt: spec.sim.contact_dt.unwrap_or(1.0),
                ..cfg
            };
            run_graph(pop, &g, &walk, &case.params, &cfg, derive_seed(seed, &[3]))?
        }
    };
    write_record(dir, &rec)?;
    let bbox = case.env.bbox();
    write_manifest(
        dir,
        "simulate",
        &spec,
        json!({ "case_seed": seed, "params": case.params, "env": case.env, "bbox": bbox }),
    )?;
    let last = rec.trajectory.counts.last().cloned().unwrap_or_default();
    println!(
        "{} steps, final counts {:?}",
        rec.trajectory.len().saturating_sub(1),
        last
    );
    Ok(())
}

/// Reads the bbox a norm run was recorded in.
fn run_bbox(run: &Path) -> Result<BBox> {
    let m: serde_json::Value = io::read_json(&run.join("manifest.json"))?;
    let b = m
        .pointer("/details/bbox")
        .context("manifest has no bbox; was the run made by `simulate --mode norm`?")?;
    Ok(serde_json::from_value(b.clone())?)
}

fn fit_graph_cmd(common: &Common, run: &Path, gs: GraphSearchKind) -> Result<()> {
    let spec = load_spec(common, ExperimentSpec::default)?;
    let dir = out_dir(common)?;
    let log = io::read_positions(io::open(&run.join("positions.csv"))?)?;
    let graph = fit_graph(
        gs,
        &log,
        &run_bbox(run)?,
        &spec.methods,
        derive_seed(spec.seeds.master, &[1]),
    )?;
    io::save_graph(&graph, dir)?;
    write_manifest(
        dir,
        "fit-graph",
        &spec,
        json!({ "run": run, "graph_search": gs }),
    )?;
    println!("{gs}: |V| = {}, |E| = {}", graph.n_nodes(), graph.n_edges());
    Ok(())
}

fn fit_walk_cmd(common: &Common, run: &Path, graph: &Path, wa: WalkKind) -> Result<()> {
    let spec = load_spec(common, ExperimentSpec::default)?;
    let dir = out_dir(common)?;
    let log = io::read_positions(io::open(&run.join("positions.csv"))?)?;
    let epi = io::read_epi_log(io::open(&run.join("states.csv"))?)?;
    let g = io::load_graph(graph)?;
    let nodes = project_log_to_graph(&log, &g);
    let model = fit_walk(
        wa,
        &nodes,
        &epi,
        &g,
        &spec.methods,
        derive_seed(spec.seeds.master, &[2]),
    )?;
    fs::write(dir.join("model.json"), model.to_json()?)?;
    write_manifest(
        dir,
        "fit-walk",
        &spec,
        json!({ "run": run, "graph": graph, "walk": wa }),
    )?;
    println!(
        "{wa}: fitted on {} frames over {} nodes",
        nodes.frames.len(),
        g.n_nodes()
    );
    Ok(())
}

fn evaluate(common: &Common, methods: &Methods, replicates: Option<usize>) -> Result<()> {
    let spec = load_spec(common, ExperimentSpec::default)?;
    let dir = out_dir(common)?;
    let (seed, case) = the_case(&spec)?;
    let reps = replicates.unwrap_or(spec.seeds.replicates);
    let r = run_pipeline(
        &case,
        &spec.sim,
        &spec.methods,
        methods.graph_search,
        methods.walk,
        reps,
        derive_seed(seed, &[9]),
    )?;
    let method = format!("{}+{}", methods.graph_search, methods.walk);
    let rows = vec![
        io::ResultRow {
            method: method.clone(),
            metric: "agreement".into(),
            mean: r.mean,
            std: r.std,
            n: reps,
        },
        io::ResultRow {
            method: method.clone(),
            metric: "n_nodes".into(),
            mean: r.n_nodes,
            std: 0.0,
            n: reps,
        },
        io::ResultRow {
            method: method.clone(),
            metric: "n_edges".into(),
            mean: r.n_edges,
            std: 0.0,
            n: reps,
        },
    ];
    io::write_results(&rows, io::create(&dir.join("results.csv"))?)?;
    io::write_json(&r, &dir.join("pipeline.json"))?;
    write_manifest(
        dir,
        "evaluate",
        &spec,
        json!({ "case_seed": seed, "method": method, "replicates": reps }),
    )?;
    println!(
        "{method}: agreement {:.4} ± {:.4}, |V| {}, |E| {}",
        r.mean, r.std, r.n_nodes, r.n_edges
    );
    Ok(())
}

fn benchmark(common: &Common, replicates: Option<usize>) -> Result<()> {
    let mut spec = load_spec(common, ExperimentSpec::default)?;
    if let Some(r) = replicates {
        spec.seeds.replicates = r;
    }
    let dir = out_dir(common)?;
    let report = run_benchmark(&spec)?;
    io::write_results(&report.result_rows(), io::create(&dir.join("results.csv"))?)?;
    io::write_json(&report, &dir.join("benchmark.json"))?;
    let seeds: Vec<_> = report
        .cases
        .iter()
        .map(|c| json!([c.split, c.index, c.seed]))
        .collect();
    write_manifest(dir, "benchmark", &spec, json!({ "case_seeds": seeds }))?;
    for r in &report.rows {
        println!(
            "{:<14} agreement {:.3} ± {:.3}  |V| {:.1}  |E| {:.1}",
            r.method(),
            r.agreement.mean,
            r.agreement.std,
            r.n_nodes.mean,
            r.n_edges.mean
        );
    }
    Ok(())
}

fn sensitivity(
    common: &Common,
    methods: &Methods,
    sweep: SweepKind,
    range: Option<&[f64]>,
    cases: usize,
    replicates: Option<usize>,
) -> Result<()> {
    let mut spec = load_spec(common, sensitivity_base)?;
    spec.methods.graph_search = vec![methods.graph_search];
    spec.methods.walk = vec![methods.walk];
    if let Some(r) = replicates {
        spec.seeds.replicates = r;
    }
    let range = match range {
        Some(&[lo, hi]) => [lo, hi],
        Some(_) => bail!("--range takes two values"),
        None => sweep.default_range(),
    };
    // fail fast on a sweep value the config cannot hold
    apply_sweep(&spec, sweep, range[1]).validate()?;
    let dir = out_dir(common)?;
    let report = run_sensitivity(&spec, sweep, range, cases)?;
    io::write_results(
        &[report.result_row()],
        io::create(&dir.join("results.csv"))?,
    )?;
    io::write_json(&report, &dir.join("sensitivity.json"))?;
    write_manifest(
        dir,
        "sensitivity",
        &spec,
        json!({ "sweep": sweep, "range": range, "cases": cases }),
    )?;
    println!(
        "{sweep} in [{}, {}]: agreement {:.3} ± {:.3} over {} cases",
        range[0], range[1], report.agreement.mean, report.agreement.std, report.agreement.n
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            common,
            mode,
            graph,
            model,
        } => simulate(&common, mode, graph.as_deref(), model.as_deref()),
        Command::FitGraph {
            common,
            run,
            graph_search,
        } => fit_graph_cmd(&common, &run, graph_search),
        Command::FitWalk {
            common,
            run,
            graph,
            walk,
        } => fit_walk_cmd(&common, &run, &graph, walk),
        Command::Evaluate {
            common,
            methods,
            replicates,
        } => evaluate(&common, &methods, replicates),
        Command::Benchmark { common, replicates } => benchmark(&common, replicates),
        Command::Sensitivity {
            common,
            methods,
            sweep,
            range,
            cases,
            replicates,
        } => sensitivity(
            &common,
            &methods,
            sweep,
            range.as_deref(),
            cases,
            replicates,
        ),
    }
}
