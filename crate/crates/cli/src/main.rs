mod files;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fusplace::bench::{
    gen_synthetic, run_bench, synthetic_cluster, BenchConfig, BenchOptions, GraphSource, Method,
    SynthSpec,
};
use fusplace::fusion::gcof;
use fusplace::graph::{CompGraph, DeviceId, GraphFile};
use fusplace::milp::{build_model, export_lp};
use fusplace::profiles::apply_overrides;
use fusplace::simulator::{check_feasibility, simulate, Trace};
use fusplace::{PlacementFile, SolveBudget};

#[derive(Parser)]
#[command(
    name = "fusplace",
    version,
    about = "Operator coarsening and makespan-optimal device placement"
)]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse operators matching the rule set and write the coarsened graph.
    Coarsen {
        #[arg(long)]
        graph: PathBuf,
        /// Rule file; defaults to conv/bn, conv/bn/relu, conv/bn/add/relu.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Measured fused-operator times that replace member sums.
        #[arg(long)]
        overrides: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Place a graph on a cluster and write the timed placement.
    Place {
        #[command(flatten)]
        inst: Instance,
        #[arg(long, default_value = "exact")]
        method: Method,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a placement, write its event trace and check its schedule.
    Simulate {
        #[command(flatten)]
        inst: Instance,
        #[arg(long)]
        placement: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the placement MILP in LP format.
    ExportLp {
        #[command(flatten)]
        inst: Instance,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a seeded synthetic layered graph.
    Gen {
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        width: usize,
        /// Fraction of lanes that repeat the conv/bn/relu pattern.
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        /// Probability of each extra cross-lane edge.
        #[arg(long, default_value_t = 0.0)]
        edge_prob: f64,
        /// Comma-separated device ids to profile.
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        devices: Vec<DeviceId>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write a fully connected cluster for the devices.
        #[arg(long)]
        cluster_out: Option<PathBuf>,
        #[arg(long, default_value_t = 16 << 30)]
        device_mem: u64,
        /// Link bandwidth in bytes per second.
        #[arg(long, default_value_t = 1e10)]
        bandwidth: f64,
    },
    /// Run a benchmark described by a JSON config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Instance {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    cluster: PathBuf,
}

#[derive(Args)]
struct BudgetArgs {
    /// Wall-clock limit for the exact search, e.g. "60s" or "500ms".
    #[arg(long, value_parser = humantime::parse_duration)]
    budget: Option<Duration>,
    /// Relative optimality gap in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    gap: f64,
    #[arg(long)]
    node_limit: Option<u64>,
}

impl BudgetArgs {
    fn budget(&self) -> Result<SolveBudget> {
        if !(0.0..1.0).contains(&self.gap) {
            bail!("--gap must lie in [0, 1), got {}", self.gap);
        }
        Ok(SolveBudget {
            time_limit: self.budget,
            gap: self.gap,
            node_limit: self.node_limit,
        })
    }
}

fn coarsen(graph: &Path, rules: Option<&Path>, overrides: Option<&Path>, out: &Path) -> Result<()> {
    let g = files::load_graph(graph)?;
    let rules = files::load_rules(rules)?;
    let table = files::load_overrides(overrides)?;
    let c = gcof(&g, &rules)?;
    let mut file = GraphFile::from(&c);
    apply_overrides(&mut file.nodes, &table);
    let c = file.into_graph()?;
    files::save_graph(out, &c)?;
    println!("{} operators -> {}", g.len(), c.len());
    Ok(())
}

fn place(inst: &Instance, method: Method, budget: &BudgetArgs, out: &Path) -> Result<()> {
    let p = files::problem(&inst.graph, &inst.cluster)?;
    let sol = method.run(&p, budget.budget()?)?;
    files::write_json(out, &PlacementFile::from_schedule(&p, &sol.schedule))?;
    println!(
        "{}: makespan {}s, status {:?}, {} nodes",
        method.label(),
        sol.objective_s,
        sol.status,
        sol.stats.nodes
    );
    Ok(())
}

fn simulate_cmd(inst: &Instance, placement: &Path, out: &Path) -> Result<()> {
    let p = files::problem(&inst.graph, &inst.cluster)?;
    let file: PlacementFile = files::read_json(placement)?;
    let assign = file.assignment_indices(&p)?;
    let sim = simulate(&p, &assign)?;
    files::write_json(
        out,
        &Trace {
            makespan_s: sim.makespan_s,
            events: sim.trace,
        },
    )?;
    println!("simulated makespan {}s", sim.makespan_s);
    let violations = check_feasibility(&p, &file.to_schedule(&p)?);
    for v in &violations {
        eprintln!("violation {:?}: {}", v.kind, v.details);
    }
    if !violations.is_empty() {
        bail!("placement schedule has {} violation(s)", violations.len());
    }
    if (file.makespan_s - sim.makespan_s).abs() > fusplace::simulator::TIME_TOL {
        log::warn!(
            "file reports makespan {}s, replay gives {}s",
            file.makespan_s,
            sim.makespan_s
        );
    }
    Ok(())
}

fn load_source(src: &GraphSource, n: usize) -> Result<(String, CompGraph)> {
    Ok(match src {
        GraphSource::File { path } => {
            let name = Path::new(path)
                .file_stem()
                .map_or_else(|| format!("g{n}"), |s| s.to_string_lossy().into_owned());
            (name, files::load_graph(Path::new(path))?)
        }
        GraphSource::Synthetic { name, spec, seed } => {
            let name = name.clone().unwrap_or_else(|| format!("synth{n}-s{seed}"));
            (name, gen_synthetic(spec, *seed)?)
        }
    })
}

fn bench(config: &Path, out_dir: Option<&Path>) -> Result<()> {
    let cfg: BenchConfig = files::read_json(config)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let resolve = |p: &str| base.join(p);
    let cluster = files::load_cluster(&resolve(&cfg.cluster))?;
    let graphs = cfg
        .graphs
        .iter()
        .enumerate()
        .map(|(n, src)| match src {
            GraphSource::File { path } => load_source(
                &GraphSource::File {
                    path: resolve(path).to_string_lossy().into_owned(),
                },
                n,
            ),
            other => load_source(other, n),
        })
        .collect::<Result<Vec<_>>>()?;
    let opts = BenchOptions {
        methods: cfg.methods.clone(),
        baseline: cfg.baseline,
        budget: cfg.budget(),
        repeats: cfg.repeats,
        rules: files::load_rules(cfg.rules.as_deref().map(resolve).as_deref())?,
    };
    let report = run_bench(&graphs, &cluster, &opts)?;
    let dir = out_dir.map_or_else(|| resolve(&cfg.out_dir), Path::to_path_buf);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("report.csv"), report.to_csv()?)?;
    files::write_json(&dir.join("report.json"), &report)?;
    for (name, data) in report.plot_data() {
        fs::write(dir.join(name), data)?;
    }
    println!("{} cells written to {}", report.rows.len(), dir.display());
    if report.failures() > 0 {
        for r in report.rows.iter().filter(|r| r.error.is_some()) {
            eprintln!(
                "{} {:?} {}: {}",
                r.graph,
                r.variant,
                r.method.label(),
                r.error.as_deref().unwrap_or("")
            );
        }
        bail!("{} cell(s) failed", report.failures());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Coarsen {
            graph,
            rules,
            overrides,
            out,
        } => coarsen(&graph, rules.as_deref(), overrides.as_deref(), &out),
        Command::Place {
            inst,
            method,
            budget,
            out,
        } => place(&inst, method, &budget, &out),
        Command::Simulate {
            inst,
            placement,
            out,
        } => simulate_cmd(&inst, &placement, &out),
        Command::ExportLp { inst, out } => {
            let p = files::problem(&inst.graph, &inst.cluster)?;
            let model = build_model(&p)?;
            export_lp(&model, &out).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "{} variables ({} binary), {} rows",
                model.vars.len(),
                model.n_binaries(),
                model.rows.len()
            );
            Ok(())
        }
        Command::Gen {
            depth,
            width,
            density,
            edge_prob,
            devices,
            seed,
            out,
            cluster_out,
            device_mem,
            bandwidth,
        } => {
            let spec = SynthSpec {
                density,
                edge_prob,
                ..SynthSpec::new(depth, width, devices.clone())
            };
            let g = gen_synthetic(&spec, seed)?;
            files::save_graph(&out, &g)?;
            if let Some(path) = cluster_out {
                files::write_json(&path, &synthetic_cluster(&devices, device_mem, bandwidth)?)?;
            }
            println!("{} operators, {} edges", g.len(), g.edges().len());
            Ok(())
        }
        Command::Bench { config, out_dir } => bench(&config, out_dir.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
