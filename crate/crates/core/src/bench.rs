//! Synthetic workloads and the benchmark harness.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{greedy_place, BaselineKind};
use crate::error::Error;
use crate::fusion::{gcof, FusionRuleSet};
use crate::graph::{CompGraph, DeviceId, FlowEdge, NodeId, OpNode};
use crate::milp::binary_count;
use crate::problem::Problem;
use crate::profiles::{effective_bandwidth, Cluster, Device, EffectiveMesh};
use crate::simulator::simulate;
use crate::solver::{solve_exact, Solution, SolveBudget};

const PATTERN: [&str; 3] = ["conv", "bn", "relu"];
const FILLER: [&str; 4] = ["matmul", "pool", "concat", "softmax"];

/// Layered synthetic DAG: `depth` layers of `width` operators. Lane `w`
/// always links layer `l - 1` to layer `l`; other cross-lane edges appear
/// with probability `edge_prob`. A lane is a repeating conv/bn/relu
/// pattern with probability `density`, otherwise it draws filler types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub depth: usize,
    pub width: usize,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default)]
    pub edge_prob: f64,
    pub devices: Vec<DeviceId>,
    /// Compute seconds, drawn log-uniformly.
    #[serde(default = "default_time_range")]
    pub time_range_s: (f64, f64),
    #[serde(default = "default_mem_range")]
    pub mem_range_bytes: (u64, u64),
    /// Edge payloads, drawn log-uniformly.
    #[serde(default = "default_payload_range")]
    pub payload_range_bytes: (u64, u64),
}

fn default_density() -> f64 {
    0.5
}

fn default_time_range() -> (f64, f64) {
    (0.001, 0.01)
}

fn default_mem_range() -> (u64, u64) {
    (1 << 20, 64 << 20)
}

fn default_payload_range() -> (u64, u64) {
    (1 << 16, 16 << 20)
}

impl SynthSpec {
    pub fn new(depth: usize, width: usize, devices: Vec<DeviceId>) -> Self {
        SynthSpec {
            depth,
            width,
            density: default_density(),
            edge_prob: 0.0,
            devices,
            time_range_s: default_time_range(),
            mem_range_bytes: default_mem_range(),
            payload_range_bytes: default_payload_range(),
        }
    }

    fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Invalid(format!("synthetic spec: {m}")));
        if self.depth == 0 || self.width == 0 {
            return bad("depth and width must be at least 1");
        }
        if self.devices.is_empty() {
            return bad("no devices");
        }
        if !(0.0..=1.0).contains(&self.density) || !(0.0..=1.0).contains(&self.edge_prob) {
            return bad("density and edge_prob must lie in [0, 1]");
        }
        let (t0, t1) = self.time_range_s;
        if !(t0 > 0.0 && t0 <= t1 && t1.is_finite()) {
            return bad("time range must be positive and ordered");
        }
        let (p0, p1) = self.payload_range_bytes;
        if p0 == 0 || p0 > p1 || self.mem_range_bytes.0 > self.mem_range_bytes.1 {
            return bad("byte ranges must be positive and ordered");
        }
        Ok(())
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Deterministic per `(spec, seed)`.
pub fn gen_synthetic(spec: &SynthSpec, seed: u64) -> Result<CompGraph, Error> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, w) = (spec.depth, spec.width);
    let id = |l: usize, c: usize| (1 + l * w + c) as NodeId;
    let patterned: Vec<bool> = (0..w).map(|_| rng.gen_bool(spec.density)).collect();
    let mut nodes = Vec::with_capacity(d * w);
    for l in 0..d {
        for (c, &pat) in patterned.iter().enumerate() {
            let ty = if pat {
                PATTERN[l % 3]
            } else {
                FILLER[rng.gen_range(0..FILLER.len())]
            };
            let mem = rng.gen_range(spec.mem_range_bytes.0..=spec.mem_range_bytes.1);
            let times: Vec<(DeviceId, f64)> = spec
                .devices
                .iter()
                .map(|&k| {
                    (
                        k,
                        log_uniform(&mut rng, spec.time_range_s.0, spec.time_range_s.1),
                    )
                })
                .collect();
            nodes.push(OpNode::new(id(l, c), ty, mem, times));
        }
    }
    let (p0, p1) = spec.payload_range_bytes;
    let mut edges = Vec::new();
    for l in 1..d {
        for c in 0..w {
            for src in 0..w {
                if src == c || rng.gen_bool(spec.edge_prob) {
                    let payload = log_uniform(&mut rng, p0 as f64, p1 as f64).round() as u64;
                    edges.push(FlowEdge {
                        src: id(l - 1, src),
                        dst: id(l, c),
                        payload_bytes: payload,
                    });
                }
            }
        }
    }
    Ok(CompGraph::new(nodes, edges)?)
}

/// Fully connected cluster of identical-memory devices.
pub fn synthetic_cluster(
    devices: &[DeviceId],
    mem_bytes: u64,
    bandwidth_bps: f64,
) -> Result<Cluster, Error> {
    let devs = devices.iter().map(|&id| Device { id, mem_bytes }).collect();
    Ok(Cluster::full_mesh(devs, bandwidth_bps)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Etf,
    Sct,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Etf => BaselineKind::EarliestFinish.label(),
            Method::Sct => BaselineKind::EarliestStart.label(),
        }
    }

    pub fn run(self, p: &Problem, budget: SolveBudget) -> Result<Solution, Error> {
        Ok(match self {
            Method::Exact => solve_exact(p, budget)?,
            Method::Etf => greedy_place(p, BaselineKind::EarliestFinish)?,
            Method::Sct => greedy_place(p, BaselineKind::EarliestStart)?,
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "exact" => Ok(Method::Exact),
            "etf" => Ok(Method::Etf),
            "sct" => Ok(Method::Sct),
            _ => Err(Error::Invalid(format!(
                "unknown method {s:?} (exact, etf, sct)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Raw,
    Coarsened,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GraphSource {
    File {
        path: String,
    },
    Synthetic {
        name: Option<String>,
        spec: SynthSpec,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub graphs: Vec<GraphSource>,
    pub cluster: String,
    pub methods: Vec<Method>,
    /// Speedups are `baseline makespan / method makespan`.
    #[serde(default = "default_baseline")]
    pub baseline: Method,
    #[serde(default)]
    pub time_limit_s: Option<f64>,
    #[serde(default)]
    pub gap: f64,
    #[serde(default)]
    pub node_limit: Option<u64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub rules: Option<String>,
    pub out_dir: String,
}

fn default_baseline() -> Method {
    Method::Etf
}

fn default_repeats() -> usize {
    3
}

impl BenchConfig {
    pub fn budget(&self) -> SolveBudget {
        SolveBudget {
            time_limit: self.time_limit_s.map(Duration::from_secs_f64),
            gap: self.gap,
            node_limit: self.node_limit,
        }
    }
}

/// Options for [`run_bench`] once sources are loaded.
#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub methods: Vec<Method>,
    pub baseline: Method,
    pub budget: SolveBudget,
    pub repeats: usize,
    pub rules: FusionRuleSet,
}

/// One `(graph, variant, method)` cell. Column order is the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub graph: String,
    pub variant: Variant,
    pub method: Method,
    pub n_ops: usize,
    pub n_binaries: usize,
    /// Median wall time of coarsening (coarsened cells) plus solving.
    pub gen_time_s: f64,
    pub makespan_s: Option<f64>,
    pub sim_makespan_s: Option<f64>,
    pub speedup: Option<f64>,
    pub status: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

struct Cell {
    n_ops: usize,
    n_binaries: usize,
    solution: Solution,
    sim: f64,
}

fn run_cell(
    g: &CompGraph,
    variant: Variant,
    method: Method,
    cluster: &Cluster,
    mesh: &EffectiveMesh,
    opts: &BenchOptions,
) -> Result<(Cell, f64), Error> {
    let mut times = Vec::with_capacity(opts.repeats.max(1));
    let mut last = None;
    for _ in 0..opts.repeats.max(1) {
        let t0 = Instant::now();
        let graph = match variant {
            Variant::Raw => g.clone(),
            Variant::Coarsened => gcof(g, &opts.rules)?,
        };
        let p = Problem::new(&graph, cluster, mesh)?;
        let sol = method.run(&p, opts.budget)?;
        times.push(t0.elapsed().as_secs_f64());
        last = Some((p, sol));
    }
    let (p, solution) = last.expect("at least one repeat");
    let sim = simulate(&p, solution.placement())?.makespan_s;
    let cell = Cell {
        n_ops: p.n_ops(),
        n_binaries: binary_count(&p),
        solution,
        sim,
    };
    Ok((cell, median(times)))
}

/// Runs every `(graph, variant, method)` cell. Cell failures are recorded
/// in the row and do not stop the run.
pub fn run_bench(
    graphs: &[(String, CompGraph)],
    cluster: &Cluster,
    opts: &BenchOptions,
) -> Result<BenchReport, Error> {
    let mesh = effective_bandwidth(cluster)?;
    let mut methods = opts.methods.clone();
    if !methods.contains(&opts.baseline) {
        methods.push(opts.baseline);
    }
    let mut report = BenchReport::default();
    for (name, g) in graphs {
        for variant in [Variant::Raw, Variant::Coarsened] {
            let mut cells = Vec::new();
            for &method in &methods {
                let row = match run_cell(g, variant, method, cluster, &mesh, opts) {
                    Ok((c, t)) => {
                        log::debug!(
                            "{name} {variant:?} {}: {} in {t:.4}s",
                            method.label(),
                            c.solution.objective_s
                        );
                        BenchRow {
                            graph: name.clone(),
                            variant,
                            method,
                            n_ops: c.n_ops,
                            n_binaries: c.n_binaries,
                            gen_time_s: t,
                            makespan_s: Some(c.solution.objective_s),
                            sim_makespan_s: Some(c.sim),
                            speedup: None,
                            status: format!("{:?}", c.solution.status),
                            error: None,
                        }
                    }
                    Err(e) => BenchRow {
                        graph: name.clone(),
                        variant,
                        method,
                        n_ops: 0,
                        n_binaries: 0,
                        gen_time_s: 0.0,
                        makespan_s: None,
                        sim_makespan_s: None,
                        speedup: None,
                        status: "Failed".into(),
                        error: Some(e.to_string()),
                    },
                };
                cells.push(row);
            }
            let base = cells
                .iter()
                .find(|r| r.method == opts.baseline)
                .and_then(|r| r.makespan_s);
            for r in &mut cells {
                r.speedup = match (base, r.makespan_s) {
                    (Some(b), Some(m)) if m > 0.0 => Some(b / m),
                    _ => None,
                };
            }
            // the baseline is reported only when it was asked for
            cells.retain(|r| opts.methods.contains(&r.method));
            report.rows.extend(cells);
        }
    }
    Ok(report)
}

impl BenchReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn to_csv(&self) -> Result<String, Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)
                .map_err(|e| Error::Invalid(format!("csv: {e}")))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Invalid(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Whitespace-separated data files keyed by file name: end-to-end
    /// makespan per method and generation time per variant.
    pub fn plot_data(&self) -> Vec<(String, String)> {
        let mut latency = String::from("# graph variant method makespan_s speedup\n");
        let mut gen = String::from("# graph variant method n_binaries gen_time_s\n");
        for r in self.rows.iter().filter(|r| r.error.is_none()) {
            let v = match r.variant {
                Variant::Raw => "raw",
                Variant::Coarsened => "coarsened",
            };
            let m = r.method.label().replace(' ', "_");
            latency.push_str(&format!(
                "{} {v} {m} {} {}\n",
                r.graph,
                r.makespan_s.unwrap_or(f64::NAN),
                r.speedup.unwrap_or(f64::NAN)
            ));
            gen.push_str(&format!(
                "{} {v} {m} {} {}\n",
                r.graph, r.n_binaries, r.gen_time_s
            ));
        }
        vec![
            ("latency.dat".into(), latency),
            ("gen_time.dat".into(), gen),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(depth: usize, width: usize) -> SynthSpec {
        SynthSpec::new(depth, width, vec![1, 2])
    }

    #[test]
    fn single_node() {
        let g = gen_synthetic(&spec(1, 1), 3).unwrap();
        assert_eq!(g.len(), 1);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn same_seed_same_graph() {
        let mut s = spec(5, 3);
        s.edge_prob = 0.4;
        assert_eq!(gen_synthetic(&s, 9).unwrap(), gen_synthetic(&s, 9).unwrap());
        assert_ne!(
            gen_synthetic(&s, 9).unwrap(),
            gen_synthetic(&s, 10).unwrap()
        );
    }

    #[test]
    fn fusible_chain_shrinks_to_a_third() {
        let mut s = spec(12, 1);
        s.density = 1.0;
        let g = gen_synthetic(&s, 1).unwrap();
        let c = gcof(&g, &FusionRuleSet::conv_bn_family()).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.nodes().iter().all(|n| n.op_type == "conv∘bn∘relu"));
    }

    #[test]
    fn bad_specs() {
        assert!(gen_synthetic(&spec(0, 1), 0).is_err());
        let mut s = spec(2, 2);
        s.density = 1.5;
        assert!(gen_synthetic(&s, 0).is_err());
    }

    #[test]
    fn one_graph_two_methods_gives_four_rows() {
        let g = gen_synthetic(&spec(3, 2), 5).unwrap();
        let c = synthetic_cluster(&[1, 2], 1 << 30, 1e9).unwrap();
        let opts = BenchOptions {
            methods: vec![Method::Exact, Method::Etf],
            baseline: Method::Etf,
            budget: SolveBudget::default(),
            repeats: 1,
            rules: FusionRuleSet::conv_bn_family(),
        };
        let r = run_bench(&[("g".into(), g)], &c, &opts).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert_eq!(r.failures(), 0);
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("graph,variant,method,n_ops,n_binaries,gen_time_s,makespan_s"));
        for pair in r.rows.chunks(2) {
            assert!(pair[0].makespan_s.unwrap() <= pair[1].makespan_s.unwrap());
        }
    }

    #[test]
    fn failing_cell_is_recorded() {
        let g = gen_synthetic(&spec(2, 1), 5).unwrap();
        let c = synthetic_cluster(&[1, 2], 1, 1e9).unwrap();
        let opts = BenchOptions {
            methods: vec![Method::Etf],
            baseline: Method::Etf,
            budget: SolveBudget::default(),
            repeats: 1,
            rules: FusionRuleSet::conv_bn_family(),
        };
        let r = run_bench(&[("g".into(), g)], &c, &opts).unwrap();
        assert_eq!(r.failures(), 2);
    }
}
