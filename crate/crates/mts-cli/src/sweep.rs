//! Suite runner: expands a JSON suite file into independent jobs, runs
//! them in parallel, and prints one CSV row per job in declaration order.
//! Output is bit-identical across repeats; a trailing `# failures:` line
//! appears only when some row failed.

use crate::pipeline::{self, CliResult, Prepared, ResolvedParams};
use crate::Algo;
use mts_core::{gen_coupon_collector, gen_random, ContinuousInstance, Instance, WeightedRootedTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use std::fs;
use std::path::Path;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteFile {
    #[serde(default)]
    runs: Vec<Entry>,
}

#[derive(Deserialize, Clone)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn list(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }
}

#[derive(Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct Entry {
    /// star | tree | hst
    algo: String,
    /// coupon | random | file
    kind: String,
    #[serde(default)]
    n: Option<OneOrMany<usize>>,
    #[serde(default)]
    rounds_factor: Option<usize>,
    #[serde(default)]
    shape: Option<Vec<usize>>,
    #[serde(default)]
    segments: Option<usize>,
    #[serde(default)]
    magnitude: Option<f64>,
    #[serde(default)]
    weight_lo: Option<f64>,
    #[serde(default)]
    weight_hi: Option<f64>,
    #[serde(default)]
    path: Option<String>,
    #[serde(default)]
    seed: Option<OneOrMany<u64>>,
    #[serde(default)]
    eta: Option<f64>,
    #[serde(default)]
    delta: Option<f64>,
    #[serde(default)]
    tau: Option<f64>,
    #[serde(default)]
    c0: Option<f64>,
    #[serde(default)]
    h_max: Option<f64>,
    #[serde(default)]
    substeps: Option<f64>,
    #[serde(default)]
    safety: Option<f64>,
}

struct Job {
    index: usize,
    entry: Entry,
    n: Option<usize>,
    seed: u64,
}

struct Row {
    n: usize,
    depth: usize,
    algo: &'static str,
    outcome: Result<RowNumbers, String>,
}

struct RowNumbers {
    service: f64,
    movement: f64,
    opt: f64,
    ratio: f64,
    bound: f64,
    slack: f64,
    all_pass: bool,
    failed: Vec<String>,
}

fn parse_algo(name: &str) -> CliResult<Algo> {
    match name {
        "star" => Ok(Algo::Star),
        "tree" => Ok(Algo::Tree),
        "hst" => Ok(Algo::Hst),
        "unfair" => Err("unfair runs need a rate schedule; use `run --params`".into()),
        other => Err(format!("unknown algo {other:?}")),
    }
}

/// The one headline inequality reported in the bound/slack columns.
fn headline(algo: Algo) -> &'static str {
    match algo {
        Algo::Star | Algo::Tree => "service_vs_offline",
        Algo::Hst => "root_guarantee",
        Algo::Unfair => "free_start_guarantee",
    }
}

/// Level-shaped tree: `shape[d]` children per node at depth `d`, weights
/// drawn uniformly per edge from the job's own generator stream.
fn shaped_tree(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    lo: f64,
    hi: f64,
) -> CliResult<WeightedRootedTree> {
    if shape.is_empty() || shape.iter().any(|&b| b == 0) {
        return Err("shape needs at least one level of nonzero branching".into());
    }
    let mut edges = Vec::new();
    let mut next_id = 1u64;
    let mut frontier = vec![0u64];
    for &b in shape {
        let mut grown = Vec::new();
        for &parent in &frontier {
            for _ in 0..b {
                edges.push((parent, next_id, rng.gen_range(lo..hi)));
                grown.push(next_id);
                next_id += 1;
            }
        }
        frontier = grown;
    }
    WeightedRootedTree::build(&edges, 0).map_err(|e| e.to_string())
}

fn build_instance(job: &Job) -> CliResult<Instance> {
    let e = &job.entry;
    match e.kind.as_str() {
        "coupon" => {
            let n = job.n.ok_or_else(|| "coupon entries need an n field".to_string())?;
            let rounds = e.rounds_factor.unwrap_or(50) * n;
            gen_coupon_collector(n, rounds, job.seed)
                .map(Instance::Discrete)
                .map_err(|err| err.to_string())
        }
        "random" => {
            let shape = e
                .shape
                .as_ref()
                .ok_or_else(|| "random entries need a shape field".to_string())?;
            let lo = e.weight_lo.unwrap_or(0.5);
            let hi = e.weight_hi.unwrap_or(2.0);
            let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
            let tree = shaped_tree(&mut rng, shape, lo, hi)?;
            let n = tree.n_leaves();
            let path = gen_random(
                &tree,
                e.segments.unwrap_or(30),
                job.seed ^ 0x9e37_79b9,
                e.magnitude.unwrap_or(3.0),
            )
            .map_err(|err| err.to_string())?;
            let start = rng.gen_range(0..n);
            Ok(Instance::Continuous(ContinuousInstance { tree, path, start, seed: job.seed }))
        }
        "file" => {
            let path = e
                .path
                .as_ref()
                .ok_or_else(|| "file entries need a path field".to_string())?;
            let text = fs::read_to_string(path)
                .map_err(|err| format!("cannot read {path}: {err}"))?;
            mts_core::parse_instance(&text).map_err(|err| format!("{path}: {err}"))
        }
        other => Err(format!("unknown kind {other:?}")),
    }
}

fn run_job(job: &Job) -> Row {
    let algo = match parse_algo(&job.entry.algo) {
        Ok(a) => a,
        Err(e) => return Row { n: 0, depth: 0, algo: "?", outcome: Err(e) },
    };
    let prep: Prepared = match build_instance(job).and_then(pipeline::prepare) {
        Ok(p) => p,
        Err(e) => return Row { n: 0, depth: 0, algo: algo.as_str(), outcome: Err(e) },
    };
    let e = &job.entry;
    let mut rp = ResolvedParams::default();
    rp.eta = e.eta;
    rp.delta = e.delta;
    if let Some(t) = e.tau {
        rp.tau = t;
    }
    if let Some(c) = e.c0 {
        rp.c0 = c;
    }
    rp.policy = pipeline::policy_from(e.h_max, e.substeps, e.safety);
    let (n, depth) = (prep.n, prep.depth);
    let outcome = pipeline::execute(algo, &prep, &rp, None).and_then(|ex| {
        let r = &ex.report;
        let head = r
            .checks
            .iter()
            .find(|c| c.name == headline(algo))
            .ok_or_else(|| format!("report is missing the {} check", headline(algo)))?;
        let total = r.costs.service + r.costs.movement;
        Ok(RowNumbers {
            service: r.costs.service,
            movement: r.costs.movement,
            opt: r.costs.opt,
            ratio: if r.costs.opt > 0.0 { total / r.costs.opt } else { 0.0 },
            bound: head.rhs,
            slack: head.slack,
            all_pass: r.all_pass(),
            failed: r.failed_checks().iter().map(|c| c.name.clone()).collect(),
        })
    });
    Row { n, depth, algo: algo.as_str(), outcome }
}

pub fn cmd_sweep(suite: &Path) -> CliResult<u8> {
    let text = fs::read_to_string(suite)
        .map_err(|e| format!("cannot read {}: {e}", suite.display()))?;
    let file: SuiteFile =
        serde_json::from_str(&text).map_err(|e| format!("bad suite file: {e}"))?;

    let mut jobs = Vec::new();
    for entry in &file.runs {
        let ns: Vec<Option<usize>> = match &entry.n {
            Some(one_or_many) => one_or_many.list().into_iter().map(Some).collect(),
            None => vec![None],
        };
        let seeds = entry.seed.as_ref().map(|s| s.list()).unwrap_or_else(|| vec![0]);
        for &n in &ns {
            for &seed in &seeds {
                jobs.push(Job { index: jobs.len(), entry: entry.clone(), n, seed });
            }
        }
    }

    let rows: Vec<Row> = jobs.par_iter().map(run_job).collect();

    println!("n,D,algo,S,M,OPT,ratio,bound,slack");
    let mut failures = 0usize;
    for (job, row) in jobs.iter().zip(&rows) {
        match &row.outcome {
            Ok(nums) => {
                println!(
                    "{},{},{},{},{},{},{},{},{}",
                    row.n,
                    row.depth,
                    row.algo,
                    nums.service,
                    nums.movement,
                    nums.opt,
                    nums.ratio,
                    nums.bound,
                    nums.slack
                );
                if !nums.all_pass {
                    failures += 1;
                    eprintln!(
                        "row {} (seed {}): failed checks: {}",
                        job.index,
                        job.seed,
                        nums.failed.join(", ")
                    );
                }
            }
            Err(msg) => {
                failures += 1;
                println!("{},{},{},,,,,,error", row.n, row.depth, row.algo);
                eprintln!("row {} (seed {}): {msg}", job.index, job.seed);
            }
        }
    }
    if failures > 0 {
        println!("# failures: {failures} of {}", rows.len());
        Ok(1)
    } else {
        Ok(0)
    }
}
