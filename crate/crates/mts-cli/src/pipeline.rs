//! Shared run pipeline: load an instance, spread discrete rounds into
//! constant-rate segments, resolve parameters, dispatch to a controller,
//! and hand back the report. `run` and `verify` only differ in how they
//! print the result; `sweep` feeds rows through the same path.

use crate::Algo;
use mts_core::{
    parse_instance, run_hst, run_star_observed, run_tree_observed, run_unfair_observed,
    water_fill, CostPath, CostReport, Instance, LeafDistribution, MultiplierSolution, NodeRecord,
    RunConfig, StepPolicy, UnfairParams,
};
use serde::Deserialize;
use std::fs;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

/// Input or configuration problems; the caller maps these to exit code 2.
pub type CliResult<T> = Result<T, String>;

pub struct Prepared {
    pub instance: Instance,
    /// Cost path actually integrated: the instance's own segments, or the
    /// level-spread of each discrete round.
    pub path: CostPath,
    pub n: usize,
    pub depth: usize,
}

pub fn load_instance(file: &Path) -> CliResult<Prepared> {
    let text = fs::read_to_string(file)
        .map_err(|e| format!("cannot read {}: {e}", file.display()))?;
    let instance =
        parse_instance(&text).map_err(|e| format!("{}: {e}", file.display()))?;
    prepare(instance)
}

pub fn prepare(instance: Instance) -> CliResult<Prepared> {
    let path = match &instance {
        Instance::Continuous(c) => c.path.clone(),
        Instance::Discrete(d) => {
            let mut segments = Vec::new();
            for row in &d.costs {
                segments.extend(water_fill(row).map_err(|e| e.to_string())?.segments);
            }
            CostPath::new(segments).map_err(|e| e.to_string())?
        }
    };
    let tree = instance.tree();
    let n = tree.n_leaves();
    let depth = tree.depth();
    Ok(Prepared { instance, path, n, depth })
}

/// Everything a run needs beyond the instance, after file parsing.
pub struct ResolvedParams {
    pub eta: Option<f64>,
    pub delta: Option<f64>,
    pub tau: f64,
    pub c0: f64,
    pub unfair: Option<UnfairParams>,
    pub policy: StepPolicy,
}

impl Default for ResolvedParams {
    fn default() -> Self {
        ResolvedParams {
            eta: None,
            delta: None,
            tau: 2.0,
            c0: 1.0,
            unfair: None,
            policy: StepPolicy::default(),
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct MirrorFile {
    eta: Option<f64>,
    delta: Option<f64>,
    h_max: Option<f64>,
    substeps: Option<f64>,
    safety: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HstFile {
    tau: Option<f64>,
    c0: Option<f64>,
    h_max: Option<f64>,
    substeps: Option<f64>,
    safety: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DerivedUnfairFile {
    u: Vec<f64>,
    gamma: f64,
    #[serde(rename = "C")]
    offset: f64,
    h_max: Option<f64>,
    substeps: Option<f64>,
    safety: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplicitUnfairFile {
    beta: Vec<f64>,
    eta: Vec<f64>,
    delta: Vec<f64>,
    zeta: f64,
    h_max: Option<f64>,
    substeps: Option<f64>,
    safety: Option<f64>,
}

pub fn policy_from(h_max: Option<f64>, substeps: Option<f64>, safety: Option<f64>) -> StepPolicy {
    let mut policy = StepPolicy::default();
    if h_max.is_some() {
        policy.h_max = h_max;
    }
    if let Some(s) = substeps {
        policy.substeps = s;
    }
    if let Some(s) = safety {
        policy.safety = s;
    }
    policy
}

pub fn parse_params(algo: Algo, text: Option<&str>) -> CliResult<ResolvedParams> {
    let mut rp = ResolvedParams::default();
    let Some(text) = text else {
        if algo == Algo::Unfair {
            return Err("unfair runs need --params with a rate schedule".into());
        }
        return Ok(rp);
    };
    match algo {
        Algo::Star | Algo::Tree => {
            let f: MirrorFile =
                serde_json::from_str(text).map_err(|e| format!("bad params file: {e}"))?;
            rp.eta = f.eta;
            rp.delta = f.delta;
            rp.policy = policy_from(f.h_max, f.substeps, f.safety);
        }
        Algo::Hst => {
            let f: HstFile =
                serde_json::from_str(text).map_err(|e| format!("bad params file: {e}"))?;
            if let Some(t) = f.tau {
                rp.tau = t;
            }
            if let Some(c) = f.c0 {
                rp.c0 = c;
            }
            rp.policy = policy_from(f.h_max, f.substeps, f.safety);
        }
        Algo::Unfair => {
            if let Ok(f) = serde_json::from_str::<DerivedUnfairFile>(text) {
                rp.unfair = Some(
                    UnfairParams::derive(&f.u, f.gamma, f.offset).map_err(|e| e.to_string())?,
                );
                rp.policy = policy_from(f.h_max, f.substeps, f.safety);
            } else if let Ok(f) = serde_json::from_str::<ExplicitUnfairFile>(text) {
                if f.beta.is_empty() || f.eta.is_empty() {
                    return Err("explicit unfair params need nonempty rate vectors".into());
                }
                // The budget identity ties the growth rate to the first
                // coordinate; the constructor re-checks every other one.
                let gamma = (f.zeta - f.beta[0]) / (2.0 * f.eta[0]);
                rp.unfair = Some(
                    UnfairParams::explicit(&f.beta, gamma, &f.eta, &f.delta, f.zeta)
                        .map_err(|e| e.to_string())?,
                );
                rp.policy = policy_from(f.h_max, f.substeps, f.safety);
            } else {
                return Err(
                    "unfair params must be {u, gamma, C} or {beta, eta, delta, zeta}".into(),
                );
            }
        }
    }
    Ok(rp)
}

/// Per-step CSV sink for the observed runners. Write errors are kept and
/// surfaced once the run finishes.
struct TraceSink {
    writer: Option<BufWriter<File>>,
    error: Option<String>,
}

impl TraceSink {
    fn open(target: Option<&Path>, n: usize) -> CliResult<Self> {
        let Some(target) = target else {
            return Ok(TraceSink { writer: None, error: None });
        };
        let file = File::create(target)
            .map_err(|e| format!("cannot create {}: {e}", target.display()))?;
        let mut writer = BufWriter::new(file);
        let mut header = String::from("t,mu,lambda_hat_max,xi_max");
        for i in 0..n {
            header.push_str(&format!(",p{i}"));
        }
        writeln!(writer, "{header}").map_err(|e| e.to_string())?;
        Ok(TraceSink { writer: Some(writer), error: None })
    }

    fn row(&mut self, t: f64, state: &LeafDistribution, sol: &MultiplierSolution) {
        let Some(writer) = self.writer.as_mut() else { return };
        if self.error.is_some() {
            return;
        }
        let lam = sol.lambda_hat.iter().copied().fold(0.0f64, |a, b| a.max(b.abs()));
        let xi = sol.xi.iter().copied().fold(0.0f64, f64::max);
        let mut line = format!("{t},{},{lam},{xi}", sol.mu);
        for m in state.masses() {
            line.push_str(&format!(",{m}"));
        }
        if let Err(e) = writeln!(writer, "{line}") {
            self.error = Some(e.to_string());
        }
    }

    fn finish(mut self) -> CliResult<()> {
        if let Some(writer) = self.writer.as_mut() {
            writer.flush().map_err(|e| e.to_string())?;
        }
        match self.error {
            Some(e) => Err(format!("trace write failed: {e}")),
            None => Ok(()),
        }
    }
}

pub struct Executed {
    pub report: CostReport,
    pub nodes: Option<Vec<NodeRecord>>,
}

fn leaf_weights(instance: &Instance) -> CliResult<Vec<f64>> {
    let tree = instance.tree();
    if tree.uniform_depth() != Some(1) {
        return Err("this controller needs a depth-1 tree".into());
    }
    Ok(tree.leaves().iter().map(|&ix| tree.weight(ix)).collect())
}

pub fn execute(
    algo: Algo,
    prep: &Prepared,
    rp: &ResolvedParams,
    trace: Option<&Path>,
) -> CliResult<Executed> {
    let start = prep.instance.start();
    let report = match algo {
        Algo::Star => {
            let weights = leaf_weights(&prep.instance)?;
            let cfg = RunConfig { eta: rp.eta, delta: rp.delta, policy: rp.policy.clone() };
            let mut sink = TraceSink::open(trace, prep.n)?;
            let out = run_star_observed(&prep.path, &weights, start, None, &cfg, |t, p, sol| {
                sink.row(t, p, sol)
            })
            .map_err(|e| e.to_string())?;
            sink.finish()?;
            Executed { report: out.report, nodes: None }
        }
        Algo::Tree => {
            let padded =
                prep.instance.tree().pad_to_uniform_depth().map_err(|e| e.to_string())?;
            let cfg = RunConfig { eta: rp.eta, delta: rp.delta, policy: rp.policy.clone() };
            let mut sink = TraceSink::open(trace, prep.n)?;
            let out = run_tree_observed(&prep.path, &padded, start, None, &cfg, |t, p, sol| {
                sink.row(t, p, sol)
            })
            .map_err(|e| e.to_string())?;
            sink.finish()?;
            Executed { report: out.report, nodes: None }
        }
        Algo::Unfair => {
            let weights = leaf_weights(&prep.instance)?;
            let params = rp
                .unfair
                .as_ref()
                .ok_or_else(|| "unfair runs need --params with a rate schedule".to_string())?;
            let mut sink = TraceSink::open(trace, prep.n)?;
            let out = run_unfair_observed(
                &prep.path,
                &weights,
                params,
                start,
                None,
                &rp.policy,
                |t, p, sol| sink.row(t, p, sol),
            )
            .map_err(|e| e.to_string())?;
            sink.finish()?;
            Executed { report: out.report, nodes: None }
        }
        Algo::Hst => {
            if trace.is_some() {
                return Err("--trace is not supported for hst runs".into());
            }
            let out = run_hst(
                &prep.path,
                prep.instance.tree(),
                rp.tau,
                rp.c0,
                start,
                None,
                &rp.policy,
            )
            .map_err(|e| e.to_string())?;
            Executed { report: out.report, nodes: Some(out.per_node) }
        }
    };
    Ok(report)
}

pub fn cmd_run(
    algo: Algo,
    instance: &Path,
    params: Option<&Path>,
    trace: Option<&Path>,
    nodes_out: Option<&Path>,
) -> CliResult<u8> {
    let t0 = Instant::now();
    let prep = load_instance(instance)?;
    let params_text = match params {
        Some(p) => Some(
            fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?,
        ),
        None => None,
    };
    let rp = parse_params(algo, params_text.as_deref())?;
    let ex = execute(algo, &prep, &rp, trace)?;
    if let Some(target) = nodes_out {
        let Some(nodes) = &ex.nodes else {
            return Err("--nodes only applies to --algo hst".into());
        };
        let body = serde_json::to_string_pretty(nodes).map_err(|e| e.to_string())?;
        fs::write(target, body + "\n")
            .map_err(|e| format!("cannot write {}: {e}", target.display()))?;
    }
    println!("{}", ex.report.to_json());
    eprintln!("wall: {:.3}s", t0.elapsed().as_secs_f64());
    if ex.report.all_pass() {
        Ok(0)
    } else {
        for c in ex.report.failed_checks() {
            eprintln!(
                "failed check {}: lhs={} rhs={} slack={} tol={}",
                c.name, c.lhs, c.rhs, c.slack, c.tol
            );
        }
        Ok(1)
    }
}

pub fn cmd_verify(algo: Algo, instance: &Path, params: Option<&Path>) -> CliResult<u8> {
    let t0 = Instant::now();
    let prep = load_instance(instance)?;
    let params_text = match params {
        Some(p) => Some(
            fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?,
        ),
        None => None,
    };
    let rp = parse_params(algo, params_text.as_deref())?;
    let ex = execute(algo, &prep, &rp, None)?;
    let r = &ex.report;
    println!("algo: {}", r.algo);
    println!("instance: {}", r.instance_digest);
    println!(
        "S={} M={} S*={} M*={} OPT={}",
        r.costs.service,
        r.costs.movement,
        r.costs.service_offline,
        r.costs.movement_offline,
        r.costs.opt
    );
    let mut failed = 0usize;
    for c in &r.checks {
        let verdict = if c.pass {
            "PASS"
        } else {
            failed += 1;
            "FAIL"
        };
        println!(
            "{verdict} {}: {} | lhs={} rhs={} slack={} tol={}",
            c.name, c.formula, c.lhs, c.rhs, c.slack, c.tol
        );
    }
    if let Some(nodes) = &ex.nodes {
        for nr in nodes {
            println!(
                "node {} children={} kappa={} guarantee_slack={} offline_slack={} composed_slack={}",
                nr.id,
                nr.n_children,
                nr.kappa,
                nr.guarantee_slack,
                nr.offline_slack,
                nr.composed_slack
            );
        }
    }
    println!(
        "result: {} ({} checks, {} failed)",
        if failed == 0 { "PASS" } else { "FAIL" },
        r.checks.len(),
        failed
    );
    eprintln!("wall: {:.3}s", t0.elapsed().as_secs_f64());
    Ok(if failed == 0 { 0 } else { 1 })
}
