//! End-to-end runs: integrate the online dynamics over a cost path, solve
//! the offline comparator on the same instance, and assemble a report whose
//! checks evaluate the guarantee inequalities at their literal constants.

use crate::dist::{subtree_sums, LeafDistribution};
use crate::error::{Error, Result};
use crate::instances::CostPath;
use crate::integrate::{integrate_segment_observed, Dynamics, SegmentLedger, StepPolicy};
use crate::oracle::{segment_opt, MetricSpace, OfflineSolution};
use crate::report::{digest_bytes, CheckRecord, CostReport, CostSummary, RunDiagnostics, REPORT_SCHEMA};
use crate::solver::{EntropicRegularizer, MultiplierSolution};
use crate::tree::WeightedRootedTree;

/// First-order integration error coefficient used in check tolerances:
/// budget = 1e-6 * scale + ERR_C * sum over segments of h * duration * max
/// rate. Pinned against fine-step reference runs.
pub const ERR_C: f64 = 8.0;

/// Parameters accepted by the runners; `None` picks the documented default.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub eta: Option<f64>,
    pub delta: Option<f64>,
    pub policy: StepPolicy,
}

/// Everything a run produces: the serializable report plus the raw pieces
/// tests and the command-line driver want direct access to.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: CostReport,
    pub final_state: LeafDistribution,
    pub ledger: SegmentLedger,
    pub offline: OfflineSolution,
}

/// Discretization error budget for inequality tolerances.
pub fn error_budget(path: &CostPath, policy: &StepPolicy, scale: f64) -> f64 {
    let drive: f64 = path
        .segments
        .iter()
        .map(|s| {
            let mr = s.rates.iter().copied().fold(0.0, f64::max);
            policy.cap(s.duration) * s.duration * mr
        })
        .sum();
    1e-6 * (1.0 + scale.abs()) + ERR_C * drive
}

/// Weighted l1 distance between two leaf vectors in the expanded coordinate
/// system: plain per-leaf for a star, subtree sums against node weights for
/// a tree.
fn expanded_wl1(
    tree: Option<&WeightedRootedTree>,
    weights: &[f64],
    a: &[f64],
    b: &[f64],
) -> f64 {
    match tree {
        None => weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * (x - y).abs())
            .sum(),
        Some(t) => {
            let ea = subtree_sums(t, a);
            let eb = subtree_sums(t, b);
            weights
                .iter()
                .zip(ea.iter().zip(&eb))
                .map(|(w, (x, y))| w * (x - y).abs())
                .sum()
        }
    }
}

/// Largest expanded distance from any point of the simplex to `target`; the
/// maximum of a convex function sits at a vertex, so leaves suffice.
fn sup_wl1_to(tree: Option<&WeightedRootedTree>, weights: &[f64], target: &[f64]) -> f64 {
    let n = target.len();
    let mut sup = 0.0f64;
    let mut vertex = vec![0.0; n];
    for j in 0..n {
        vertex[j] = 1.0;
        sup = sup.max(expanded_wl1(tree, weights, &vertex, target));
        vertex[j] = 0.0;
    }
    sup
}

pub(crate) fn kkt_checks(ledger: &SegmentLedger) -> Vec<CheckRecord> {
    let r = &ledger.max_residuals;
    vec![
        CheckRecord::le(
            "reduced_cost_sign",
            "min over steps of min_l (c_l - xi_l) >= -1e-10".into(),
            -ledger.min_reduced_cost,
            0.0,
            1e-10,
        ),
        CheckRecord::near_zero(
            "residual_mass_balance",
            "max over steps of the drift balance residual".into(),
            r.mass_balance,
            1e-10,
        ),
        CheckRecord::near_zero(
            "residual_complementary_slackness",
            "max over steps of max_l |xi_l * p_l|".into(),
            r.complementary_slackness,
            1e-10,
        ),
        CheckRecord::near_zero(
            "residual_sign",
            "max over steps of multiplier sign violation".into(),
            r.sign,
            1e-10,
        ),
        CheckRecord::near_zero(
            "residual_stationarity",
            "max over steps of ||w*drift + eta*(x+delta)*(c+lambda-xi-mu)||_inf".into(),
            r.stationarity,
            1e-9,
        ),
    ]
}

struct Executed {
    final_state: LeafDistribution,
    ledger: SegmentLedger,
    offline: OfflineSolution,
    psi0: f64,
    p0_masses: Vec<f64>,
}

fn execute(
    dynamics: &Dynamics,
    metric: &MetricSpace,
    path: &CostPath,
    start: usize,
    p0: LeafDistribution,
    policy: &StepPolicy,
    mut observe: impl FnMut(f64, &LeafDistribution, &MultiplierSolution),
) -> Result<Executed> {
    let n = dynamics.n_leaves();
    let psi0 = dynamics.depth_potential(&p0);
    let p0_masses = p0.masses().to_vec();
    let mut state = p0;
    let mut total = SegmentLedger::new(n);
    total.psi = psi0;
    let mut t0 = 0.0f64;
    for seg in &path.segments {
        let (next, led, _) = integrate_segment_observed(
            dynamics,
            &state,
            &seg.rates,
            seg.duration,
            policy,
            |t, p, sol| observe(t0 + t, p, sol),
        )?;
        total.absorb(&led);
        state = next;
        t0 += seg.duration;
    }
    let offline = segment_opt(path, metric, Some(start))?;
    Ok(Executed { final_state: state, ledger: total, offline, psi0, p0_masses })
}

/// Guarantee and sanity checks shared by the star and tree runners.
#[allow(clippy::too_many_arguments)]
fn common_checks(
    tree_for_expand: Option<&WeightedRootedTree>,
    expand_weights: &[f64],
    reg: &EntropicRegularizer,
    metric: &MetricSpace,
    ex: &Executed,
    start: usize,
    tol: f64,
    checks: &mut Vec<CheckRecord>,
) {
    let n = ex.p0_masses.len();
    let led = &ex.ledger;
    let off = &ex.offline;
    let lt = reg.true_lipschitz();

    // Online service against the recovered comparator path: the path is
    // piecewise constant, so its service and interior movement are exact.
    let y0 = *off.path.first().unwrap_or(&start);
    let d0 = metric.dist(start, y0);
    let interior = (off.movement - d0).max(0.0);
    let mut y0_mass = vec![0.0; n];
    y0_mass[y0] = 1.0;
    let w1_start = expanded_wl1(tree_for_expand, expand_weights, &y0_mass, &ex.p0_masses);
    checks.push(CheckRecord::le(
        "comparator_service",
        format!(
            "S <= S_star + {:.9}*len(y) + {:.9}*||y0 - x0||",
            lt,
            2.0 * lt
        ),
        led.service,
        off.service + lt * interior + 2.0 * lt * w1_start,
        tol,
    ));

    // Reduced cost paired with the uniform point stays below the online
    // service plus a radius term.
    let uniform = vec![1.0 / n as f64; n];
    let sup = sup_wl1_to(tree_for_expand, expand_weights, &uniform);
    let paired: f64 = led
        .reduced_cost_per_leaf
        .iter()
        .map(|v| v / n as f64)
        .sum();
    checks.push(CheckRecord::le(
        "uniform_reduced_cost",
        format!("int <c - xi, unif> dt <= S + {:.9}", lt * sup),
        paired,
        led.service + lt * sup,
        tol,
    ));

    checks.extend(kkt_checks(led));
}

fn policy_json(policy: &StepPolicy) -> serde_json::Value {
    serde_json::json!({
        "h_max": policy.h_max,
        "substeps": policy.substeps,
        "safety": policy.safety,
    })
}

pub(crate) fn star_digest(weights: &[f64], start: usize, path: &CostPath) -> String {
    let v = serde_json::json!({
        "mode": "star",
        "weights": weights,
        "start": start,
        "segments": path.segments.iter().map(|s| {
            serde_json::json!({"duration": s.duration, "rates": s.rates})
        }).collect::<Vec<_>>(),
    });
    digest_bytes(v.to_string().as_bytes())
}

pub(crate) fn tree_digest(tree: &WeightedRootedTree, start: usize, path: &CostPath) -> String {
    let file = tree.to_file();
    let v = serde_json::json!({
        "mode": "tree",
        "edges": file.edges,
        "root": file.root,
        "start": start,
        "segments": path.segments.iter().map(|s| {
            serde_json::json!({"duration": s.duration, "rates": s.rates})
        }).collect::<Vec<_>>(),
    });
    digest_bytes(v.to_string().as_bytes())
}

/// Runs the star dynamics over a cost path and reports both guarantee
/// inequalities. Defaults: learning rate 4 ln n, shift 1/n^2, online start
/// and offline comparator both at the point `start` unless `p0` overrides
/// the online side.
pub fn run_star(
    path: &CostPath,
    weights: &[f64],
    start: usize,
    p0: Option<&[f64]>,
    cfg: &RunConfig,
) -> Result<RunOutcome> {
    run_star_observed(path, weights, start, p0, cfg, |_, _, _| {})
}

pub fn run_star_observed(
    path: &CostPath,
    weights: &[f64],
    start: usize,
    p0: Option<&[f64]>,
    cfg: &RunConfig,
    observe: impl FnMut(f64, &LeafDistribution, &MultiplierSolution),
) -> Result<RunOutcome> {
    let n = weights.len();
    if n < 2 {
        return Err(Error::BadParams { context: format!("star needs n >= 2, got {}", n) });
    }
    path.validate()?;
    if !path.segments.is_empty() && path.n_leaves() != n {
        return Err(Error::MassArity { expected: n, got: path.n_leaves() });
    }
    if start >= n {
        return Err(Error::BadParams { context: format!("start {} out of range", start) });
    }
    let nf = n as f64;
    let eta = cfg.eta.unwrap_or(4.0 * nf.ln());
    let delta = cfg.delta.unwrap_or(1.0 / (nf * nf));
    let reg = EntropicRegularizer::star_uniform(weights, eta, delta)?;
    let policy = cfg.policy.clone().with_env_override();

    let star_tree = WeightedRootedTree::star(weights)?;
    let p0 = match p0 {
        Some(m) => LeafDistribution::from_masses(&star_tree, m.to_vec())?,
        None => LeafDistribution::point(&star_tree, start),
    };
    let metric = MetricSpace::from_tree(&star_tree);
    let dynamics = Dynamics::Star { reg: &reg };
    let ex = execute(&dynamics, &metric, path, start, p0, &policy, observe)?;

    let led = &ex.ledger;
    let off = &ex.offline;
    let scale = led.service.max(led.movement).max(off.opt).max(1.0);
    let tol = error_budget(path, &policy, scale);

    // The resolved delta may have been floored; use what the regularizer
    // actually carries so the constants match the dynamics that ran.
    let delta_used = reg.delta()[0];
    let lip = reg.lipschitz();
    let dn = delta_used * nf;
    let big_delta = weights.iter().copied().fold(0.0, f64::max);
    let move_slope = 2.0 * eta * (1.0 + dn);
    let move_offset = (1.0 + 8.0 * dn * (1.0 / delta_used).ln()) * big_delta;

    let mut checks = vec![
        CheckRecord::le(
            "service_vs_offline",
            format!("S <= S_star + {:.9}*M_star", lip),
            led.service,
            off.service + lip * off.movement,
            tol,
        ),
        CheckRecord::le(
            "movement_vs_service",
            format!("M <= {:.9}*S + {:.9}", move_slope, move_offset),
            led.movement,
            move_slope * led.service + move_offset,
            tol,
        ),
    ];
    common_checks(None, reg.weight(), &reg, &metric, &ex, start, tol, &mut checks);

    let report = CostReport {
        schema: REPORT_SCHEMA.into(),
        algo: "star".into(),
        params: serde_json::json!({
            "n": n,
            "eta": eta,
            "delta": delta_used,
            "start": start,
            "policy": policy_json(&policy),
        }),
        instance_digest: star_digest(weights, start, path),
        costs: CostSummary {
            service: led.service,
            movement: led.movement,
            service_offline: off.service,
            movement_offline: off.movement,
            opt: off.opt,
        },
        checks,
        diagnostics: RunDiagnostics {
            steps: led.steps,
            events: led.events,
            clamp_events: led.clamp_events,
            clamp_duration: led.clamp_duration,
            min_reduced_cost: led.min_reduced_cost,
            max_residuals: led.max_residuals,
            psi_delta: led.psi - ex.psi0,
            delta_floored: reg.delta_floored,
            delta_exceeds_half: reg.delta_exceeds_half,
        },
    };
    Ok(RunOutcome {
        report,
        final_state: ex.final_state,
        ledger: ex.ledger,
        offline: ex.offline,
    })
}

/// Runs the tree dynamics over a cost path on the leaves of a uniform-depth
/// weighted tree. Defaults: learning rate 2 ln n, leaf shift 1/n. The tree
/// must already have uniform leaf depth; pad first if it does not.
pub fn run_tree(
    path: &CostPath,
    tree: &WeightedRootedTree,
    start: usize,
    p0: Option<&[f64]>,
    cfg: &RunConfig,
) -> Result<RunOutcome> {
    run_tree_observed(path, tree, start, p0, cfg, |_, _, _| {})
}

pub fn run_tree_observed(
    path: &CostPath,
    tree: &WeightedRootedTree,
    start: usize,
    p0: Option<&[f64]>,
    cfg: &RunConfig,
    observe: impl FnMut(f64, &LeafDistribution, &MultiplierSolution),
) -> Result<RunOutcome> {
    let n = tree.n_leaves();
    if n < 2 {
        return Err(Error::BadParams { context: format!("tree needs n >= 2 leaves, got {}", n) });
    }
    let depth = match tree.uniform_depth() {
        Some(d) => d,
        None => {
            return Err(Error::BadParams {
                context: "tree has nonuniform leaf depth; pad it first".into(),
            })
        }
    };
    path.validate()?;
    if !path.segments.is_empty() && path.n_leaves() != n {
        return Err(Error::MassArity { expected: n, got: path.n_leaves() });
    }
    if start >= n {
        return Err(Error::BadParams { context: format!("start {} out of range", start) });
    }
    let nf = n as f64;
    let eta = cfg.eta.unwrap_or(2.0 * nf.ln());
    let leaf_delta = cfg.delta.unwrap_or(1.0 / nf);
    let reg = EntropicRegularizer::tree_with(tree, eta, leaf_delta)?;
    let policy = cfg.policy.clone().with_env_override();

    let p0 = match p0 {
        Some(m) => LeafDistribution::from_masses(tree, m.to_vec())?,
        None => LeafDistribution::point(tree, start),
    };
    let metric = MetricSpace::from_tree(tree);
    let dynamics = Dynamics::Tree { tree, reg: &reg };
    let ex = execute(&dynamics, &metric, path, start, p0, &policy, observe)?;

    let led = &ex.ledger;
    let off = &ex.offline;
    let scale = led.service.max(led.movement).max(off.opt).max(1.0);
    let tol = error_budget(path, &policy, scale);

    // Lipschitz constant of the mirror map is set by the smallest shift,
    // which sits on a leaf by the upward-summation construction.
    let delta_min = tree
        .leaves()
        .iter()
        .map(|&ix| reg.delta()[ix])
        .fold(f64::INFINITY, f64::min);
    let lip = reg.lipschitz();
    let df = depth as f64;
    let diam = tree.diameter();
    let move_slope = 4.0 * eta * df;
    let move_offset = (1.0 + 2.0 * df + 8.0 * df * (1.0 / delta_min).ln()) * diam;

    let mut checks = vec![
        CheckRecord::le(
            "service_vs_offline",
            format!("S <= S_star + {:.9}*M_star", lip),
            led.service,
            off.service + lip * off.movement,
            tol,
        ),
        CheckRecord::le(
            "movement_vs_service",
            format!("M <= {:.9}*S + {:.9}", move_slope, move_offset),
            led.movement,
            move_slope * led.service + move_offset,
            tol,
        ),
    ];
    common_checks(Some(tree), reg.weight(), &reg, &metric, &ex, start, tol, &mut checks);

    let report = CostReport {
        schema: REPORT_SCHEMA.into(),
        algo: "tree".into(),
        params: serde_json::json!({
            "n_leaves": n,
            "depth": depth,
            "eta": eta,
            "leaf_delta": leaf_delta,
            "start": start,
            "policy": policy_json(&policy),
        }),
        instance_digest: tree_digest(tree, start, path),
        costs: CostSummary {
            service: led.service,
            movement: led.movement,
            service_offline: off.service,
            movement_offline: off.movement,
            opt: off.opt,
        },
        checks,
        diagnostics: RunDiagnostics {
            steps: led.steps,
            events: led.events,
            clamp_events: led.clamp_events,
            clamp_duration: led.clamp_duration,
            min_reduced_cost: led.min_reduced_cost,
            max_residuals: led.max_residuals,
            psi_delta: led.psi - ex.psi0,
            delta_floored: reg.delta_floored,
            delta_exceeds_half: reg.delta_exceeds_half,
        },
    };
    Ok(RunOutcome {
        report,
        final_state: ex.final_state,
        ledger: ex.ledger,
        offline: ex.offline,
    })
}
