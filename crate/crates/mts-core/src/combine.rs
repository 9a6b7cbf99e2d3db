//! Star controllers composed up a separated tree.
//!
//! Every branching node runs its own pricing-weighted star over its
//! children: each child's realized cost rate, divided by that child's
//! service price, drives an entropic star controller on edge weights
//! shrunk by (1 - 1/tau).  Controller states are conditional
//! distributions; their product down the tree is the global randomized
//! state.  A node's realized subtree cost rate (service plus weighted
//! transport) is in turn the cost rate its parent sees, so guarantees
//! chain multiplicatively from the leaves to the root.

use serde::Serialize;

use crate::dist::LeafDistribution;
use crate::error::{Error, Result};
use crate::hst::validate_hst;
use crate::instances::{CostPath, CostSegment};
use crate::integrate::{integrate_segment, Dynamics, SegmentLedger, StepPolicy};
use crate::oracle::{segment_opt, work_function_dp, MetricSpace};
use crate::report::{CheckRecord, CostReport, CostSummary, RunDiagnostics, REPORT_SCHEMA};
use crate::runs::{error_budget, kkt_checks, tree_digest};
use crate::solver::EntropicRegularizer;
use crate::tree::{NodeIx, WeightedRootedTree};
use crate::unfair::UnfairParams;

/// Relative drift tolerated in the composed leaf masses per step.
const COMPOSED_MASS_TOL: f64 = 1e-9;

/// Controller state attached to one branching node.
struct StarMachine {
    children: Vec<NodeIx>,
    star_weights: Vec<f64>,
    params: UnfairParams,
    reg: EntropicRegularizer,
    q: LeafDistribution,
    unfair_service: f64,
    unfair_movement: f64,
    ledger: SegmentLedger,
    /// Priced cost path this node's controller actually saw, merged over
    /// consecutive steps with identical rates.
    recorded: Vec<CostSegment>,
}

/// Coupled controllers over a whole tree, stepped in lockstep.
pub struct Combiner<'a> {
    tree: &'a WeightedRootedTree,
    gamma: f64,
    /// Recursion weight per node; drives prices and the root factor.
    guarantee: Vec<f64>,
    /// One controller per branching node, node-indexed.
    stars: Vec<Option<StarMachine>>,
    /// Conditional mass of each node given its parent; root holds 1.
    cond: Vec<f64>,
    composed_service: Vec<f64>,
    composed_movement: Vec<f64>,
    /// Scratch: realized cost rate of each node's subtree this step.
    taps: Vec<f64>,
    steps: usize,
}

/// Per-node summary emitted after a run.
#[derive(Debug, Clone, Serialize)]
pub struct NodeRecord {
    pub id: u64,
    pub n_children: usize,
    pub u_total: f64,
    pub kappa: f64,
    pub beta_max: f64,
    pub zeta: f64,
    pub unfair_service: f64,
    pub unfair_movement: f64,
    pub composed_cost: f64,
    pub star_opt: f64,
    pub raw_opt: f64,
    pub guarantee_slack: f64,
    pub offline_slack: f64,
    pub composed_slack: f64,
}

/// Everything a combined run produces.
pub struct CombinerOutcome {
    pub report: CostReport,
    pub final_state: Vec<f64>,
    pub per_node: Vec<NodeRecord>,
    pub kappa_root: f64,
}

fn branching(tree: &WeightedRootedTree, ix: NodeIx) -> bool {
    tree.children(ix).len() >= 2
}

/// Builds the coupled controllers for `tree`.  The tree must satisfy the
/// separation check at ratio `4 * tau`; `tau > 1` sets the edge shrink
/// factor and `c0 >= 1` the per-leaf guarantee floor.
pub fn build_combiner(tree: &WeightedRootedTree, tau: f64, c0: f64) -> Result<Combiner<'_>> {
    if !(tau > 1.0) || !tau.is_finite() {
        return Err(Error::BadParams { context: format!("shrink ratio tau must exceed 1, got {tau}") });
    }
    if !(c0 >= 1.0) || !c0.is_finite() {
        return Err(Error::BadParams { context: format!("guarantee floor c0 must be at least 1, got {c0}") });
    }
    let sep = validate_hst(tree, 4.0 * tau);
    if !sep.pass {
        return Err(Error::BadParams {
            context: format!(
                "tree is not {:.3}-separated: subtree at node {:?} has diameter {} over edge weight {}",
                4.0 * tau,
                sep.worst_node,
                sep.worst_diameter,
                sep.worst_weight
            ),
        });
    }
    let gamma = tau / (tau - 1.0);
    let n_nodes = tree.n_nodes();

    // Guarantee weights, leaves up.  Branching nodes pick up a factor e;
    // pass-through nodes copy their child so chains do not inflate prices.
    let mut guarantee = vec![0.0f64; n_nodes];
    for ix in (0..n_nodes).rev() {
        let kids = tree.children(ix);
        guarantee[ix] = if kids.is_empty() {
            c0.exp()
        } else if kids.len() == 1 {
            guarantee[kids[0]]
        } else {
            std::f64::consts::E * kids.iter().map(|&c| guarantee[c]).sum::<f64>()
        };
        if !guarantee[ix].is_finite() {
            return Err(Error::Numeric {
                context: format!("guarantee weight overflowed at node {}", tree.id(ix)),
            });
        }
    }

    let shrink = 1.0 - 1.0 / tau;
    let mut stars: Vec<Option<StarMachine>> = Vec::with_capacity(n_nodes);
    for ix in 0..n_nodes {
        if !branching(tree, ix) {
            stars.push(None);
            continue;
        }
        let children: Vec<NodeIx> = tree.children(ix).to_vec();
        let star_weights: Vec<f64> = children.iter().map(|&c| shrink * tree.weight(c)).collect();
        let u: Vec<f64> = children.iter().map(|&c| guarantee[c]).collect();
        let params = UnfairParams::derive(&u, gamma, 0.0)?;
        let reg = EntropicRegularizer::star_per_coordinate(&star_weights, &params.eta, &params.delta)?;
        let k = children.len();
        stars.push(Some(StarMachine {
            children,
            star_weights,
            params,
            reg,
            // Placeholder until the caller seeds the state.
            q: LeafDistribution::from_raw(vec![1.0 / k as f64; k]),
            unfair_service: 0.0,
            unfair_movement: 0.0,
            ledger: SegmentLedger::default(),
            recorded: Vec::new(),
        }));
    }

    Ok(Combiner {
        tree,
        gamma,
        guarantee,
        stars,
        cond: vec![1.0; n_nodes],
        composed_service: vec![0.0; n_nodes],
        composed_movement: vec![0.0; n_nodes],
        taps: vec![0.0; n_nodes],
        steps: 0,
    })
}

impl<'a> Combiner<'a> {
    pub fn kappa(&self, ix: NodeIx) -> f64 {
        8.0 * self.gamma * self.guarantee[ix].ln()
    }

    pub fn kappa_root(&self) -> f64 {
        self.kappa(self.tree.root())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn guarantee_weight(&self, ix: NodeIx) -> f64 {
        self.guarantee[ix]
    }

    /// Seeds every conditional from global leaf masses.
    pub fn set_state(&mut self, masses: &[f64]) -> Result<()> {
        let n = self.tree.n_leaves();
        if masses.len() != n {
            return Err(Error::MassArity { expected: n, got: masses.len() });
        }
        let mut total = 0.0;
        for &m in masses {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::BadParams { context: format!("initial mass {m} is not a probability") });
            }
            total += m;
        }
        if (total - 1.0).abs() > COMPOSED_MASS_TOL {
            return Err(Error::MassSum { sum: total });
        }
        let mut sums = vec![0.0f64; self.tree.n_nodes()];
        for ix in 0..self.tree.n_nodes() {
            let (lo, hi) = self.tree.leaf_span(ix);
            sums[ix] = masses[lo..hi].iter().sum();
        }
        self.cond[self.tree.root()] = 1.0;
        for ix in 1..self.tree.n_nodes() {
            let p = self.tree.parent(ix).unwrap();
            self.cond[ix] = if sums[p] > 0.0 {
                (sums[ix] / sums[p]).min(1.0)
            } else {
                1.0 / self.tree.children(p).len() as f64
            };
        }
        for sm in self.stars.iter_mut().flatten() {
            let mut q: Vec<f64> = sm.children.iter().map(|&c| self.cond[c]).collect();
            let s: f64 = q.iter().sum();
            if s > 0.0 {
                for v in q.iter_mut() {
                    *v /= s;
                }
            } else {
                let even = 1.0 / q.len() as f64;
                q.fill(even);
            }
            for (slot, &c) in sm.children.iter().enumerate() {
                self.cond[c] = q[slot];
            }
            sm.q = LeafDistribution::from_raw(q);
        }
        Ok(())
    }

    /// Seeds a point mass on one leaf position.
    pub fn set_state_point(&mut self, leaf: usize) -> Result<()> {
        let n = self.tree.n_leaves();
        if leaf >= n {
            return Err(Error::BadParams { context: format!("start leaf {leaf} out of range for {n} leaves") });
        }
        let mut masses = vec![0.0; n];
        masses[leaf] = 1.0;
        self.set_state(&masses)
    }

    /// Global leaf masses implied by the current conditionals.
    pub fn composed(&self) -> Vec<f64> {
        let n_nodes = self.tree.n_nodes();
        let mut prod = vec![0.0f64; n_nodes];
        prod[self.tree.root()] = 1.0;
        for ix in 1..n_nodes {
            prod[ix] = prod[self.tree.parent(ix).unwrap()] * self.cond[ix];
        }
        let mut out = vec![0.0; self.tree.n_leaves()];
        for (pos, &leaf_ix) in self.tree.leaves().iter().enumerate() {
            out[pos] = prod[leaf_ix];
        }
        out
    }

    /// Advances every controller by `dt` against the leaf cost rates,
    /// children before parents, and accrues both cost ledgers.
    pub fn step(&mut self, rates: &[f64], dt: f64, policy: &StepPolicy) -> Result<()> {
        let n = self.tree.n_leaves();
        if rates.len() != n {
            return Err(Error::MassArity { expected: n, got: rates.len() });
        }
        for &r in rates {
            if !r.is_finite() || r < 0.0 {
                return Err(Error::BadParams { context: format!("cost rate {r} is not finite and nonnegative") });
            }
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::BadParams { context: format!("step length {dt} must be positive") });
        }

        let n_nodes = self.tree.n_nodes();
        let cond_prev: Vec<f64> = self.cond.clone();
        let inner = StepPolicy { h_max: Some(dt), substeps: 1.0, safety: policy.safety };

        for ix in (0..n_nodes).rev() {
            if self.tree.is_leaf(ix) {
                self.taps[ix] = rates[self.tree.leaf_position(ix).unwrap()];
                continue;
            }
            if let Some(sm) = self.stars[ix].as_mut() {
                let priced: Vec<f64> = sm
                    .children
                    .iter()
                    .zip(sm.params.beta.iter())
                    .map(|(&c, &b)| self.taps[c] / b)
                    .collect();
                // Left endpoint: the service ledger prices the state the
                // step starts from, matching the integrator's quadrature.
                let svc_rate: f64 = sm
                    .children
                    .iter()
                    .enumerate()
                    .map(|(slot, &c)| self.taps[c] * sm.q.mass(slot))
                    .sum();
                let dyn_star = Dynamics::Star { reg: &sm.reg };
                let (next, led, _) = integrate_segment(&dyn_star, &sm.q, &priced, dt, &inner)?;
                sm.unfair_service += svc_rate * dt;
                sm.unfair_movement += self.gamma * led.movement;
                sm.ledger.absorb(&led);
                sm.q = next;
                match sm.recorded.last_mut() {
                    Some(last) if last.rates == priced => last.duration += dt,
                    _ => sm.recorded.push(CostSegment { rates: priced.clone(), duration: dt }),
                }
                for (slot, &c) in sm.children.iter().enumerate() {
                    self.cond[c] = sm.q.mass(slot);
                }
            }
            // Realized subtree cost of this node, on the unshrunk metric.
            let (svc, mov, mass_prev) = subtree_increment(self.tree, &cond_prev, &self.cond, rates, ix);
            self.composed_service[ix] += svc * dt;
            self.composed_movement[ix] += mov;
            self.taps[ix] = svc + mov / dt;
            if ix == self.tree.root() && (mass_prev - 1.0).abs() > COMPOSED_MASS_TOL {
                return Err(Error::Numeric {
                    context: format!("composed leaf masses sum to {mass_prev} after {} steps", self.steps),
                });
            }
        }
        self.steps += 1;
        Ok(())
    }
}

/// Service rate, transported mass, and total start-of-step mass of the
/// subtree under `ix`, measured with the tree's own edge weights.
fn subtree_increment(
    tree: &WeightedRootedTree,
    cond_prev: &[f64],
    cond_new: &[f64],
    rates: &[f64],
    ix: NodeIx,
) -> (f64, f64, f64) {
    let mut svc = 0.0;
    let mut mov = 0.0;
    let mut mass = 0.0;
    // (node, product of conditionals before, after) down from `ix`.
    let mut stack: Vec<(NodeIx, f64, f64)> = vec![(ix, 1.0, 1.0)];
    while let Some((v, p_prev, p_new)) = stack.pop() {
        if v != ix {
            mov += tree.weight(v) * (p_new - p_prev).abs();
        }
        if tree.is_leaf(v) {
            let pos = tree.leaf_position(v).unwrap();
            svc += rates[pos] * p_prev;
            mass += p_prev;
            continue;
        }
        for &c in tree.children(v) {
            stack.push((c, p_prev * cond_prev[c], p_new * cond_new[c]));
        }
    }
    (svc, mov, mass)
}

/// Runs the composed controllers over a cost path and checks every
/// guarantee in the chain: per branching node, the priced ledger against
/// its own star optimum, that optimum against the raw subtree optimum,
/// and the composed cost against the priced ledger; at the root, the
/// whole-tree multiplicative bound against the free-start optimum.
pub fn run_hst(
    path: &CostPath,
    tree: &WeightedRootedTree,
    tau: f64,
    c0: f64,
    start: usize,
    p0: Option<&[f64]>,
    policy: &StepPolicy,
) -> Result<CombinerOutcome> {
    path.validate()?;
    let n = tree.n_leaves();
    if path.n_leaves() != 0 && path.n_leaves() != n {
        return Err(Error::MassArity { expected: n, got: path.n_leaves() });
    }
    if start >= n {
        return Err(Error::BadParams { context: format!("start leaf {start} out of range for {n} leaves") });
    }
    let policy = policy.clone().with_env_override();
    let mut comb = build_combiner(tree, tau, c0)?;
    match p0 {
        Some(m) => comb.set_state(m)?,
        None => comb.set_state_point(start)?,
    }
    let p0_masses = comb.composed();

    for seg in &path.segments {
        if seg.duration == 0.0 {
            continue;
        }
        let cap = policy.cap(seg.duration).min(seg.duration);
        let k = (seg.duration / cap).ceil().max(1.0) as usize;
        let dt = seg.duration / k as f64;
        for _ in 0..k {
            comb.step(&seg.rates, dt, &policy)?;
        }
    }

    let root = tree.root();
    let service = comb.composed_service[root];
    let movement = comb.composed_movement[root];
    let metric = MetricSpace::from_tree(tree);
    let offline_free = segment_opt(path, &metric, None)?;
    let diam = tree.diameter();
    let kappa_root = comb.kappa_root();
    let scale = (service + movement).max(offline_free.opt).max(1.0);
    let budget = error_budget(path, &policy, scale);

    let mut checks: Vec<CheckRecord> = Vec::new();
    checks.push(CheckRecord::le(
        "root_guarantee",
        "S + M <= kappa_root * (OPT_free + 4 * diam)".to_string(),
        service + movement,
        kappa_root * (offline_free.opt + 4.0 * diam),
        budget * (1.0 + kappa_root),
    ));

    let mut per_node: Vec<NodeRecord> = Vec::new();
    let mut agg = SegmentLedger::default();
    let mut worst: [Option<CheckRecord>; 3] = [None, None, None];
    for ix in 0..tree.n_nodes() {
        let Some(sm) = comb.stars[ix].as_ref() else { continue };
        let kappa = comb.kappa(ix);
        let beta_max = sm.params.beta.iter().cloned().fold(0.0f64, f64::max);
        let node_tol = budget * (1.0 + beta_max + comb.gamma);
        let star_metric = MetricSpace::from_star_weights(&sm.star_weights)?;
        let star_costs: Vec<Vec<f64>> =
            sm.recorded.iter().map(|s| s.rates.iter().map(|r| r * s.duration).collect()).collect();
        let star_dp = work_function_dp(&star_metric, &star_costs, None)?;
        let raw = subtree_offline(tree, path, ix)?;
        let delta_u = 2.0 * sm.star_weights.iter().cloned().fold(0.0f64, f64::max);
        let su = sm.unfair_service;
        let mu = sm.unfair_movement;
        let composed = comb.composed_service[ix] + comb.composed_movement[ix];
        let id = tree.id(ix);

        let g = CheckRecord::le(
            "node_guarantee",
            format!("node {id}: S_u + M_u <= kappa * (star_opt + 4 * delta)"),
            su + mu,
            kappa * (star_dp.opt + 4.0 * delta_u),
            node_tol,
        );
        let o = CheckRecord::le(
            "node_offline",
            format!("node {id}: star_opt <= subtree_opt"),
            star_dp.opt,
            raw,
            node_tol,
        );
        let c = CheckRecord::le(
            "node_composed",
            format!("node {id}: composed_cost <= S_u + M_u"),
            composed,
            su + mu,
            budget * (1.0 + comb.gamma),
        );
        per_node.push(NodeRecord {
            id,
            n_children: sm.children.len(),
            u_total: sm.params.total(),
            kappa,
            beta_max,
            zeta: sm.params.zeta,
            unfair_service: su,
            unfair_movement: mu,
            composed_cost: composed,
            star_opt: star_dp.opt,
            raw_opt: raw,
            guarantee_slack: g.slack,
            offline_slack: o.slack,
            composed_slack: c.slack,
        });
        for (slot, rec) in [g, o, c].into_iter().enumerate() {
            match &worst[slot] {
                Some(prev) if prev.slack <= rec.slack => {}
                _ => worst[slot] = Some(rec),
            }
        }
        agg.absorb(&sm.ledger);
    }
    for (slot, name) in
        ["node_guarantee_worst", "node_offline_worst", "node_composed_worst"].iter().enumerate()
    {
        if let Some(mut rec) = worst[slot].take() {
            rec.name = name.to_string();
            checks.push(rec);
        }
    }
    checks.extend(kkt_checks(&agg));

    let diagnostics = RunDiagnostics {
        steps: agg.steps,
        events: agg.events,
        clamp_events: agg.clamp_events,
        clamp_duration: agg.clamp_duration,
        min_reduced_cost: agg.min_reduced_cost,
        max_residuals: agg.max_residuals,
        psi_delta: 0.0,
        delta_floored: false,
        delta_exceeds_half: comb
            .stars
            .iter()
            .flatten()
            .any(|sm| sm.params.delta.iter().any(|&d| d > 0.5)),
    };
    let params = serde_json::json!({
        "n_leaves": n,
        "depth": tree.depth(),
        "tau": tau,
        "c0": c0,
        "gamma": comb.gamma,
        "kappa_root": kappa_root,
        "start": start,
        "policy": { "h_max": policy.h_max, "substeps": policy.substeps, "safety": policy.safety },
    });
    let report = CostReport {
        schema: REPORT_SCHEMA.to_string(),
        algo: "hst".to_string(),
        params,
        instance_digest: tree_digest(tree, start, path),
        costs: CostSummary {
            service,
            movement,
            service_offline: offline_free.service,
            movement_offline: offline_free.movement,
            opt: offline_free.opt,
        },
        checks,
        diagnostics,
    };
    let _ = p0_masses;
    Ok(CombinerOutcome { report, final_state: comb.composed(), per_node, kappa_root })
}

/// Free-start offline optimum of the cost path restricted to the leaves
/// under `ix`, on the metric those leaves inherit from the whole tree.
fn subtree_offline(tree: &WeightedRootedTree, path: &CostPath, ix: NodeIx) -> Result<f64> {
    let (lo, hi) = tree.leaf_span(ix);
    let k = hi - lo;
    if k == 1 {
        let total: f64 = path.segments.iter().map(|s| s.rates[lo] * s.duration).sum();
        return Ok(total);
    }
    let mut d = vec![vec![0.0f64; k]; k];
    for a in 0..k {
        for b in 0..k {
            d[a][b] = tree.leaf_distance(lo + a, lo + b);
        }
    }
    let sub_metric = MetricSpace::from_matrix(&d)?;
    let sub_path = CostPath::new(
        path.segments
            .iter()
            .map(|s| CostSegment { rates: s.rates[lo..hi].to_vec(), duration: s.duration })
            .collect(),
    )?;
    Ok(segment_opt(&sub_path, &sub_metric, None)?.opt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unfair::run_unfair;

    fn flat(levels: &[(f64, f64)]) -> CostPath {
        CostPath::new(
            levels
                .iter()
                .map(|&(a, b)| CostSegment { rates: vec![a, b], duration: 1.0 })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn guarantee_weights_match_closed_forms() {
        // Pass-through chain above a single leaf keeps the floor.
        let chain = WeightedRootedTree::build(&[(0, 1, 8.0), (1, 2, 1.0)], 0).unwrap();
        let comb = build_combiner(&chain, 2.0, 1.5).unwrap();
        let expect = 16.0 * 1.5;
        assert!((comb.kappa_root() - expect).abs() < 1e-12 * expect);

        // Unit-depth star with n leaves: root weight n * e^(c0 + 1).
        let n = 6usize;
        let star = WeightedRootedTree::star(&vec![1.0; n]).unwrap();
        let comb = build_combiner(&star, 2.0, 1.0).unwrap();
        let expect = 16.0 * ((n as f64).ln() + 2.0);
        println!("star kappa {} expect {}", comb.kappa_root(), expect);
        assert!((comb.kappa_root() - expect).abs() < 1e-12 * expect);

        // Balanced binary with depth d: root weight 2^d * e^(c0 + d).
        let edges = [
            (0u64, 1u64, 4.0),
            (0, 2, 4.0),
            (1, 3, 0.25),
            (1, 4, 0.25),
            (2, 5, 0.25),
            (2, 6, 0.25),
        ];
        let two = WeightedRootedTree::build(&edges, 0).unwrap();
        let comb = build_combiner(&two, 2.0, 1.0).unwrap();
        let d = 2.0f64;
        let expect = 16.0 * (d * 2.0f64.ln() + 1.0 + d);
        println!("binary kappa {} expect {}", comb.kappa_root(), expect);
        assert!((comb.kappa_root() - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn build_rejects_bad_shapes() {
        let star = WeightedRootedTree::star(&[1.0, 1.0]).unwrap();
        assert!(build_combiner(&star, 1.0, 1.0).is_err());
        assert!(build_combiner(&star, 2.0, 0.5).is_err());
        // Too-long child edges break the separation requirement.
        let squat = WeightedRootedTree::build(&[(0, 1, 1.0), (0, 2, 1.0), (1, 3, 0.9), (1, 4, 0.9)], 0)
            .unwrap();
        let err = build_combiner(&squat, 2.0, 1.0).err().unwrap();
        let msg = format!("{err}");
        assert!(msg.contains("separated"), "unexpected error {msg}");
    }

    #[test]
    fn zero_cost_stays_put_and_passes() {
        let star = WeightedRootedTree::star(&[1.0, 1.0, 1.0]).unwrap();
        let path = CostPath::new(vec![CostSegment { rates: vec![0.0, 0.0, 0.0], duration: 2.0 }]).unwrap();
        let out = run_hst(&path, &star, 2.0, 1.0, 1, None, &StepPolicy::default()).unwrap();
        assert!(out.report.all_pass(), "failed: {:?}", out.report.failed_checks());
        assert!((out.final_state[1] - 1.0).abs() < 1e-12);
        assert_eq!(out.report.costs.service, 0.0);
        assert_eq!(out.report.costs.movement, 0.0);
        assert_eq!(out.per_node.len(), 1);
    }

    #[test]
    fn depth_one_matches_plain_unfair_star() {
        // A combiner over a bare star is one priced controller; replaying
        // the priced rates through the standalone runner must land on the
        // same trajectory and ledgers.
        let weights = [2.0, 2.0, 2.0];
        let star = WeightedRootedTree::star(&weights).unwrap();
        let path = CostPath::new(vec![
            CostSegment { rates: vec![3.0, 0.0, 0.0], duration: 1.0 },
            CostSegment { rates: vec![0.0, 2.0, 0.5], duration: 1.5 },
            CostSegment { rates: vec![0.25, 0.0, 4.0], duration: 0.5 },
        ])
        .unwrap();
        let tau = 2.0;
        let c0 = 1.0;
        let policy = StepPolicy { h_max: None, substeps: 64.0, safety: 0.9 };
        let out = run_hst(&path, &star, tau, c0, 0, None, &policy).unwrap();

        let gamma = tau / (tau - 1.0);
        let u = vec![c0.exp(); weights.len()];
        let params = UnfairParams::derive(&u, gamma, 0.0).unwrap();
        let shrunk: Vec<f64> = weights.iter().map(|w| (1.0 - 1.0 / tau) * w).collect();
        let priced = CostPath::new(
            path.segments
                .iter()
                .map(|s| CostSegment {
                    rates: s.rates.iter().zip(params.beta.iter()).map(|(r, b)| r / b).collect(),
                    duration: s.duration,
                })
                .collect(),
        )
        .unwrap();
        let base = run_unfair(&priced, &shrunk, &params, 0, None, &policy).unwrap();

        for (a, b) in out.final_state.iter().zip(base.final_state.masses().iter()) {
            assert!((a - b).abs() < 1e-9, "state mismatch {a} vs {b}");
        }
        // Event-split steps leave the two runs on different quadrature
        // grids, so the ledgers only agree to first order in the step.
        let rec = &out.per_node[0];
        println!(
            "combined S_u {} M_u {} vs standalone {} {}",
            rec.unfair_service, rec.unfair_movement, base.ledger.unfair_service, base.ledger.unfair_movement
        );
        let rel = |a: f64, b: f64| (a - b).abs() / b.max(1.0);
        assert!(rel(rec.unfair_service, base.ledger.unfair_service) < 1e-4);
        assert!(rel(rec.unfair_movement, base.ledger.unfair_movement) < 1e-4);
        assert!(out.report.all_pass(), "failed: {:?}", out.report.failed_checks());
    }

    #[test]
    fn depth_one_ledgers_match_exactly_off_the_boundary() {
        // Interior start, mild costs, dyadic durations: no zero-crossing
        // events, so both runs take the identical step grid and the
        // ledgers agree to rounding.
        let weights = [1.0, 1.0, 1.0];
        let star = WeightedRootedTree::star(&weights).unwrap();
        let path = CostPath::new(vec![
            CostSegment { rates: vec![1.0, 0.0, 0.25], duration: 1.0 },
            CostSegment { rates: vec![0.0, 0.5, 0.0], duration: 0.5 },
        ])
        .unwrap();
        let tau = 2.0;
        let c0 = 1.0;
        let policy = StepPolicy { h_max: None, substeps: 64.0, safety: 0.9 };
        let third = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        let out = run_hst(&path, &star, tau, c0, 0, Some(&third), &policy).unwrap();

        let params = UnfairParams::derive(&vec![c0.exp(); 3], tau / (tau - 1.0), 0.0).unwrap();
        let shrunk: Vec<f64> = weights.iter().map(|w| (1.0 - 1.0 / tau) * w).collect();
        let priced = CostPath::new(
            path.segments
                .iter()
                .map(|s| CostSegment {
                    rates: s.rates.iter().zip(params.beta.iter()).map(|(r, b)| r / b).collect(),
                    duration: s.duration,
                })
                .collect(),
        )
        .unwrap();
        let base = run_unfair(&priced, &shrunk, &params, 0, Some(&third), &policy).unwrap();
        assert_eq!(base.segment.events, 0, "grids diverge once an event fires");
        let rec = &out.per_node[0];
        assert!((rec.unfair_service - base.ledger.unfair_service).abs() < 1e-9);
        assert!((rec.unfair_movement - base.ledger.unfair_movement).abs() < 1e-9);
        for (a, b) in out.final_state.iter().zip(base.final_state.masses().iter()) {
            assert!((a - b).abs() < 1e-12, "state mismatch {a} vs {b}");
        }
    }

    #[test]
    fn pulse_moves_mass_and_checks_hold() {
        // Two-level tree, cost pinned on one leaf; mass should drain out
        // of that leaf while every chained inequality stays green.
        let edges =
            [(0u64, 1u64, 8.0), (0, 2, 8.0), (1, 3, 0.5), (1, 4, 0.5), (2, 5, 0.5), (2, 6, 0.5)];
        let tree = WeightedRootedTree::build(&edges, 0).unwrap();
        let path = CostPath::new(vec![
            CostSegment { rates: vec![5.0, 0.0, 0.0, 0.0], duration: 1.0 },
            CostSegment { rates: vec![5.0, 0.0, 0.0, 0.0], duration: 1.0 },
        ])
        .unwrap();
        let policy = StepPolicy { h_max: None, substeps: 200.0, safety: 0.9 };
        let out = run_hst(&path, &tree, 2.0, 1.0, 0, None, &policy).unwrap();
        assert!(out.report.all_pass(), "failed: {:?}", out.report.failed_checks());
        assert!(out.final_state[0] < 0.9, "mass stayed at {}", out.final_state[0]);
        let total: f64 = out.final_state.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_eq!(out.per_node.len(), 3);
        assert!(out.report.costs.service > 0.0);
        assert!(out.report.costs.movement > 0.0);
    }

    #[test]
    fn deterministic_reports() {
        let weights = [1.0, 1.0, 1.0, 1.0];
        let star = WeightedRootedTree::star(&weights).unwrap();
        let path = flat(&[(1.0, 0.0), (0.0, 2.0), (3.0, 0.5)]);
        let wide = CostPath::new(
            path.segments
                .iter()
                .map(|s| CostSegment {
                    rates: vec![s.rates[0], s.rates[1], s.rates[0] / 2.0, 0.0],
                    duration: s.duration,
                })
                .collect(),
        )
        .unwrap();
        let policy = StepPolicy { h_max: None, substeps: 50.0, safety: 0.9 };
        let a = run_hst(&wide, &star, 2.0, 1.0, 2, None, &policy).unwrap();
        let b = run_hst(&wide, &star, 2.0, 1.0, 2, None, &policy).unwrap();
        assert_eq!(a.report.to_json(), b.report.to_json());
    }

    #[test]
    fn seeded_spread_start_is_accepted() {
        let star = WeightedRootedTree::star(&[1.0, 2.0, 4.0]).unwrap();
        let path = CostPath::new(vec![CostSegment { rates: vec![1.0, 1.0, 0.0], duration: 1.0 }]).unwrap();
        let p0 = [0.25, 0.25, 0.5];
        let policy = StepPolicy { h_max: None, substeps: 100.0, safety: 0.9 };
        let out = run_hst(&path, &star, 3.0, 1.0, 0, Some(&p0), &policy).unwrap();
        // Mass should drift toward the free leaf.
        assert!(out.final_state[2] > 0.5);
        let total: f64 = out.final_state.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}
