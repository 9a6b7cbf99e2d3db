//! Event-driven explicit Euler integration of the constrained dynamics.
//!
//! Each step solves the multipliers exactly at the current state, then
//! advances by the largest step that keeps every leaf mass nonnegative.
//! Masses decaying toward zero are snapped to exactly zero once they fall
//! below [`STATE_SNAP`] with nonpositive drift, so the active set stays
//! crisp and the next solve clamps them through their own multiplier.

use crate::dist::LeafDistribution;
use crate::error::{Error, Result};
use crate::solver::{
    star_multiplier_solve_into, tree_multiplier_solve, EntropicRegularizer, MultiplierSolution,
    Residuals,
};
use crate::tree::WeightedRootedTree;

/// Masses below this with nonpositive drift are snapped to exact zero.
pub const STATE_SNAP: f64 = 1e-12;

/// Step size floor; smaller steps abort the run.
pub const STEP_FLOOR: f64 = 1e-15;

/// Environment variable overriding the maximum step size (seconds of model
/// time, absolute).
pub const STEP_MAX_ENV: &str = "MTS_STEP_MAX";

/// Step-size policy for one run.
#[derive(Debug, Clone)]
pub struct StepPolicy {
    /// Absolute cap on the step size; `None` divides each segment evenly.
    pub h_max: Option<f64>,
    /// Segments are cut into at least this many steps when `h_max` is None.
    pub substeps: f64,
    /// Fraction of the distance to a zero crossing taken per step.
    pub safety: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy { h_max: None, substeps: 1000.0, safety: 0.9 }
    }
}

impl StepPolicy {
    /// Replaces the cap with the `MTS_STEP_MAX` value when set.
    pub fn with_env_override(mut self) -> Self {
        if let Ok(raw) = std::env::var(STEP_MAX_ENV) {
            if let Ok(v) = raw.trim().parse::<f64>() {
                if v > 0.0 && v.is_finite() {
                    self.h_max = Some(v);
                }
            }
        }
        self
    }

    pub fn cap(&self, segment_duration: f64) -> f64 {
        self.h_max.unwrap_or(segment_duration / self.substeps)
    }
}

/// Which constrained system drives the run.
pub enum Dynamics<'a> {
    /// Uniform star; regularizer indexed by leaf.
    Star { reg: &'a EntropicRegularizer },
    /// Weighted tree; regularizer indexed by node.
    Tree { tree: &'a WeightedRootedTree, reg: &'a EntropicRegularizer },
}

impl<'a> Dynamics<'a> {
    pub fn n_leaves(&self) -> usize {
        match self {
            Dynamics::Star { reg } => reg.len(),
            Dynamics::Tree { tree, .. } => tree.n_leaves(),
        }
    }

    pub fn regularizer(&self) -> &EntropicRegularizer {
        match self {
            Dynamics::Star { reg } => reg,
            Dynamics::Tree { reg, .. } => reg,
        }
    }

    /// One exact solve, reusing the caller's buffers across steps. `order`
    /// holds the leaf indices sorted by cost rate; `sens` is scratch.
    fn solve_reusing(
        &self,
        p: &LeafDistribution,
        c: &[f64],
        order: &[usize],
        sens: &mut Vec<f64>,
        out: &mut MultiplierSolution,
    ) -> Result<()> {
        match self {
            Dynamics::Star { reg } => {
                reg.sensitivities_into(p.masses(), sens);
                star_multiplier_solve_into(p.masses(), sens, c, order, out);
                Ok(())
            }
            Dynamics::Tree { tree, reg } => {
                *out = tree_multiplier_solve(tree, p, c, reg)?;
                Ok(())
            }
        }
    }

    fn fill_leaf_drifts(&self, sol: &MultiplierSolution, out: &mut [f64]) {
        match self {
            Dynamics::Star { .. } => out.copy_from_slice(&sol.drift),
            Dynamics::Tree { tree, .. } => {
                for (slot, &ix) in out.iter_mut().zip(tree.leaves()) {
                    *slot = sol.drift[ix];
                }
            }
        }
    }

    /// Transport rate `sum_u w_u |x_u'|` over every coordinate the metric
    /// charges: leaves on a star, all non-root nodes on a tree.
    fn movement_rate(&self, sol: &MultiplierSolution) -> f64 {
        match self {
            Dynamics::Star { reg } => sol
                .drift
                .iter()
                .zip(reg.weight())
                .map(|(&d, &w)| w * d.abs())
                .sum(),
            Dynamics::Tree { reg, .. } => sol
                .drift
                .iter()
                .zip(reg.weight())
                .map(|(&d, &w)| w * d.abs())
                .sum(),
        }
    }

    /// Per-leaf shift entries of the regularizer.
    fn leaf_shifts(&self) -> Vec<f64> {
        match self {
            Dynamics::Star { reg } => reg.delta().to_vec(),
            Dynamics::Tree { tree, reg } => {
                tree.leaves().iter().map(|&ix| reg.delta()[ix]).collect()
            }
        }
    }

    /// Depth-weighted occupancy `sum_u depth_u * w_u * x_u`.
    pub fn depth_potential(&self, p: &LeafDistribution) -> f64 {
        match self {
            Dynamics::Star { reg } => {
                p.masses().iter().zip(reg.weight()).map(|(&m, &w)| w * m).sum()
            }
            Dynamics::Tree { tree, .. } => {
                let x = p.node_masses(tree);
                (0..tree.n_nodes())
                    .map(|ix| tree.node_depth(ix) as f64 * tree.weight(ix) * x[ix])
                    .sum()
            }
        }
    }
}

/// Cost and diagnostic accumulators over an integrated span.
#[derive(Debug, Clone, Default)]
pub struct SegmentLedger {
    pub elapsed: f64,
    /// Service cost: integral of the cost rate against the occupancy.
    pub service: f64,
    /// Movement cost: integral of the weighted drift magnitudes.
    pub movement: f64,
    /// Integral of the reduced cost paired with the shift vector.
    pub reduced_cost: f64,
    /// Per-leaf integral of the reduced cost rate.
    pub reduced_cost_per_leaf: Vec<f64>,
    /// Depth-weighted occupancy at the end of the span.
    pub psi: f64,
    pub steps: usize,
    /// Steps limited by a zero crossing or ending in a snap.
    pub events: usize,
    /// Internal multiplier clamps encountered.
    pub clamp_events: usize,
    /// Total time integrated under a clamped solve.
    pub clamp_duration: f64,
    /// Smallest reduced cost rate seen (should stay above -1e-10).
    pub min_reduced_cost: f64,
    pub max_residuals: Residuals,
}

impl SegmentLedger {
    pub fn new(n_leaves: usize) -> Self {
        SegmentLedger {
            reduced_cost_per_leaf: vec![0.0; n_leaves],
            ..SegmentLedger::default()
        }
    }

    /// Folds a later span into this one.
    pub fn absorb(&mut self, later: &SegmentLedger) {
        self.elapsed += later.elapsed;
        self.service += later.service;
        self.movement += later.movement;
        self.reduced_cost += later.reduced_cost;
        if self.reduced_cost_per_leaf.is_empty() {
            self.reduced_cost_per_leaf = later.reduced_cost_per_leaf.clone();
        } else {
            for (a, b) in self.reduced_cost_per_leaf.iter_mut().zip(&later.reduced_cost_per_leaf)
            {
                *a += b;
            }
        }
        self.psi = later.psi;
        self.steps += later.steps;
        self.events += later.events;
        self.clamp_events += later.clamp_events;
        self.clamp_duration += later.clamp_duration;
        self.min_reduced_cost = self.min_reduced_cost.min(later.min_reduced_cost);
        let r = &mut self.max_residuals;
        let l = &later.max_residuals;
        r.mass_balance = r.mass_balance.max(l.mass_balance);
        r.complementary_slackness = r.complementary_slackness.max(l.complementary_slackness);
        r.sign = r.sign.max(l.sign);
        r.stationarity = r.stationarity.max(l.stationarity);
    }
}

/// Integrates one constant-rate cost segment.
///
/// Costs accumulate with left-endpoint values over each step. Returns the
/// final state, the ledger for the span, and the last multiplier solve.
pub fn integrate_segment(
    dynamics: &Dynamics,
    state: &LeafDistribution,
    c: &[f64],
    duration: f64,
    policy: &StepPolicy,
) -> Result<(LeafDistribution, SegmentLedger, Option<MultiplierSolution>)> {
    integrate_segment_observed(dynamics, state, c, duration, policy, |_, _, _| {})
}

/// [`integrate_segment`] with a per-step observer called after each solve
/// with the pre-step time, pre-step state, and the solve.
pub fn integrate_segment_observed(
    dynamics: &Dynamics,
    state: &LeafDistribution,
    c: &[f64],
    duration: f64,
    policy: &StepPolicy,
    mut observe: impl FnMut(f64, &LeafDistribution, &MultiplierSolution),
) -> Result<(LeafDistribution, SegmentLedger, Option<MultiplierSolution>)> {
    let n = dynamics.n_leaves();
    if c.len() != n || state.len() != n {
        return Err(Error::MassArity { expected: n, got: c.len().max(state.len()) });
    }
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::BadParams { context: "segment duration must be nonnegative".into() });
    }
    let mut ledger = SegmentLedger::new(n);
    let mut p = state.clone();
    if duration == 0.0 {
        ledger.psi = dynamics.depth_potential(&p);
        return Ok((p, ledger, None));
    }
    let h_cap = policy.cap(duration);
    if !(h_cap > 0.0) {
        return Err(Error::BadParams { context: "step cap must be positive".into() });
    }
    let shifts = dynamics.leaf_shifts();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| c[a].total_cmp(&c[b]));
    let mut sens: Vec<f64> = Vec::with_capacity(dynamics.regularizer().len());
    let mut sol = MultiplierSolution::empty();
    let mut solved = false;
    let mut drifts = vec![0.0f64; n];
    let mut t = 0.0f64;
    while t < duration {
        // A leftover below time resolution is rounding debris, not a step.
        if duration - t <= STEP_FLOOR * t.max(1.0) {
            break;
        }
        dynamics.solve_reusing(&p, c, &order, &mut sens, &mut sol)?;
        solved = true;
        observe(t, &p, &sol);
        dynamics.fill_leaf_drifts(&sol, &mut drifts);

        let mut h_event = f64::INFINITY;
        for (l, &d) in drifts.iter().enumerate() {
            if d < 0.0 {
                h_event = h_event.min(policy.safety * p.mass(l) / -d);
            }
        }
        let remaining = duration - t;
        let h = h_cap.min(h_event).min(remaining);
        if h < STEP_FLOOR || t + h == t {
            return Err(Error::StepUnderflow { t, h });
        }

        ledger.service += h * c.iter().zip(p.masses()).map(|(&ci, &pi)| ci * pi).sum::<f64>();
        ledger.movement += h * dynamics.movement_rate(&sol);
        for l in 0..n {
            let reduced = c[l] - sol.xi[l];
            ledger.min_reduced_cost = ledger.min_reduced_cost.min(reduced);
            ledger.reduced_cost_per_leaf[l] += h * reduced;
            ledger.reduced_cost += h * reduced * shifts[l];
        }
        if sol.clamp_events > 0 {
            ledger.clamp_events += sol.clamp_events;
            ledger.clamp_duration += h;
        }
        let r = &mut ledger.max_residuals;
        r.mass_balance = r.mass_balance.max(sol.residuals.mass_balance);
        r.complementary_slackness =
            r.complementary_slackness.max(sol.residuals.complementary_slackness);
        r.sign = r.sign.max(sol.residuals.sign);
        r.stationarity = r.stationarity.max(sol.residuals.stationarity);

        let mut snapped = false;
        {
            let masses = p.masses_mut();
            let mut total = 0.0f64;
            for l in 0..n {
                let mut v = masses[l] + h * drifts[l];
                if v < STATE_SNAP && drifts[l] <= 0.0 {
                    if v != 0.0 {
                        snapped = snapped || masses[l] != 0.0;
                    }
                    v = 0.0;
                }
                debug_assert!(v >= -STATE_SNAP);
                v = v.max(0.0);
                masses[l] = v;
                total += v;
            }
            debug_assert!(total > 0.0);
            for m in masses.iter_mut() {
                *m /= total;
            }
        }

        ledger.steps += 1;
        if snapped || (h_event <= h_cap && h_event < remaining) {
            ledger.events += 1;
        }
        t += h;
        if h == remaining {
            break;
        }
    }
    ledger.elapsed = duration;
    ledger.psi = dynamics.depth_potential(&p);
    Ok((p, ledger, solved.then_some(sol)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star2() -> EntropicRegularizer {
        EntropicRegularizer::star_uniform(&[1.0, 1.0], 1.0, 0.25).unwrap()
    }

    #[test]
    fn zero_cost_changes_nothing() {
        let reg = star2();
        let dynamics = Dynamics::Star { reg: &reg };
        let tree = WeightedRootedTree::star(&[1.0, 1.0]).unwrap();
        let p0 = LeafDistribution::from_masses(&tree, vec![0.3, 0.7]).unwrap();
        let (p1, ledger, _) =
            integrate_segment(&dynamics, &p0, &[0.0, 0.0], 5.0, &StepPolicy::default()).unwrap();
        assert_eq!(p1.masses(), p0.masses());
        assert_eq!(ledger.service, 0.0);
        assert_eq!(ledger.movement, 0.0);
        assert!(ledger.steps >= 1000 && ledger.steps <= 1001);
    }

    #[test]
    fn cost_pushes_mass_away_and_conserves_total() {
        let reg = star2();
        let dynamics = Dynamics::Star { reg: &reg };
        let tree = WeightedRootedTree::star(&[1.0, 1.0]).unwrap();
        let p0 = LeafDistribution::uniform(&tree);
        let mut ok = true;
        let (p1, ledger, _) = integrate_segment_observed(
            &dynamics,
            &p0,
            &[1.0, 0.0],
            20.0,
            &StepPolicy::default(),
            |_, state, _| {
                let sum: f64 = state.masses().iter().sum();
                ok = ok && (sum - 1.0).abs() < 1e-9 && state.masses().iter().all(|&m| m >= 0.0);
            },
        )
        .unwrap();
        assert!(ok, "mass conservation violated along the trajectory");
        assert!(p1.mass(0) < 0.05, "costly coordinate should drain, got {}", p1.mass(0));
        assert!(p1.mass(1) > 0.95);
        assert!(ledger.service > 0.0);
        assert!(ledger.movement > 0.0);
        // Total transport is bounded by the diameter's worth of mass.
        assert!(ledger.movement <= 2.0);
        assert!(ledger.min_reduced_cost >= -1e-10);
    }

    #[test]
    fn draining_coordinate_snaps_to_exact_zero() {
        let reg = star2();
        let dynamics = Dynamics::Star { reg: &reg };
        let tree = WeightedRootedTree::star(&[1.0, 1.0]).unwrap();
        let p0 = LeafDistribution::uniform(&tree);
        let (p1, _, trace) =
            integrate_segment(&dynamics, &p0, &[50.0, 0.0], 200.0, &StepPolicy::default())
                .unwrap();
        assert_eq!(p1.mass(0), 0.0, "decayed mass must snap to zero exactly");
        // Once empty, the coordinate is held by its own multiplier.
        let sol = trace.unwrap();
        assert!(sol.xi[0] > 0.0);
        assert_eq!(sol.drift[0], 0.0);
    }

    #[test]
    fn single_leaf_tree_is_forced() {
        let t = WeightedRootedTree::build(&[(0, 1, 2.0)], 0).unwrap();
        let reg = EntropicRegularizer::tree_with(&t, 1.0, 1.0).unwrap();
        let dynamics = Dynamics::Tree { tree: &t, reg: &reg };
        let p0 = LeafDistribution::point(&t, 0);
        let (p1, ledger, _) =
            integrate_segment(&dynamics, &p0, &[3.0], 2.0, &StepPolicy::default()).unwrap();
        assert_eq!(p1.mass(0), 1.0);
        assert!((ledger.service - 6.0).abs() < 1e-9);
        assert!(ledger.movement.abs() < 1e-12);
    }

    #[test]
    fn halving_the_step_changes_costs_first_order() {
        let reg = star2();
        let dynamics = Dynamics::Star { reg: &reg };
        let tree = WeightedRootedTree::star(&[1.0, 1.0]).unwrap();
        let p0 = LeafDistribution::uniform(&tree);
        let run = |h: f64| {
            let policy = StepPolicy { h_max: Some(h), ..StepPolicy::default() };
            let (_, ledger, _) =
                integrate_segment(&dynamics, &p0, &[1.0, 0.2], 4.0, &policy).unwrap();
            (ledger.service, ledger.movement)
        };
        let (s1, m1) = run(0.01);
        let (s2, m2) = run(0.005);
        let (s4, m4) = run(0.0025);
        // Successive halvings shrink the change roughly in half.
        let ds1 = (s1 - s2).abs();
        let ds2 = (s2 - s4).abs();
        let dm1 = (m1 - m2).abs();
        let dm2 = (m2 - m4).abs();
        assert!(ds2 <= 0.75 * ds1 + 1e-12, "service not first order: {ds1} {ds2}");
        assert!(dm2 <= 0.75 * dm1 + 1e-12, "movement not first order: {dm1} {dm2}");
    }

    #[test]
    fn env_override_replaces_the_cap() {
        let policy = StepPolicy { h_max: Some(0.5), ..StepPolicy::default() };
        std::env::set_var(STEP_MAX_ENV, "0.125");
        let policy = policy.with_env_override();
        std::env::remove_var(STEP_MAX_ENV);
        assert_eq!(policy.h_max, Some(0.125));
    }
}
