//! Per-state KKT solves for the mirror-descent dynamics.
//!
//! The state couples to the cost through a diagonal metric: coordinate `u`
//! reacts with sensitivity `s_u = (eta_u / w_u) * (x_u + delta_u)`. On a
//! star the drift is `s_i * (mu - c_i + xi_i)` with a single multiplier
//! `mu` balancing total mass and `xi_i >= 0` pinning empty coordinates. On a
//! tree every internal node carries its own nonnegative multiplier, and the
//! whole system solves exactly by propagating piecewise-linear responses
//! from the leaves to the root and pressures back down.

use crate::dist::{subtree_sums, LeafDistribution};
use crate::error::{Error, Result};
use crate::pwl::PwlMonotone;
use crate::tree::WeightedRootedTree;

/// Smallest shift kept without flagging; smaller entries are raised here.
pub const DELTA_FLOOR: f64 = 1e-9;

/// Per-coordinate parameters of the entropic mirror map
/// `(1/eta) * sum_u w_u (x_u + delta_u) log(x_u + delta_u)`.
#[derive(Debug, Clone)]
pub struct EntropicRegularizer {
    eta: Vec<f64>,
    delta: Vec<f64>,
    weight: Vec<f64>,
    /// Some delta entry was below [`DELTA_FLOOR`] and got raised.
    pub delta_floored: bool,
    /// Some delta entry exceeds 1/2 (outside the usual parameter regime;
    /// kept as given).
    pub delta_exceeds_half: bool,
}

impl EntropicRegularizer {
    fn build(eta: Vec<f64>, mut delta: Vec<f64>, weight: Vec<f64>) -> Result<Self> {
        if eta.len() != delta.len() || eta.len() != weight.len() || eta.is_empty() {
            return Err(Error::BadParams { context: "regularizer arity mismatch".into() });
        }
        if eta.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::BadParams { context: "learning rate must be positive".into() });
        }
        if delta.iter().any(|&d| !(d > 0.0) || d > 1.0) {
            return Err(Error::BadParams { context: "shift must lie in (0, 1]".into() });
        }
        let mut floored = false;
        for d in &mut delta {
            if *d < DELTA_FLOOR {
                *d = DELTA_FLOOR;
                floored = true;
            }
        }
        let exceeds = delta.iter().any(|&d| d > 0.5);
        Ok(EntropicRegularizer {
            eta,
            delta,
            weight,
            delta_floored: floored,
            delta_exceeds_half: exceeds,
        })
    }

    /// Uniform star parameters over `weights.len()` coordinates.
    pub fn star_uniform(weights: &[f64], eta: f64, delta: f64) -> Result<Self> {
        let n = weights.len();
        Self::build(vec![eta; n], vec![delta; n], weights.to_vec())
    }

    /// Star defaults: learning rate `4 ln n`, shift `1/n^2`.
    pub fn star_default(weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        if n < 2 {
            return Err(Error::BadParams { context: "star needs at least two points".into() });
        }
        let nf = n as f64;
        Self::star_uniform(weights, 4.0 * nf.ln(), 1.0 / (nf * nf))
    }

    /// Per-coordinate star parameters (unfair-cost runs).
    pub fn star_per_coordinate(weights: &[f64], eta: &[f64], delta: &[f64]) -> Result<Self> {
        Self::build(eta.to_vec(), delta.to_vec(), weights.to_vec())
    }

    /// Tree parameters indexed by node: uniform learning rate, the given
    /// shift on every leaf, internal shifts by upward summation (the root
    /// shift is then the total leaf shift).
    pub fn tree_with(tree: &WeightedRootedTree, eta: f64, leaf_delta: f64) -> Result<Self> {
        let n = tree.n_nodes();
        let mut delta = vec![0.0f64; n];
        for ix in (0..n).rev() {
            if tree.is_leaf(ix) {
                delta[ix] = leaf_delta;
            } else {
                let sum: f64 = tree.children(ix).iter().map(|&c| delta[c]).sum();
                // Leaf shifts chosen to total exactly 1 can overshoot by an
                // ulp in the sum; snap that back inside the domain.
                delta[ix] = if sum > 1.0 && sum - 1.0 <= 1e-12 { 1.0 } else { sum };
            }
        }
        let weight = (0..n).map(|ix| tree.weight(ix)).collect();
        Self::build(vec![eta; n], delta, weight)
    }

    /// Tree defaults: learning rate `2 ln n`, leaf shift `1/n` for `n`
    /// leaves (so the root shift is 1).
    pub fn tree_default(tree: &WeightedRootedTree) -> Result<Self> {
        let n = tree.n_leaves();
        if n < 2 {
            return Err(Error::BadParams { context: "tree needs at least two leaves".into() });
        }
        let nf = n as f64;
        Self::tree_with(tree, 2.0 * nf.ln(), 1.0 / nf)
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    /// Formal movement-to-service constant `max_u 2 ln(1/delta_u) / eta_u`.
    pub fn lipschitz(&self) -> f64 {
        self.eta
            .iter()
            .zip(&self.delta)
            .map(|(&e, &d)| 2.0 * (1.0 / d).ln() / e)
            .fold(0.0f64, f64::max)
    }

    /// Everywhere-valid constant `max_u ln((1 + delta_u)/delta_u) / eta_u`.
    pub fn true_lipschitz(&self) -> f64 {
        self.eta
            .iter()
            .zip(&self.delta)
            .map(|(&e, &d)| ((1.0 + d) / d).ln() / e)
            .fold(0.0f64, f64::max)
    }

    /// Sensitivities at state `x` (same indexing as the regularizer).
    /// Coordinates with zero weight (the tree root) get zero.
    pub fn sensitivities(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.sensitivities_into(x, &mut out);
        out
    }

    /// [`Self::sensitivities`] written into a caller-held buffer.
    pub fn sensitivities_into(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.len());
        out.clear();
        out.extend(
            x.iter()
                .zip(self.eta.iter().zip(self.delta.iter().zip(&self.weight)))
                .map(|(&xv, (&e, (&d, &w)))| if w > 0.0 { e * (xv + d) / w } else { 0.0 }),
        );
    }
}

/// Worst-case constraint violations of a multiplier solve.
#[derive(Debug, Clone, Copy, Default, serde::Serialize, serde::Deserialize)]
pub struct Residuals {
    /// Leaf drift total, plus internal flow imbalance on trees.
    pub mass_balance: f64,
    /// Largest `|xi * mass|`.
    pub complementary_slackness: f64,
    /// Largest violation of the multiplier sign constraints.
    pub sign: f64,
    /// Largest row residual of `w * drift + eta (x + delta) (c + lambda - xi)`
    /// with the tree pressure difference folded into `lambda`.
    pub stationarity: f64,
}

impl Residuals {
    pub fn max_abs(&self) -> f64 {
        self.mass_balance
            .max(self.complementary_slackness)
            .max(self.sign)
            .max(self.stationarity)
    }
}

/// One exact solve of the constrained dynamics at a fixed state.
#[derive(Debug, Clone)]
pub struct MultiplierSolution {
    /// Root (star: simplex) multiplier.
    pub mu: f64,
    /// Per-node multipliers on a tree; the root slot holds `mu`, leaves 0.
    /// Empty for star solves.
    pub lambda_hat: Vec<f64>,
    /// Per-leaf nonnegativity multipliers.
    pub xi: Vec<f64>,
    /// Drift per coordinate (star) or per node (tree).
    pub drift: Vec<f64>,
    /// Per leaf: carries positive mass.
    pub active: Vec<bool>,
    /// Internal solves that hit the nonnegativity clamp.
    pub clamp_events: usize,
    pub residuals: Residuals,
}

impl MultiplierSolution {
    /// Placeholder to be overwritten by an in-place solve.
    pub fn empty() -> Self {
        MultiplierSolution {
            mu: 0.0,
            lambda_hat: Vec::new(),
            xi: Vec::new(),
            drift: Vec::new(),
            active: Vec::new(),
            clamp_events: 0,
            residuals: Residuals::default(),
        }
    }

    /// Leaf drifts: the whole vector on a star, the leaf slots on a tree.
    pub fn leaf_drifts<'a>(&'a self, tree: Option<&'a WeightedRootedTree>) -> Vec<f64> {
        match tree {
            None => self.drift.clone(),
            Some(t) => t.leaves().iter().map(|&ix| self.drift[ix]).collect(),
        }
    }
}

/// Solves the star balance `sum_i drift_i = 0` for the multiplier `mu`.
///
/// Coordinates with mass respond as `s_i (mu - c_i)`; empty ones only push
/// outward, `s_i * max(0, mu - c_i)`, with `xi_i = max(0, c_i - mu)` holding
/// them in place. For nonnegative costs the solved `mu` is nonnegative.
pub fn star_multiplier_solve(p: &[f64], s: &[f64], c: &[f64]) -> MultiplierSolution {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| c[a].total_cmp(&c[b]));
    let mut out = MultiplierSolution::empty();
    star_multiplier_solve_into(p, s, c, &order, &mut out);
    out
}

/// Allocation-free core of [`star_multiplier_solve`] for tight loops.
///
/// `order` must hold every coordinate index sorted by cost rate ascending;
/// it only depends on `c`, so callers integrating a constant-rate segment
/// sort once and reuse it. The balance is a waterfill: coordinates with
/// mass always respond, while an empty one joins only when the candidate
/// `mu` climbs past its cost. Walking candidates down the sorted costs
/// lands on the unique crossing; each engagement lowers the candidate, and
/// the candidate never drops below the last engaged cost, so the first
/// candidate at or below the next unengaged cost is the root.
pub fn star_multiplier_solve_into(
    p: &[f64],
    s: &[f64],
    c: &[f64],
    order: &[usize],
    out: &mut MultiplierSolution,
) {
    let n = p.len();
    assert_eq!(n, s.len());
    assert_eq!(n, c.len());
    assert_eq!(n, order.len());
    debug_assert!(p.iter().any(|&v| v > 0.0));
    let mut slope = 0.0f64;
    let mut level = 0.0f64;
    for i in 0..n {
        if p[i] > 0.0 {
            slope += s[i];
            level += s[i] * c[i];
        }
    }
    let mut mu = level / slope;
    for &i in order {
        if p[i] > 0.0 {
            continue;
        }
        if mu <= c[i] {
            break;
        }
        slope += s[i];
        level += s[i] * c[i];
        mu = level / slope;
    }
    out.mu = mu;
    out.lambda_hat.clear();
    out.xi.clear();
    out.xi.resize(n, 0.0);
    out.drift.clear();
    out.drift.resize(n, 0.0);
    out.active.clear();
    out.active.resize(n, false);
    let mut balance = 0.0f64;
    let mut compl = 0.0f64;
    for i in 0..n {
        let a = p[i] > 0.0;
        out.active[i] = a;
        if !a {
            out.xi[i] = (c[i] - mu).max(0.0);
        }
        let d = s[i] * (mu - c[i] + out.xi[i]);
        out.drift[i] = d;
        balance += d;
        compl = compl.max((p[i] * out.xi[i]).abs());
    }
    out.clamp_events = 0;
    out.residuals = Residuals {
        mass_balance: balance.abs(),
        complementary_slackness: compl,
        sign: (-mu).max(0.0),
        stationarity: 0.0,
    };
}

/// Solves the constrained dynamics on a tree at state `p` under leaf cost
/// rates `c`.
///
/// Upward pass: each leaf contributes its drift response in the parent's
/// pressure; each internal node folds its children's total through its own
/// sensitivity, clamping its multiplier at zero. The root pressure solves
/// total leaf drift = 0. Downward pass recovers every internal multiplier
/// and emits drifts. Indexing of `reg` and the output vectors follows node
/// indices; `xi` and `active` follow leaf positions.
pub fn tree_multiplier_solve(
    tree: &WeightedRootedTree,
    p: &LeafDistribution,
    c: &[f64],
    reg: &EntropicRegularizer,
) -> Result<MultiplierSolution> {
    let n = tree.n_nodes();
    if p.len() != tree.n_leaves() || c.len() != tree.n_leaves() {
        return Err(Error::MassArity { expected: tree.n_leaves(), got: p.len().max(c.len()) });
    }
    if reg.len() != n {
        return Err(Error::BadParams { context: "regularizer must be node-indexed".into() });
    }
    if c.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::BadParams { context: "cost rates must be nonnegative".into() });
    }
    let x = subtree_sums(tree, p.masses());
    let s = reg.sensitivities(&x);

    // Upward: responses in the parent's pressure, children before parents
    // (preorder indices decrease toward the leaves' ancestors).
    let mut response: Vec<Option<PwlMonotone>> = vec![None; n];
    let mut child_sum: Vec<Option<PwlMonotone>> = vec![None; n];
    for ix in (0..n).rev() {
        if tree.is_leaf(ix) {
            let pos = tree.leaf_position(ix).unwrap();
            let (pi, ci, si) = (p.mass(pos), c[pos], s[ix]);
            response[ix] = Some(if pi > 0.0 {
                PwlMonotone::affine(ci, 0.0, si)
            } else {
                PwlMonotone::hinge(ci, si)
            });
        } else {
            let parts: Vec<PwlMonotone> =
                tree.children(ix).iter().map(|&cix| response[cix].clone().unwrap()).collect();
            let g = PwlMonotone::sum(&parts);
            if ix != tree.root() {
                response[ix] = Some(g.parent_transform(s[ix]));
            }
            child_sum[ix] = Some(g);
        }
    }
    let mu = child_sum[tree.root()]
        .as_ref()
        .unwrap()
        .solve_leftmost(0.0)
        .ok_or(Error::Numeric { context: "root pressure not bracketed".into() })?;

    // Downward: pressures, multipliers, drifts.
    let mut lambda_hat = vec![0.0f64; n];
    let mut drift = vec![0.0f64; n];
    let mut xi = vec![0.0f64; tree.n_leaves()];
    let mut active = vec![false; tree.n_leaves()];
    let mut clamp_events = 0usize;
    lambda_hat[tree.root()] = mu;
    for ix in 0..n {
        if ix == tree.root() {
            continue;
        }
        let theta = lambda_hat[tree.parent(ix).unwrap()];
        if tree.is_leaf(ix) {
            let pos = tree.leaf_position(ix).unwrap();
            active[pos] = p.mass(pos) > 0.0;
            if !active[pos] {
                xi[pos] = (c[pos] - theta).max(0.0);
            }
            drift[ix] = s[ix] * (theta - c[pos] + xi[pos]);
        } else {
            let g = child_sum[ix].as_ref().unwrap();
            let mut h = g.clone();
            h.add_linear(s[ix]);
            let nu = h
                .solve_leftmost(s[ix] * theta)
                .ok_or(Error::Numeric { context: "inner pressure not bracketed".into() })?;
            if nu < 0.0 {
                clamp_events += 1;
                lambda_hat[ix] = 0.0;
                drift[ix] = g.eval(0.0);
            } else {
                lambda_hat[ix] = nu;
                drift[ix] = s[ix] * (theta - nu);
            }
        }
    }
    drift[tree.root()] =
        tree.children(tree.root()).iter().map(|&cix| drift[cix]).sum::<f64>();

    // Residuals.
    let mut mass_balance = tree.leaves().iter().map(|&ix| drift[ix]).sum::<f64>().abs();
    for ix in 0..n {
        if !tree.is_leaf(ix) {
            let flow: f64 = tree.children(ix).iter().map(|&cix| drift[cix]).sum();
            mass_balance = mass_balance.max((drift[ix] - flow).abs());
        }
    }
    let complementary_slackness = (0..tree.n_leaves())
        .map(|pos| (p.mass(pos) * xi[pos]).abs())
        .fold(0.0, f64::max);
    let sign = (0..n)
        .filter(|&ix| ix != tree.root())
        .map(|ix| (-lambda_hat[ix]).max(0.0))
        .chain(xi.iter().map(|&v| (-v).max(0.0)))
        .fold(0.0, f64::max);
    let mut stationarity = 0.0f64;
    for ix in 1..n {
        let theta = lambda_hat[tree.parent(ix).unwrap()];
        let (own, cost, leaf_xi) = if tree.is_leaf(ix) {
            let pos = tree.leaf_position(ix).unwrap();
            (0.0, c[pos], xi[pos])
        } else {
            (lambda_hat[ix], 0.0, 0.0)
        };
        let row = reg.weight()[ix] * drift[ix]
            + reg.eta()[ix] * (x[ix] + reg.delta()[ix]) * (cost + own - theta - leaf_xi);
        stationarity = stationarity.max(row.abs());
    }

    Ok(MultiplierSolution {
        mu,
        lambda_hat,
        xi,
        drift,
        active,
        clamp_events,
        residuals: Residuals { mass_balance, complementary_slackness, sign, stationarity },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_cost_star_is_stationary() {
        let p = [0.25, 0.25, 0.5];
        let s = [1.0, 2.0, 3.0];
        let c = [0.0, 0.0, 0.0];
        let sol = star_multiplier_solve(&p, &s, &c);
        assert_eq!(sol.mu, 0.0);
        assert!(sol.drift.iter().all(|&d| d == 0.0));
        assert!(sol.xi.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_point_star_splits_exactly() {
        // Unit weights, eta 1, shifts 1/2, all mass on the costly point:
        // sensitivities (1.5, 0.5), balance at mu = 0.75, drift 0.375 across.
        let p = [1.0, 0.0];
        let s = [1.5, 0.5];
        let c = [1.0, 0.0];
        let sol = star_multiplier_solve(&p, &s, &c);
        assert_eq!(sol.mu, 0.75);
        assert_eq!(sol.drift[0], -0.375);
        assert_eq!(sol.drift[1], 0.375);
        assert_eq!(sol.xi, vec![0.0, 0.0]);
        assert!(sol.residuals.max_abs() < 1e-15);
    }

    #[test]
    fn expensive_empty_coordinate_stays_pinned() {
        let p = [1.0, 0.0, 0.0];
        let s = [1.25, 0.25, 0.25];
        let c = [1.0, 10.0, 0.0];
        let sol = star_multiplier_solve(&p, &s, &c);
        assert!(sol.mu > 0.0 && sol.mu < 1.0);
        assert!(sol.xi[1] > 0.0, "far coordinate must be held by its multiplier");
        assert_eq!(sol.drift[1], 0.0);
        assert!(sol.drift[0] < 0.0 && sol.drift[2] > 0.0);
        assert!(sol.residuals.mass_balance < 1e-12);
    }

    #[test]
    fn depth_one_tree_matches_star() {
        let weights = [2.0, 1.0, 0.5, 1.0];
        let tree = WeightedRootedTree::star(&weights).unwrap();
        let reg = EntropicRegularizer::tree_with(&tree, 1.7, 0.05).unwrap();
        let p = LeafDistribution::from_masses(&tree, vec![0.4, 0.0, 0.6, 0.0]).unwrap();
        let c = [0.3, 2.0, 0.0, 1.1];
        let sol = tree_multiplier_solve(&tree, &p, &c, &reg).unwrap();

        let x: Vec<f64> = p.masses().to_vec();
        let s: Vec<f64> =
            x.iter().zip(&weights).map(|(&xv, &w)| 1.7 * (xv + 0.05) / w).collect();
        let flat = star_multiplier_solve(&x, &s, &c);
        assert!((sol.mu - flat.mu).abs() < 1e-12);
        for pos in 0..4 {
            let ix = tree.leaves()[pos];
            assert!((sol.drift[ix] - flat.drift[pos]).abs() < 1e-12);
            assert!((sol.xi[pos] - flat.xi[pos]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_cost_tree_is_stationary() {
        let t = WeightedRootedTree::build(
            &[(0, 1, 4.0), (0, 2, 4.0), (1, 3, 1.0), (1, 4, 1.0), (2, 5, 1.0), (2, 6, 1.0)],
            0,
        )
        .unwrap();
        let reg = EntropicRegularizer::tree_default(&t).unwrap();
        let p = LeafDistribution::uniform(&t);
        let c = [0.0; 4];
        let sol = tree_multiplier_solve(&t, &p, &c, &reg).unwrap();
        assert!(sol.drift.iter().all(|&d| d.abs() < 1e-15));
        assert!(sol.lambda_hat.iter().all(|&l| l.abs() < 1e-15));
        assert_eq!(sol.clamp_events, 0);
    }

    #[test]
    fn tree_solve_residuals_and_signs_hold_on_random_states() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let t = WeightedRootedTree::build(
            &[
                (0, 1, 4.0),
                (0, 2, 2.0),
                (1, 3, 1.0),
                (1, 4, 1.5),
                (2, 5, 0.5),
                (2, 6, 1.0),
                (2, 7, 1.0),
            ],
            0,
        )
        .unwrap();
        let reg = EntropicRegularizer::tree_default(&t).unwrap();
        for _ in 0..300 {
            let mut masses: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
            // Empty some leaves so the clamp path is exercised.
            for m in masses.iter_mut() {
                if rng.gen_bool(0.3) {
                    *m = 0.0;
                }
            }
            let total: f64 = masses.iter().sum();
            if total <= 0.0 {
                continue;
            }
            for m in masses.iter_mut() {
                *m /= total;
            }
            let p = LeafDistribution::from_masses(&t, masses).unwrap();
            let c: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..5.0)).collect();
            let sol = tree_multiplier_solve(&t, &p, &c, &reg).unwrap();
            assert!(sol.residuals.mass_balance < 1e-10, "{:?}", sol.residuals);
            assert!(sol.residuals.complementary_slackness < 1e-12);
            assert!(sol.residuals.sign == 0.0);
            assert!(sol.residuals.stationarity < 1e-9, "{:?}", sol.residuals);
        }
    }

    #[test]
    fn regularizer_flags_and_constants() {
        let r = EntropicRegularizer::star_uniform(&[1.0, 1.0], 2.0, 1e-12).unwrap();
        assert!(r.delta_floored);
        assert_eq!(r.delta()[0], DELTA_FLOOR);

        let r = EntropicRegularizer::star_per_coordinate(
            &[1.0, 1.0],
            &[1.0, 4.0],
            &[0.25, 0.7],
        )
        .unwrap();
        assert!(r.delta_exceeds_half);
        let expect = (2.0 * (1.0f64 / 0.25).ln() / 1.0).max(2.0 * (1.0f64 / 0.7).ln() / 4.0);
        assert!((r.lipschitz() - expect).abs() < 1e-15);
        let expect_true = ((1.25f64 / 0.25).ln() / 1.0).max((1.7f64 / 0.7).ln() / 4.0);
        assert!((r.true_lipschitz() - expect_true).abs() < 1e-15);

        assert!(EntropicRegularizer::star_uniform(&[1.0], -1.0, 0.1).is_err());
        assert!(EntropicRegularizer::star_uniform(&[1.0], 1.0, 1.5).is_err());
        assert!(EntropicRegularizer::star_default(&[1.0]).is_err());
    }

    #[test]
    fn tree_regularizer_sums_shifts_upward() {
        let t = WeightedRootedTree::build(
            &[(0, 1, 4.0), (0, 2, 4.0), (1, 3, 1.0), (1, 4, 1.0), (2, 5, 1.0), (2, 6, 1.0)],
            0,
        )
        .unwrap();
        let reg = EntropicRegularizer::tree_default(&t).unwrap();
        assert!((reg.delta()[t.root()] - 1.0).abs() < 1e-15);
        let n1 = t.node(1).unwrap();
        assert!((reg.delta()[n1] - 0.5).abs() < 1e-15);
        for &leaf in t.leaves() {
            assert!((reg.delta()[leaf] - 0.25).abs() < 1e-15);
        }
        assert!((reg.eta()[0] - 2.0 * 4.0f64.ln()).abs() < 1e-15);
    }
}
