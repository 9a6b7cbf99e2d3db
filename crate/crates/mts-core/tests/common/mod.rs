//! Oracles shared between test targets: a dense active-set enumeration for
//! the constrained solves and a brute-force path search for the offline DP.
#![allow(dead_code)]

use mts_core::{subtree_sums, EntropicRegularizer, MetricSpace, WeightedRootedTree};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut v = b[row];
        for k in row + 1..n {
            v -= a[row][k] * x[k];
        }
        x[row] = v / a[row][row];
    }
    Some(x)
}

pub struct DenseSolution {
    pub mu: f64,
    pub lambda_hat: Vec<f64>,
    pub xi: Vec<f64>,
    pub drift: Vec<f64>,
}

/// Margin for accepting an assignment as feasible; tight enough that a
/// wrongly accepted near-boundary branch still matches to 1e-9.
pub const FEAS: f64 = 1e-11;

/// Enumerates every active-set assignment (held vs growing for each empty
/// leaf, clamped vs priced for each internal node), solves the resulting
/// linear system directly, and returns the feasible one.
pub fn dense_kkt(
    tree: &WeightedRootedTree,
    p: &[f64],
    c: &[f64],
    reg: &EntropicRegularizer,
) -> Option<DenseSolution> {
    let n = tree.n_nodes();
    let x = subtree_sums(tree, p);
    let s: Vec<f64> = (0..n)
        .map(|ix| {
            if ix == tree.root() {
                0.0
            } else {
                reg.eta()[ix] / reg.weight()[ix] * (x[ix] + reg.delta()[ix])
            }
        })
        .collect();
    let internals: Vec<usize> = (0..n).filter(|&ix| !tree.is_leaf(ix)).collect();
    let inner: Vec<usize> = internals.iter().copied().filter(|&ix| ix != tree.root()).collect();
    let empty_leaves: Vec<usize> = tree
        .leaves()
        .iter()
        .enumerate()
        .filter(|&(pos, _)| p[pos] == 0.0)
        .map(|(_, &ix)| ix)
        .collect();

    let combos = 1usize << (inner.len() + empty_leaves.len());
    'assignment: for combo in 0..combos {
        let clamped = |ix: usize| -> bool {
            inner.iter().position(|&v| v == ix).map_or(false, |k| combo >> k & 1 == 1)
        };
        let held = |ix: usize| -> bool {
            empty_leaves
                .iter()
                .position(|&v| v == ix)
                .map_or(false, |k| combo >> (inner.len() + k) & 1 == 1)
        };

        // Unknowns: one pressure per unclamped internal node (clamped ones
        // sit at zero), then one drift per non-root node.
        let press_vars: Vec<usize> = internals.iter().copied().filter(|&ix| !clamped(ix)).collect();
        let press_slot = |ix: usize| press_vars.iter().position(|&v| v == ix);
        let n_press = press_vars.len();
        let drift_slot = |ix: usize| n_press + ix - 1;
        let dim = n_press + n - 1;
        let mut a = vec![vec![0.0f64; dim]; dim];
        let mut b = vec![0.0f64; dim];
        let mut row = 0;

        for ix in 0..n {
            if ix == tree.root() {
                continue;
            }
            let parent = tree.parent(ix).unwrap();
            if tree.is_leaf(ix) {
                let pos = tree.leaf_position(ix).unwrap();
                a[row][drift_slot(ix)] = 1.0;
                if !(p[pos] == 0.0 && held(ix)) {
                    // drift = s * (pi_parent - c)
                    if let Some(k) = press_slot(parent) {
                        a[row][k] = -s[ix];
                    }
                    b[row] = -s[ix] * c[pos];
                }
                row += 1;
            } else if !clamped(ix) {
                // drift = s * (pi_parent - pi_self)
                a[row][drift_slot(ix)] = 1.0;
                if let Some(k) = press_slot(parent) {
                    a[row][k] = -s[ix];
                }
                a[row][press_slot(ix).unwrap()] = s[ix];
                row += 1;
            }
        }
        for &ix in &internals {
            for &child in tree.children(ix) {
                a[row][drift_slot(child)] = 1.0;
            }
            if ix != tree.root() {
                a[row][drift_slot(ix)] = -1.0;
            }
            row += 1;
        }
        assert_eq!(row, dim, "system must be square");

        let Some(z) = gauss_solve(a, b) else { continue };
        let press_of = |ix: usize| press_slot(ix).map_or(0.0, |k| z[k]);
        let drift_of = |ix: usize| if ix == tree.root() { 0.0 } else { z[drift_slot(ix)] };

        // Feasibility of this assignment.
        for &ix in &empty_leaves {
            let pos = tree.leaf_position(ix).unwrap();
            let theta = press_of(tree.parent(ix).unwrap());
            let ok = if held(ix) { c[pos] - theta >= -FEAS } else { theta - c[pos] >= -FEAS };
            if !ok {
                continue 'assignment;
            }
        }
        for &ix in &inner {
            let theta = press_of(tree.parent(ix).unwrap());
            let ok = if clamped(ix) {
                drift_of(ix) - s[ix] * theta >= -FEAS * (1.0 + s[ix])
            } else {
                press_of(ix) >= -FEAS
            };
            if !ok {
                continue 'assignment;
            }
        }

        let mut lambda_hat = vec![0.0; n];
        for &ix in &internals {
            lambda_hat[ix] = press_of(ix);
        }
        let mut xi = vec![0.0; tree.n_leaves()];
        for &ix in &empty_leaves {
            let pos = tree.leaf_position(ix).unwrap();
            xi[pos] = (c[pos] - press_of(tree.parent(ix).unwrap())).max(0.0);
        }
        let mut drift = vec![0.0; n];
        for ix in 0..n {
            drift[ix] = drift_of(ix);
        }
        drift[tree.root()] =
            tree.children(tree.root()).iter().map(|&cix| drift[cix]).sum::<f64>();
        return Some(DenseSolution { mu: press_of(tree.root()), lambda_hat, xi, drift });
    }
    None
}

/// Small random tree with occasional unary pass-through nodes, for solver
/// comparisons.
pub fn random_kkt_tree(rng: &mut ChaCha8Rng) -> WeightedRootedTree {
    let n_leaves = rng.gen_range(2..=8usize);
    let mut edges: Vec<(u64, u64, f64)> = Vec::new();
    let mut next_id = 1u64;
    let mut stack: Vec<(u64, usize)> = vec![(0, n_leaves)];
    while let Some((pid, k)) = stack.pop() {
        if k == 1 {
            if rng.gen_bool(0.2) {
                let mid = next_id;
                next_id += 1;
                edges.push((pid, mid, rng.gen_range(0.5..4.0)));
                stack.push((mid, 1));
            } else {
                edges.push((pid, next_id, rng.gen_range(0.5..4.0)));
                next_id += 1;
            }
            continue;
        }
        let parts = rng.gen_range(2..=k.min(3));
        let mut remaining = k;
        for slot in 0..parts {
            let take = if slot == parts - 1 {
                remaining
            } else {
                rng.gen_range(1..=remaining - (parts - 1 - slot))
            };
            remaining -= take;
            if take == 1 {
                edges.push((pid, next_id, rng.gen_range(0.5..4.0)));
                next_id += 1;
            } else {
                let mid = next_id;
                next_id += 1;
                edges.push((pid, mid, rng.gen_range(0.5..4.0)));
                stack.push((mid, take));
            }
        }
    }
    WeightedRootedTree::build(&edges, 0).unwrap()
}

/// Random simplex point with a healthy share of exact zeros.
pub fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let mut p: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.05..1.0) })
            .collect();
        let sum: f64 = p.iter().sum();
        if sum > 0.0 {
            for v in p.iter_mut() {
                *v /= sum;
            }
            return p;
        }
    }
}

/// Minimum over every path of initial move + per-round service + moves.
pub fn exhaustive_opt(metric: &MetricSpace, costs: &[Vec<f64>], start: Option<usize>) -> f64 {
    let n = metric.n_points();
    let rounds = costs.len();
    if rounds == 0 {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for code in 0..n.pow(rounds as u32) {
        let mut rest = code;
        let mut prev = start;
        let mut acc = 0.0;
        for row in costs {
            let pos = rest % n;
            rest /= n;
            if let Some(p) = prev {
                acc += metric.dist(p, pos);
            }
            acc += row[pos];
            prev = Some(pos);
        }
        best = best.min(acc);
    }
    best
}
