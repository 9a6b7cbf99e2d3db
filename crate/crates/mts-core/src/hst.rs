//! Hierarchical separation checks and power-of-eight requantization.
//!
//! An edge of weight `w` is separated at factor `tau` when the subtree
//! hanging below it has leaf diameter at most `w / tau`. A tree separated at
//! every edge is the hierarchy the combiner runs on; the requantizer rounds
//! such a tree onto power-of-eight weights so the separation factor is at
//! least eight while no leaf distance shrinks or grows more than eightfold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::WeightedRootedTree;

/// Outcome of a separation check at a given factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HstReport {
    pub tau: f64,
    pub pass: bool,
    /// Largest diameter-to-weight ratio over non-root edges (0 when all
    /// subtrees are single leaves).
    pub max_ratio: f64,
    /// Node id achieving `max_ratio`, when any subtree has two leaves.
    pub worst_node: Option<u64>,
    pub worst_diameter: f64,
    pub worst_weight: f64,
}

/// Checks `diam(subtree(u)) <= weight(u) / tau` for every non-root node.
pub fn validate_hst(tree: &WeightedRootedTree, tau: f64) -> HstReport {
    let diam = tree.subtree_diameters();
    let mut max_ratio = 0.0f64;
    let mut worst = None;
    for ix in 1..tree.n_nodes() {
        let ratio = diam[ix] / tree.weight(ix);
        if ratio > max_ratio {
            max_ratio = ratio;
            worst = Some(ix);
        }
    }
    HstReport {
        tau,
        pass: max_ratio * tau <= 1.0 + 1e-12,
        max_ratio,
        worst_node: worst.map(|ix| tree.id(ix)),
        worst_diameter: worst.map(|ix| diam[ix]).unwrap_or(0.0),
        worst_weight: worst.map(|ix| tree.weight(ix)).unwrap_or(0.0),
    }
}

/// Exact power of eight, valid for exponents within the f64 range.
fn pow8(k: i32) -> f64 {
    (2.0f64).powi(3 * k)
}

/// Smallest `k` with `8^k >= w`, snapping near-exact powers.
fn ceil_log8(w: f64) -> i32 {
    debug_assert!(w > 0.0 && w.is_finite());
    let l = w.log2() / 3.0;
    let mut k = l.ceil();
    if (l - l.round()).abs() < 1e-9 {
        k = l.round();
    }
    let mut k = k as i32;
    while pow8(k) < w {
        k += 1;
    }
    while k > i32::MIN + 1 && pow8(k - 1) >= w {
        k -= 1;
    }
    k
}

/// Drops single-child internal nodes, merging their edges. Leaf distances
/// are preserved exactly.
fn contract_unary(tree: &WeightedRootedTree) -> Result<WeightedRootedTree> {
    let mut edges = Vec::new();
    // Stack of (node, id to attach to, accumulated weight above node).
    let mut stack = vec![(tree.root(), tree.id(tree.root()), 0.0f64)];
    while let Some((ix, attach, carried)) = stack.pop() {
        for &c in tree.children(ix) {
            let mut node = c;
            let mut w = carried + tree.weight(c);
            while tree.children(node).len() == 1 {
                let only = tree.children(node)[0];
                w += tree.weight(only);
                node = only;
            }
            edges.push((attach, tree.id(node), w));
            stack.push((node, tree.id(node), 0.0));
        }
    }
    WeightedRootedTree::build(&edges, tree.id(tree.root()))
}

/// Exhaustive distortion limit for the post-check.
const DISTORTION_CHECK_MAX_LEAVES: usize = 64;

/// Rounds a separated tree onto power-of-eight weights.
///
/// The input must be separated at some factor above one. Unary chains are
/// contracted first; then every edge weight is rounded up to a power of
/// eight and raised further, bottom up, until each subtree diameter fits an
/// eighth of the edge above it. The output separation at factor eight holds
/// by construction; for trees up to 64 leaves every pairwise distance ratio
/// is checked to lie in `[1, 8]` and a violation is reported as an error
/// rather than returned silently.
///
/// Returns the requantized tree and the measured maximum distance ratio
/// (the construction bound 8.0 when the tree is too large to check).
pub fn quantize_to_8hst(tree: &WeightedRootedTree) -> Result<(WeightedRootedTree, f64)> {
    let sep = validate_hst(tree, 1.0);
    if sep.max_ratio >= 1.0 {
        return Err(Error::NotHst {
            node: sep.worst_node.unwrap_or(tree.id(tree.root())),
            diameter: sep.worst_diameter,
            weight: sep.worst_weight,
        });
    }
    let base = contract_unary(tree)?;

    // Bottom-up: new weight of each edge is a power of eight, at least the
    // old weight and at least eight times the new subtree diameter below it.
    let n = base.n_nodes();
    let mut new_w = vec![0.0f64; n];
    let mut height = vec![0.0f64; n];
    let mut diam = vec![0.0f64; n];
    for ix in (0..n).rev() {
        if !base.children(ix).is_empty() {
            let mut best1 = f64::NEG_INFINITY;
            let mut best2 = f64::NEG_INFINITY;
            let mut d: f64 = 0.0;
            for &c in base.children(ix) {
                let reach = new_w[c] + height[c];
                if reach > best1 {
                    best2 = best1;
                    best1 = reach;
                } else if reach > best2 {
                    best2 = reach;
                }
                d = d.max(diam[c]);
            }
            height[ix] = best1;
            if best2 > f64::NEG_INFINITY {
                d = d.max(best1 + best2);
            }
            diam[ix] = d;
        }
        if ix != base.root() {
            let mut k = ceil_log8(base.weight(ix));
            if diam[ix] > 0.0 {
                k = k.max(ceil_log8(8.0 * diam[ix]));
            }
            new_w[ix] = pow8(k);
        }
    }

    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    for ix in 1..n {
        edges.push((base.id(base.parent(ix).unwrap()), base.id(ix), new_w[ix]));
    }
    let out = WeightedRootedTree::build(&edges, base.id(base.root()))?;

    debug_assert!(validate_hst(&out, 8.0).pass);
    if tree.n_leaves() > DISTORTION_CHECK_MAX_LEAVES {
        return Ok((out, 8.0));
    }
    let mut max_ratio = 1.0f64;
    for a in 0..tree.n_leaves() {
        let ida = tree.id(tree.leaves()[a]);
        for b in (a + 1)..tree.n_leaves() {
            let idb = tree.id(tree.leaves()[b]);
            let before = tree.leaf_distance(a, b);
            let after = out.leaf_distance_by_id(ida, idb)?;
            let ratio = after / before;
            if !(1.0 - 1e-9..=8.0 + 1e-9).contains(&ratio) {
                return Err(Error::QuantizeDistortion { a: ida, b: idb, ratio });
            }
            max_ratio = max_ratio.max(ratio);
        }
    }
    Ok((out, max_ratio))
}
