//! Probability mass on the leaves of a weighted rooted tree.
//!
//! Only leaf masses are stored. The mass of an internal node is defined as
//! the sum over its subtree's leaves, so the hierarchy constraints hold by
//! construction and transport distance reduces to a weighted sum of
//! per-edge subtree imbalances.

use crate::error::{Error, Result};
use crate::tree::WeightedRootedTree;

/// Read floor: values above this (tiny negative) are clamped to zero.
pub const MASS_FLOOR: f64 = -1e-12;
/// Tolerance on the total mass.
pub const MASS_SUM_TOL: f64 = 1e-9;

/// Distribution over the leaves, aligned with the tree's canonical leaf order.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafDistribution {
    masses: Vec<f64>,
}

impl LeafDistribution {
    /// Point mass at a leaf position.
    pub fn point(tree: &WeightedRootedTree, leaf: usize) -> Self {
        let mut masses = vec![0.0; tree.n_leaves()];
        masses[leaf] = 1.0;
        Self { masses }
    }

    pub fn uniform(tree: &WeightedRootedTree) -> Self {
        let n = tree.n_leaves();
        Self { masses: vec![1.0 / n as f64; n] }
    }

    /// Validates arity, the negative floor, and the total mass.
    pub fn from_masses(tree: &WeightedRootedTree, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != tree.n_leaves() {
            return Err(Error::MassArity { expected: tree.n_leaves(), got: masses.len() });
        }
        let mut clamped = masses;
        for (pos, m) in clamped.iter_mut().enumerate() {
            if *m < MASS_FLOOR {
                return Err(Error::NegativeMass {
                    leaf: tree.id(tree.leaves()[pos]),
                    value: *m,
                });
            }
            if *m < 0.0 {
                *m = 0.0;
            }
        }
        let sum: f64 = clamped.iter().sum();
        if (sum - 1.0).abs() > MASS_SUM_TOL {
            return Err(Error::MassSum { sum });
        }
        Ok(Self { masses: clamped })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, leaf: usize) -> f64 {
        self.masses[leaf]
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub(crate) fn masses_mut(&mut self) -> &mut [f64] {
        &mut self.masses
    }

    /// Wraps already-normalized masses; composition-internal shortcut.
    pub(crate) fn from_raw(masses: Vec<f64>) -> Self {
        Self { masses }
    }

    /// Mass of every node: leaf masses summed over each subtree's leaf span.
    pub fn node_masses(&self, tree: &WeightedRootedTree) -> Vec<f64> {
        subtree_sums(tree, &self.masses)
    }
}

/// Sums an arbitrary per-leaf vector over every node's leaf span.
pub fn subtree_sums(tree: &WeightedRootedTree, per_leaf: &[f64]) -> Vec<f64> {
    debug_assert_eq!(per_leaf.len(), tree.n_leaves());
    let mut prefix = vec![0.0; per_leaf.len() + 1];
    for (i, &v) in per_leaf.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..tree.n_nodes())
        .map(|ix| {
            let (lo, hi) = tree.leaf_span(ix);
            prefix[hi] - prefix[lo]
        })
        .collect()
}

/// Transport distance between two leaf distributions: every edge carries the
/// absolute subtree mass imbalance across it, weighted by the edge.
pub fn w1_distance(tree: &WeightedRootedTree, p: &LeafDistribution, q: &LeafDistribution) -> f64 {
    let xp = p.node_masses(tree);
    let xq = q.node_masses(tree);
    let mut total = 0.0;
    for ix in 1..tree.n_nodes() {
        total += tree.weight(ix) * (xp[ix] - xq[ix]).abs();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level() -> WeightedRootedTree {
        // 0 -> 1 (2.0) -> {3 (0.5), 4 (0.5)}; 0 -> 2 (1.5)
        WeightedRootedTree::build(
            &[(0, 1, 2.0), (1, 3, 0.5), (1, 4, 0.5), (0, 2, 1.5)],
            0,
        )
        .unwrap()
    }

    #[test]
    fn point_masses_transport_along_the_path() {
        let t = two_level();
        let a = t.leaf_position_of_id(3).unwrap();
        let b = t.leaf_position_of_id(2).unwrap();
        let pa = LeafDistribution::point(&t, a);
        let pb = LeafDistribution::point(&t, b);
        let d = w1_distance(&t, &pa, &pb);
        assert!((d - t.leaf_distance(a, b)).abs() < 1e-15);
        assert_eq!(w1_distance(&t, &pa, &pa), 0.0);
    }

    #[test]
    fn split_mass_matches_hand_transport_value() {
        let t = two_level();
        let a = t.leaf_position_of_id(3).unwrap();
        let b = t.leaf_position_of_id(4).unwrap();
        let c = t.leaf_position_of_id(2).unwrap();
        let mut even = vec![0.0; 3];
        even[a] = 0.5;
        even[b] = 0.5;
        let even = LeafDistribution::from_masses(&t, even).unwrap();
        let pc = LeafDistribution::point(&t, c);
        // Hand value: between {3,4} split and point 2, both subtree masses of
        // 3 and 4 move 0.5 each across 0.5-edges, the 1.0 across the 2.0 edge
        // and the 1.5 edge: 0.5*0.5 + 0.5*0.5 + 2.0 + 1.5 = 4.0.
        assert!((w1_distance(&t, &even, &pc) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_masses() {
        let t = two_level();
        assert!(matches!(
            LeafDistribution::from_masses(&t, vec![0.5, 0.5]),
            Err(Error::MassArity { expected: 3, got: 2 })
        ));
        assert!(matches!(
            LeafDistribution::from_masses(&t, vec![0.7, 0.4, -0.1]),
            Err(Error::NegativeMass { .. })
        ));
        assert!(matches!(
            LeafDistribution::from_masses(&t, vec![0.5, 0.4, 0.2]),
            Err(Error::MassSum { .. })
        ));
        // A tiny negative above the floor clamps to zero.
        let d = LeafDistribution::from_masses(&t, vec![0.6, 0.4, -1e-13]).unwrap();
        assert_eq!(d.mass(2), 0.0);
    }

    #[test]
    fn node_masses_are_subtree_sums() {
        let t = two_level();
        let d = LeafDistribution::from_masses(&t, vec![0.25, 0.35, 0.4]).unwrap();
        let x = d.node_masses(&t);
        assert!((x[t.root()] - 1.0).abs() < 1e-15);
        let n1 = t.node(1).unwrap();
        assert!((x[n1] - 0.6).abs() < 1e-15);
    }
}
