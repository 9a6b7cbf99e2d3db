//! Weighted rooted trees over a fixed leaf set.
//!
//! Leaves are the points of the task system; internal nodes only carry
//! structure. Node order is a preorder walk with children sorted by id, so
//! the leaves of every subtree occupy a contiguous range of the leaf order.
//! The root edge has weight zero by convention and every other edge weight
//! is strictly positive.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense node index into a [`WeightedRootedTree`]. The root is always 0.
pub type NodeIx = usize;

/// Rooted tree with positive edge weights and a canonical leaf order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedRootedTree {
    ids: Vec<u64>,
    parent: Vec<Option<NodeIx>>,
    weight: Vec<f64>,
    children: Vec<Vec<NodeIx>>,
    depth: Vec<usize>,
    leaf_order: Vec<NodeIx>,
    leaf_pos: Vec<Option<usize>>,
    leaf_range: Vec<(usize, usize)>,
    by_id: HashMap<u64, NodeIx>,
}

/// On-disk tree description: `{"edges": [[parent, child, weight], ...], "root": id}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeFile {
    pub edges: Vec<(u64, u64, f64)>,
    pub root: u64,
}

impl WeightedRootedTree {
    /// Builds and validates a tree from an edge list.
    ///
    /// Rejects duplicate children, non-positive or non-finite weights, a root
    /// that appears as a child, and edges unreachable from the root. Children
    /// are ordered by id, so the construction is canonical regardless of the
    /// edge order in the input.
    pub fn build(edges: &[(u64, u64, f64)], root: u64) -> Result<Self> {
        let mut child_map: HashMap<u64, Vec<(u64, f64)>> = HashMap::new();
        let mut seen_child: HashMap<u64, ()> = HashMap::new();
        for &(p, c, w) in edges {
            if c == root {
                return Err(Error::RootIsChild { root });
            }
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::BadWeight { parent: p, child: c, weight: w });
            }
            if seen_child.insert(c, ()).is_some() {
                return Err(Error::DuplicateChild { child: c });
            }
            child_map.entry(p).or_default().push((c, w));
        }
        for kids in child_map.values_mut() {
            kids.sort_by_key(|&(c, _)| c);
        }

        // Preorder walk from the root assigns dense indices.
        let mut ids = Vec::new();
        let mut parent = Vec::new();
        let mut weight = Vec::new();
        let mut depth = Vec::new();
        let mut order: Vec<(u64, Option<NodeIx>, f64, usize)> = vec![(root, None, 0.0, 0)];
        while let Some((id, par, w, d)) = order.pop() {
            let ix = ids.len();
            ids.push(id);
            parent.push(par);
            weight.push(w);
            depth.push(d);
            if let Some(kids) = child_map.get(&id) {
                // Reverse keeps the stack popping children in id order.
                for &(c, cw) in kids.iter().rev() {
                    order.push((c, Some(ix), cw, d + 1));
                }
            }
        }
        if ids.len() != edges.len() + 1 {
            // Some edge never hooked up to the root component.
            let reached: HashMap<u64, ()> = ids.iter().map(|&i| (i, ())).collect();
            let node = edges
                .iter()
                .flat_map(|&(p, c, _)| [p, c])
                .find(|i| !reached.contains_key(i))
                .unwrap_or(root);
            return Err(Error::Unreachable { node });
        }

        let mut by_id = HashMap::new();
        for (ix, &id) in ids.iter().enumerate() {
            if by_id.insert(id, ix).is_some() {
                return Err(Error::DuplicateChild { child: id });
            }
        }
        let mut children: Vec<Vec<NodeIx>> = vec![Vec::new(); ids.len()];
        for ix in 1..ids.len() {
            children[parent[ix].unwrap()].push(ix);
        }
        // Preorder assignment already visits children by id; keep that order.
        for kids in children.iter_mut() {
            kids.sort();
        }

        let mut leaf_order = Vec::new();
        let mut leaf_pos = vec![None; ids.len()];
        for ix in 0..ids.len() {
            if children[ix].is_empty() {
                leaf_pos[ix] = Some(leaf_order.len());
                leaf_order.push(ix);
            }
        }
        if leaf_order.is_empty() {
            return Err(Error::EmptyTree);
        }

        // Contiguity of subtree leaves follows from preorder; record ranges.
        let mut leaf_range = vec![(0usize, 0usize); ids.len()];
        for ix in (0..ids.len()).rev() {
            if children[ix].is_empty() {
                let p = leaf_pos[ix].unwrap();
                leaf_range[ix] = (p, p + 1);
            } else {
                let lo = children[ix].iter().map(|&c| leaf_range[c].0).min().unwrap();
                let hi = children[ix].iter().map(|&c| leaf_range[c].1).max().unwrap();
                leaf_range[ix] = (lo, hi);
            }
        }

        Ok(Self { ids, parent, weight, children, depth, leaf_order, leaf_pos, leaf_range, by_id })
    }

    /// Builds a star: one root, `weights[i]` on the edge to leaf `i`.
    /// Leaf ids are `1..=n` under root id 0.
    pub fn star(weights: &[f64]) -> Result<Self> {
        let edges: Vec<(u64, u64, f64)> =
            weights.iter().enumerate().map(|(i, &w)| (0, i as u64 + 1, w)).collect();
        Self::build(&edges, 0)
    }

    pub fn from_file(file: &TreeFile) -> Result<Self> {
        Self::build(&file.edges, file.root)
    }

    /// Canonical serialization: edges in preorder, children by id.
    pub fn to_file(&self) -> TreeFile {
        let mut edges = Vec::with_capacity(self.ids.len().saturating_sub(1));
        for ix in 1..self.ids.len() {
            let p = self.parent[ix].unwrap();
            edges.push((self.ids[p], self.ids[ix], self.weight[ix]));
        }
        TreeFile { edges, root: self.ids[0] }
    }

    pub fn n_nodes(&self) -> usize {
        self.ids.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_order.len()
    }

    pub fn root(&self) -> NodeIx {
        0
    }

    pub fn id(&self, ix: NodeIx) -> u64 {
        self.ids[ix]
    }

    pub fn node(&self, id: u64) -> Result<NodeIx> {
        self.by_id.get(&id).copied().ok_or(Error::UnknownNode { id })
    }

    pub fn parent(&self, ix: NodeIx) -> Option<NodeIx> {
        self.parent[ix]
    }

    /// Weight of the edge above `ix`; zero for the root.
    pub fn weight(&self, ix: NodeIx) -> f64 {
        self.weight[ix]
    }

    pub fn children(&self, ix: NodeIx) -> &[NodeIx] {
        &self.children[ix]
    }

    pub fn is_leaf(&self, ix: NodeIx) -> bool {
        self.children[ix].is_empty()
    }

    pub fn node_depth(&self, ix: NodeIx) -> usize {
        self.depth[ix]
    }

    /// Leaves in canonical order.
    pub fn leaves(&self) -> &[NodeIx] {
        &self.leaf_order
    }

    /// Position of a leaf node in the canonical leaf order.
    pub fn leaf_position(&self, ix: NodeIx) -> Option<usize> {
        self.leaf_pos[ix]
    }

    /// Leaf position for an external id.
    pub fn leaf_position_of_id(&self, id: u64) -> Result<usize> {
        let ix = self.node(id)?;
        self.leaf_pos[ix].ok_or(Error::NotALeaf { id })
    }

    /// Half-open range of leaf positions below `ix`.
    pub fn leaf_span(&self, ix: NodeIx) -> (usize, usize) {
        self.leaf_range[ix]
    }

    /// Maximum number of edges from the root to any leaf.
    pub fn depth(&self) -> usize {
        self.leaf_order.iter().map(|&l| self.depth[l]).max().unwrap_or(0)
    }

    /// Common leaf depth, if all leaves sit at the same depth.
    pub fn uniform_depth(&self) -> Option<usize> {
        let d = self.depth[self.leaf_order[0]];
        if self.leaf_order.iter().all(|&l| self.depth[l] == d) {
            Some(d)
        } else {
            None
        }
    }

    /// Path distance between two leaves, by leaf position.
    pub fn leaf_distance(&self, a: usize, b: usize) -> f64 {
        let (mut u, mut v) = (self.leaf_order[a], self.leaf_order[b]);
        let mut dist = 0.0;
        while self.depth[u] > self.depth[v] {
            dist += self.weight[u];
            u = self.parent[u].unwrap();
        }
        while self.depth[v] > self.depth[u] {
            dist += self.weight[v];
            v = self.parent[v].unwrap();
        }
        while u != v {
            dist += self.weight[u] + self.weight[v];
            u = self.parent[u].unwrap();
            v = self.parent[v].unwrap();
        }
        dist
    }

    /// Path distance between two leaves by external id.
    pub fn leaf_distance_by_id(&self, a: u64, b: u64) -> Result<f64> {
        Ok(self.leaf_distance(self.leaf_position_of_id(a)?, self.leaf_position_of_id(b)?))
    }

    /// Full pairwise leaf distance matrix.
    pub fn metric_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.n_leaves();
        let mut m = vec![vec![0.0; n]; n];
        for a in 0..n {
            for b in (a + 1)..n {
                let d = self.leaf_distance(a, b);
                m[a][b] = d;
                m[b][a] = d;
            }
        }
        m
    }

    /// Maximum pairwise leaf distance.
    pub fn diameter(&self) -> f64 {
        self.subtree_diameters()[0]
    }

    /// For every node, the maximum distance between two leaves of its subtree.
    pub fn subtree_diameters(&self) -> Vec<f64> {
        let n = self.ids.len();
        let mut height = vec![0.0f64; n];
        let mut diam = vec![0.0f64; n];
        for ix in (0..n).rev() {
            if self.children[ix].is_empty() {
                continue;
            }
            let mut best1 = f64::NEG_INFINITY;
            let mut best2 = f64::NEG_INFINITY;
            let mut dmax: f64 = 0.0;
            for &c in &self.children[ix] {
                let reach = self.weight[c] + height[c];
                if reach > best1 {
                    best2 = best1;
                    best1 = reach;
                } else if reach > best2 {
                    best2 = reach;
                }
                dmax = dmax.max(diam[c]);
            }
            height[ix] = best1;
            if best2 > f64::NEG_INFINITY {
                dmax = dmax.max(best1 + best2);
            }
            diam[ix] = dmax;
        }
        diam
    }

    /// Distance from each node down to its deepest leaf.
    pub fn subtree_heights(&self) -> Vec<f64> {
        let n = self.ids.len();
        let mut height = vec![0.0f64; n];
        for ix in (0..n).rev() {
            for &c in &self.children[ix] {
                height[ix] = height[ix].max(self.weight[c] + height[c]);
            }
        }
        height
    }

    fn max_id(&self) -> u64 {
        self.ids.iter().copied().max().unwrap_or(0)
    }

    /// Equalizes leaf depths by subdividing each shallow leaf edge into a
    /// geometric chain (each inserted piece one eighth of the one above it).
    /// Subdivision preserves every leaf distance exactly; the inserted nodes
    /// carry no cost.
    pub fn pad_to_uniform_depth(&self) -> Result<Self> {
        let target = self.depth();
        let mut edges = Vec::new();
        let mut next_id = self.max_id() + 1;
        for ix in 1..self.ids.len() {
            let pid = self.ids[self.parent[ix].unwrap()];
            let cid = self.ids[ix];
            let w = self.weight[ix];
            let short = if self.is_leaf(ix) { target - self.depth[ix] } else { 0 };
            if short == 0 {
                edges.push((pid, cid, w));
                continue;
            }
            // Split w into short+1 pieces a, a/8, ..., a/8^short.
            let mut geom = 0.0;
            for j in 0..=short {
                geom += 0.125f64.powi(j as i32);
            }
            let a = w / geom;
            let mut above = pid;
            let mut piece = a;
            for j in 0..short {
                let mid = next_id;
                next_id += 1;
                edges.push((above, mid, piece));
                above = mid;
                piece /= 8.0;
                let _ = j;
            }
            edges.push((above, cid, piece));
        }
        Self::build(&edges, self.ids[0])
    }
}
