//! Binary-tree mechanism storage.
//!
//! Leaves hold per-step query increments, model snapshots and data indices;
//! every node accumulates the exact sum `u` over its leaf interval. Noisy
//! nodes (left children and the root) additionally carry a noisy response
//! `r = u + ξ`, drawn once when the node's interval becomes complete. A
//! prefix sum over `[1..t]` adds the noisy responses of the dyadic blocks of
//! `t`, which are always noisy nodes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::{sample_gaussian, NoiseScale};
use crate::linalg::{self, check_dim, VecD};
use crate::{Error, Result};

/// Root-to-node path; bit `i` (from the most significant end) is the turn at
/// depth `i + 1`, `0` meaning left. The empty path is the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    depth: u32,
    path: u64,
}

impl NodeId {
    pub const ROOT: NodeId = NodeId { depth: 0, path: 0 };

    pub fn new(depth: u32, path: u64) -> Result<Self> {
        if depth >= 64 || (depth > 0 && path >> depth != 0) || (depth == 0 && path != 0) {
            return Err(Error::InvalidNode(format!("depth={depth} path={path}")));
        }
        Ok(Self { depth, path })
    }

    pub fn depth(self) -> u32 {
        self.depth
    }

    pub fn path(self) -> u64 {
        self.path
    }

    pub fn is_root(self) -> bool {
        self.depth == 0
    }

    pub fn is_left_child(self) -> bool {
        self.depth > 0 && self.path & 1 == 0
    }

    pub fn parent(self) -> Option<NodeId> {
        (self.depth > 0).then(|| NodeId { depth: self.depth - 1, path: self.path >> 1 })
    }

    /// Left children and the root carry noisy responses.
    pub fn is_noisy(self) -> bool {
        self.is_root() || self.is_left_child()
    }

    /// The same node seen from a tree one level taller (old root becomes the
    /// left child of the new root).
    fn deepened(self) -> NodeId {
        NodeId { depth: self.depth + 1, path: self.path }
    }

    fn heap_index(self) -> usize {
        (1usize << self.depth) | self.path as usize
    }

    fn from_heap_index(i: usize) -> NodeId {
        let depth = usize::BITS - 1 - i.leading_zeros();
        NodeId { depth, path: (i ^ (1 << depth)) as u64 }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.depth == 0 {
            return Ok(());
        }
        write!(f, "{:0width$b}", self.path, width = self.depth as usize)
    }
}

impl FromStr for NodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() >= 64 || !s.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(Error::InvalidNode(s.to_string()));
        }
        let path = if s.is_empty() { 0 } else { u64::from_str_radix(s, 2).map_err(|_| Error::InvalidNode(s.into()))? };
        NodeId::new(s.len() as u32, path)
    }
}

/// Leaf identifier for step `t` (1-based) in a tree of `capacity` leaves:
/// `t − 1` written in `log₂(capacity)` bits.
pub fn leaf(t: usize, capacity: usize) -> Result<NodeId> {
    if !capacity.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("capacity {capacity} is not a power of two")));
    }
    if t == 0 || t > capacity {
        return Err(Error::OutOfRange { index: t, max: capacity });
    }
    NodeId::new(capacity.trailing_zeros(), (t - 1) as u64)
}

/// Greedy decomposition of `[1..t]` into aligned power-of-two blocks,
/// largest first.
pub fn dyadic_decompose(t: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(t.count_ones() as usize);
    let mut start = 0usize;
    for level in (0..usize::BITS).rev() {
        let size = 1usize << level;
        if t & size != 0 {
            out.push((start + 1, start + size));
            start += size;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TreeNode {
    /// Exact accumulated query value over the node's leaf interval.
    pub u: VecD,
    /// Noisy response; present only on noisy nodes with complete intervals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<VecD>,
    /// Model snapshot (leaves only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<VecD>,
    /// Data index (leaves only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<usize>,
}

impl TreeNode {
    fn empty(dim: usize) -> Self {
        TreeNode { u: linalg::zeros(dim), r: None, w: None, z: None }
    }
}

/// Noise standard deviation as a function of node level (leaves are level 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum NoiseSchedule {
    /// Same σ at every node.
    Constant { sigma: NoiseScale },
    /// `σ_ℓ = leaf_sigma · 2^ℓ`, the anytime budget split.
    Geometric { leaf_sigma: NoiseScale },
}

impl NoiseSchedule {
    pub fn constant(sigma: NoiseScale) -> Self {
        NoiseSchedule::Constant { sigma }
    }

    pub fn sigma_at(&self, level: u32) -> NoiseScale {
        match *self {
            NoiseSchedule::Constant { sigma } => sigma,
            NoiseSchedule::Geometric { leaf_sigma } => {
                NoiseScale::new(leaf_sigma.value() * 2f64.powi(level as i32)).expect("finite sigma")
            }
        }
    }
}

/// Complete binary tree over `capacity` leaves, filled left to right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeSnapshot", into = "TreeSnapshot")]
pub struct PrefixTree {
    capacity: usize,
    filled: usize,
    dim: usize,
    schedule: NoiseSchedule,
    // heap order, index 0 unused
    nodes: Vec<TreeNode>,
}

impl PrefixTree {
    pub fn new(capacity: usize, dim: usize, schedule: NoiseSchedule) -> Result<Self> {
        if capacity == 0 || !capacity.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("capacity {capacity} is not a power of two")));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        Ok(PrefixTree {
            capacity,
            filled: 0,
            dim,
            schedule,
            nodes: vec![TreeNode::empty(dim); 2 * capacity],
        })
    }

    /// Tree large enough for `n` steps; `n` is padded up to a power of two.
    pub fn for_len(n: usize, dim: usize, schedule: NoiseSchedule) -> Result<Self> {
        Self::new(n.max(1).next_power_of_two(), dim, schedule)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn filled(&self) -> usize {
        self.filled
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn height(&self) -> u32 {
        self.capacity.trailing_zeros()
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn leaf(&self, t: usize) -> Result<NodeId> {
        leaf(t, self.capacity)
    }

    /// Height of `b` above the leaves.
    pub fn level(&self, b: NodeId) -> u32 {
        self.height() - b.depth
    }

    pub fn sigma_at(&self, b: NodeId) -> NoiseScale {
        self.schedule.sigma_at(self.level(b))
    }

    /// 1-based inclusive leaf interval covered by `b`.
    pub fn interval(&self, b: NodeId) -> (usize, usize) {
        let level = self.level(b);
        let start = (b.path as usize) << level;
        (start + 1, start + (1usize << level))
    }

    pub fn is_leaf(&self, b: NodeId) -> bool {
        b.depth == self.height()
    }

    fn check(&self, b: NodeId) -> Result<()> {
        if b.depth > self.height() {
            Err(Error::InvalidNode(b.to_string()))
        } else {
            Ok(())
        }
    }

    pub fn get(&self, b: NodeId) -> Result<&TreeNode> {
        self.check(b)?;
        Ok(&self.nodes[b.heap_index()])
    }

    /// Overwrites the contents of `b`. Never draws noise.
    pub fn set(&mut self, b: NodeId, node: TreeNode) -> Result<()> {
        self.check(b)?;
        check_dim(self.dim, node.u.len())?;
        if let Some(r) = &node.r {
            check_dim(self.dim, r.len())?;
        }
        self.nodes[b.heap_index()] = node;
        Ok(())
    }

    pub(crate) fn node_mut(&mut self, b: NodeId) -> Result<&mut TreeNode> {
        self.check(b)?;
        Ok(&mut self.nodes[b.heap_index()])
    }

    /// Nodes from `b` up to and including the root.
    pub fn path_to_root(&self, b: NodeId) -> impl Iterator<Item = NodeId> {
        std::iter::successors(Some(b), |x| x.parent())
    }

    /// Appends the next leaf with increment `u`, accumulates it into every
    /// ancestor and draws noise at each noisy node whose interval completes.
    pub fn append<R: Rng + ?Sized>(&mut self, u: &[f64], rng: &mut R) -> Result<NodeId> {
        check_dim(self.dim, u.len())?;
        if self.filled == self.capacity {
            return Err(Error::TreeFull(self.capacity));
        }
        let t = self.filled + 1;
        let leaf = self.leaf(t)?;
        self.nodes[leaf.heap_index()] = TreeNode::empty(self.dim);
        let path: Vec<NodeId> = self.path_to_root(leaf).collect();
        for b in path {
            let level = self.level(b);
            let sigma = self.schedule.sigma_at(level);
            let node = &mut self.nodes[b.heap_index()];
            linalg::add_assign(&mut node.u, u);
            if b.is_noisy() && t.is_multiple_of(1usize << level) {
                node.r = Some(sample_gaussian(&node.u, sigma, rng));
            }
        }
        self.filled = t;
        Ok(leaf)
    }

    /// Noisy nodes answering the prefix query `[1..t]`.
    pub fn prefix_nodes(&self, t: usize) -> Result<Vec<NodeId>> {
        if t == 0 || t > self.filled {
            return Err(Error::OutOfRange { index: t, max: self.filled });
        }
        let h = self.height();
        let mut out = Vec::with_capacity(t.count_ones() as usize);
        let mut start = 0usize;
        for level in (0..=h).rev() {
            let size = 1usize << level;
            if t & size != 0 {
                out.push(NodeId { depth: h - level, path: (start >> level) as u64 });
                start += size;
            }
        }
        Ok(out)
    }

    /// Sum of the noisy responses over the dyadic decomposition of `t`.
    pub fn get_prefix_sum(&self, t: usize) -> Result<VecD> {
        let mut acc = linalg::zeros(self.dim);
        for b in self.prefix_nodes(t)? {
            let r = self.nodes[b.heap_index()]
                .r
                .as_ref()
                .ok_or_else(|| Error::MissingResponse(b.to_string()))?;
            linalg::add_assign(&mut acc, r);
        }
        Ok(acc)
    }

    /// Adds `delta` to `u` on every node from leaf `b` to the root; noisy
    /// responses are left untouched.
    pub fn adjust_path(&mut self, b: NodeId, delta: &[f64]) -> Result<()> {
        self.check(b)?;
        if !self.is_leaf(b) {
            return Err(Error::NotALeaf(b.to_string()));
        }
        check_dim(self.dim, delta.len())?;
        let path: Vec<NodeId> = self.path_to_root(b).collect();
        for x in path {
            linalg::add_assign(&mut self.nodes[x.heap_index()].u, delta);
        }
        Ok(())
    }

    /// Drops the last filled leaf. Ancestor `u` values are not adjusted
    /// (see [`adjust_path`](Self::adjust_path)); ancestors lose their noisy
    /// response since their intervals are no longer complete.
    pub fn remove_last_leaf(&mut self) -> Result<()> {
        if self.filled == 0 {
            return Err(Error::TreeEmpty);
        }
        let leaf = self.leaf(self.filled)?;
        self.nodes[leaf.heap_index()] = TreeNode::empty(self.dim);
        let ancestors: Vec<NodeId> = self.path_to_root(leaf).skip(1).collect();
        for b in ancestors {
            self.nodes[b.heap_index()].r = None;
        }
        self.filled -= 1;
        Ok(())
    }

    /// Removes leaves until `filled == t`, subtracting each removed leaf's
    /// increment from its ancestors.
    pub fn truncate(&mut self, t: usize) -> Result<()> {
        while self.filled > t {
            let leaf = self.leaf(self.filled)?;
            let u = self.nodes[leaf.heap_index()].u.clone();
            self.adjust_path(leaf, &linalg::scale(&u, -1.0))?;
            self.remove_last_leaf()?;
        }
        Ok(())
    }

    /// Doubles the capacity; the old root becomes the left child of a new
    /// root. Existing nodes, including their noise, are moved untouched.
    pub fn grow(&mut self) {
        let new_cap = self.capacity * 2;
        let mut nodes = vec![TreeNode::empty(self.dim); 2 * new_cap];
        for (i, node) in std::mem::take(&mut self.nodes).into_iter().enumerate().skip(1) {
            let id = NodeId::from_heap_index(i).deepened();
            nodes[id.heap_index()] = node;
        }
        nodes[NodeId::ROOT.heap_index()].u = nodes[NodeId::ROOT.deepened().heap_index()].u.clone();
        self.nodes = nodes;
        self.capacity = new_cap;
    }

    /// Appends, doubling the capacity first when the tree is full.
    pub fn anytime_append<R: Rng + ?Sized>(&mut self, u: &[f64], rng: &mut R) -> Result<NodeId> {
        if self.filled == self.capacity {
            self.grow();
        }
        self.append(u, rng)
    }

    /// All node ids in heap order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (1..2 * self.capacity).map(NodeId::from_heap_index)
    }
}

/// Self-describing checkpoint form of a [`PrefixTree`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub capacity: usize,
    pub filled: usize,
    pub dim: usize,
    pub sigma: NoiseSchedule,
    pub nodes: BTreeMap<String, TreeNode>,
}

impl From<PrefixTree> for TreeSnapshot {
    fn from(tree: PrefixTree) -> Self {
        let nodes = tree
            .node_ids()
            .zip(tree.nodes.iter().skip(1))
            .map(|(id, node)| (id.to_string(), node.clone()))
            .collect();
        TreeSnapshot { capacity: tree.capacity, filled: tree.filled, dim: tree.dim, sigma: tree.schedule, nodes }
    }
}

impl TryFrom<TreeSnapshot> for PrefixTree {
    type Error = Error;

    fn try_from(snap: TreeSnapshot) -> Result<Self> {
        let mut tree = PrefixTree::new(snap.capacity, snap.dim, snap.sigma)?;
        if snap.filled > snap.capacity {
            return Err(Error::OutOfRange { index: snap.filled, max: snap.capacity });
        }
        for (key, node) in snap.nodes {
            let id: NodeId = key.parse()?;
            tree.set(id, node)?;
        }
        tree.filled = snap.filled;
        Ok(tree)
    }
}
