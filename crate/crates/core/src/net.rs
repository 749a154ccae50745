//! Radio network topologies.
//!
//! A [`Network`] is a simple, undirected, connected graph whose nodes are
//! named `1..=n`. Every edge stands for two directed links; see [`Link`].

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Name of a node, an integer in `1..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u32);

impl NodeId {
    /// Builds a node name. Zero is not a valid name.
    pub fn new(value: u32) -> Option<Self> {
        (value >= 1).then_some(Self(value))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Zero-based position, used to index per-node vectors.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Self {
        Self(index as u32 + 1)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let value: u32 = s.parse().map_err(|_| format!("invalid node name `{s}`"))?;
        NodeId::new(value).ok_or_else(|| "node names start at 1".to_string())
    }
}

/// Oriented edge `tail -> head`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Link {
    pub tail: NodeId,
    pub head: NodeId,
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.tail, self.head)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("network needs at least {min} nodes, got {n}")]
    TooFewNodes { n: usize, min: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(u32),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(u32, u32),
    #[error("endpoint {node} outside [1, {n}]")]
    EndpointOutOfRange { node: u32, n: usize },
    #[error("network is disconnected: node {unreached} unreachable from node 1")]
    Disconnected { unreached: u32 },
    #[error("invalid node {node} for a network of {n} nodes")]
    InvalidNode { node: u32, n: usize },
    #[error("({0}, {1}) is not an edge")]
    NotAnEdge(u32, u32),
    #[error("edge probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Validated communication topology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    n: usize,
    neighbors: Vec<Vec<NodeId>>,
    adjacent: Vec<bool>,
}

impl Network {
    /// Validates `edges` as a simple connected graph on nodes `1..=n`.
    pub fn new(n: usize, edges: &[(u32, u32)]) -> Result<Self, NetError> {
        if n == 0 {
            return Err(NetError::TooFewNodes { n, min: 1 });
        }
        let mut adjacent = vec![false; n * n];
        let mut neighbors = vec![Vec::new(); n];
        for &(u, v) in edges {
            for node in [u, v] {
                if node == 0 || node as usize > n {
                    return Err(NetError::EndpointOutOfRange { node, n });
                }
            }
            if u == v {
                return Err(NetError::SelfLoop(u));
            }
            let (a, b) = (u as usize - 1, v as usize - 1);
            if adjacent[a * n + b] {
                return Err(NetError::DuplicateEdge(u.min(v), u.max(v)));
            }
            adjacent[a * n + b] = true;
            adjacent[b * n + a] = true;
            neighbors[a].push(NodeId::from_index(b));
            neighbors[b].push(NodeId::from_index(a));
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }

        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for y in &neighbors[x] {
                if !seen[y.index()] {
                    seen[y.index()] = true;
                    stack.push(y.index());
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(NetError::Disconnected {
                unreached: missing as u32 + 1,
            });
        }

        Ok(Self {
            n,
            neighbors,
            adjacent,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n).map(NodeId::from_index)
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.index() < self.n
    }

    pub fn check_node(&self, v: NodeId) -> Result<(), NetError> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(NetError::InvalidNode {
                node: v.get(),
                n: self.n,
            })
        }
    }

    /// Sorted neighbors of `v`.
    pub fn neighbors(&self, v: NodeId) -> Result<&[NodeId], NetError> {
        self.check_node(v)?;
        Ok(&self.neighbors[v.index()])
    }

    /// Neighbors of a node already known to be valid.
    pub(crate) fn neighbors_of(&self, v: NodeId) -> &[NodeId] {
        &self.neighbors[v.index()]
    }

    pub fn degree(&self, v: NodeId) -> Result<usize, NetError> {
        self.neighbors(v).map(<[NodeId]>::len)
    }

    /// Whether `u` and `v` share an edge. Invalid nodes are never adjacent.
    pub fn is_adjacent(&self, u: NodeId, v: NodeId) -> bool {
        self.contains(u) && self.contains(v) && self.adjacent[u.index() * self.n + v.index()]
    }

    /// The link `tail -> head`, if `{tail, head}` is an edge.
    pub fn link(&self, tail: NodeId, head: NodeId) -> Result<Link, NetError> {
        self.check_node(tail)?;
        self.check_node(head)?;
        if self.is_adjacent(tail, head) {
            Ok(Link { tail, head })
        } else {
            Err(NetError::NotAnEdge(tail.get(), head.get()))
        }
    }

    /// Edges as `(u, v)` pairs with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (i, list) in self.neighbors.iter().enumerate() {
            let u = NodeId::from_index(i);
            out.extend(list.iter().filter(|&&v| v > u).map(|&v| (u, v)));
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Serializes to the line format read by [`Network::parse`].
    pub fn to_text(&self) -> String {
        let mut out = format!("n {}\n", self.n);
        for (u, v) in self.edges() {
            out.push_str(&format!("e {u} {v}\n"));
        }
        out
    }

    /// Reads `n <count>` followed by `e <u> <v>` lines. `#` starts a comment
    /// line; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self, NetError> {
        let mut n = None;
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| NetError::Parse {
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["n", count] => {
                    if n.is_some() {
                        return Err(err("repeated `n` record".into()));
                    }
                    n = Some(
                        count
                            .parse::<usize>()
                            .map_err(|_| err(format!("invalid node count `{count}`")))?,
                    );
                }
                ["e", u, v] => {
                    if n.is_none() {
                        return Err(err("`e` record before `n` record".into()));
                    }
                    let parse = |s: &str| {
                        s.parse::<u32>()
                            .map_err(|_| err(format!("invalid node `{s}`")))
                    };
                    edges.push((parse(u)?, parse(v)?));
                }
                _ => return Err(err(format!("unrecognized record `{line}`"))),
            }
        }
        let n = n.ok_or(NetError::Parse {
            line: 0,
            message: "missing `n` record".into(),
        })?;
        Network::new(n, &edges)
    }
}

/// Complete graph on `n` nodes.
pub fn make_clique(n: usize) -> Result<Network, NetError> {
    if n < 2 {
        return Err(NetError::TooFewNodes { n, min: 2 });
    }
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for u in 1..=n as u32 {
        for v in u + 1..=n as u32 {
            edges.push((u, v));
        }
    }
    Network::new(n, &edges)
}

/// Path `1 - 2 - ... - n`.
pub fn make_path(n: usize) -> Result<Network, NetError> {
    if n < 2 {
        return Err(NetError::TooFewNodes { n, min: 2 });
    }
    let edges: Vec<_> = (1..n as u32).map(|u| (u, u + 1)).collect();
    Network::new(n, &edges)
}

/// Random spanning tree plus independent extra edges, fully determined by
/// `(n, extra_edge_prob, seed)`.
pub fn make_random_connected(
    n: usize,
    extra_edge_prob: f64,
    seed: u64,
) -> Result<Network, NetError> {
    if n < 2 {
        return Err(NetError::TooFewNodes { n, min: 2 });
    }
    if !(0.0..=1.0).contains(&extra_edge_prob) {
        return Err(NetError::InvalidProbability(extra_edge_prob));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<u32> = (1..=n as u32).collect();
    order.shuffle(&mut rng);

    // Each node after the first attaches to a uniformly chosen earlier one.
    let mut tree = BTreeSet::new();
    for i in 1..n {
        let parent = order[rng.random_range(0..i)];
        let child = order[i];
        tree.insert((parent.min(child), parent.max(child)));
    }
    let mut edges: Vec<(u32, u32)> = tree.iter().copied().collect();
    for u in 1..=n as u32 {
        for v in u + 1..=n as u32 {
            if !tree.contains(&(u, v)) && rng.random_bool(extra_edge_prob) {
                edges.push((u, v));
            }
        }
    }
    Network::new(n, &edges)
}
