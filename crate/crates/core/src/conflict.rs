//! Tours and the conflict relation between nodes, links and tours.
//!
//! A node `w` conflicts with a link `u -> v` when `w` is `u`, is `v`, or is
//! a neighbor of `v`: a transmission by `w` could then spoil delivery over
//! the link. Two tours conflict when they share a node, or when a node of
//! one of them, other than its destination, conflicts with the other tour.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::net::{Link, NetError, Network, NodeId};

/// Round number. The first round of an execution is round 1.
pub type Round = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TourId(pub u64);

impl fmt::Display for TourId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConflictError {
    #[error("tour {0}: path needs at least two nodes")]
    TooShort(TourId),
    #[error("tour {tour}: node {node} repeats on the path")]
    NotSimple { tour: TourId, node: NodeId },
    #[error("tour {tour}: {source}")]
    InvalidPath {
        tour: TourId,
        #[source]
        source: NetError,
    },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("duplicate tour id {0}")]
    DuplicateTour(TourId),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A packet together with its injection round and the simple oriented path
/// it has to traverse.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tour {
    pub id: TourId,
    pub injected: Round,
    path: Vec<NodeId>,
}

impl Tour {
    /// Checks that the path is simple and has at least one link. Whether the
    /// links exist is checked separately by [`Tour::validate`].
    pub fn new(id: TourId, injected: Round, path: Vec<NodeId>) -> Result<Self, ConflictError> {
        if path.len() < 2 {
            return Err(ConflictError::TooShort(id));
        }
        let mut seen = BTreeSet::new();
        for &v in &path {
            if !seen.insert(v) {
                return Err(ConflictError::NotSimple { tour: id, node: v });
            }
        }
        Ok(Self { id, injected, path })
    }

    /// Convenience constructor from raw node names.
    pub fn from_names(id: u64, injected: Round, names: &[u32]) -> Result<Self, ConflictError> {
        let path = names
            .iter()
            .map(|&v| {
                NodeId::new(v).ok_or(ConflictError::InvalidPath {
                    tour: TourId(id),
                    source: NetError::InvalidNode { node: v, n: 0 },
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Tour::new(TourId(id), injected, path)
    }

    pub fn path(&self) -> &[NodeId] {
        &self.path
    }

    pub fn source(&self) -> NodeId {
        self.path[0]
    }

    pub fn destination(&self) -> NodeId {
        self.path[self.path.len() - 1]
    }

    /// Number of links.
    pub fn len(&self) -> usize {
        self.path.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn links(&self) -> impl Iterator<Item = Link> + '_ {
        self.path.windows(2).map(|w| Link {
            tail: w[0],
            head: w[1],
        })
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.path.contains(&v)
    }

    /// The part of the tour still to be traversed from path position
    /// `progress`, or `None` once the destination is reached.
    pub fn remaining(&self, progress: usize) -> Option<Tour> {
        (progress + 1 < self.path.len()).then(|| Tour {
            id: self.id,
            injected: self.injected,
            path: self.path[progress..].to_vec(),
        })
    }

    /// Checks every node and link against `net`.
    pub fn validate(&self, net: &Network) -> Result<(), ConflictError> {
        for link in self.links() {
            net.link(link.tail, link.head)
                .map_err(|source| ConflictError::InvalidPath {
                    tour: self.id,
                    source,
                })?;
        }
        Ok(())
    }

    /// `t <id> <injection_round> <v1> ... <vk>`
    pub fn to_line(&self) -> String {
        let mut out = format!("t {} {}", self.id, self.injected);
        for v in &self.path {
            out.push(' ');
            out.push_str(&v.to_string());
        }
        out
    }

    /// Parses one `t` line; `line` is only used for error reporting.
    pub fn parse_line(text: &str, line: usize) -> Result<Self, ConflictError> {
        let err = |message: String| ConflictError::Parse { line, message };
        let mut fields = text.split_whitespace();
        if fields.next() != Some("t") {
            return Err(err(format!("expected a `t` record, got `{text}`")));
        }
        let mut number = |what: &str| -> Result<u64, ConflictError> {
            let field = fields
                .next()
                .ok_or_else(|| err(format!("missing {what}")))?;
            field
                .parse()
                .map_err(|_| err(format!("invalid {what} `{field}`")))
        };
        let id = number("tour id")?;
        let injected = number("injection round")?;
        let path = fields
            .map(|f| f.parse::<NodeId>().map_err(err))
            .collect::<Result<Vec<_>, _>>()?;
        Tour::new(TourId(id), injected, path).map_err(|e| err(e.to_string()))
    }
}

fn check_link(net: &Network, link: Link) -> Result<(), ConflictError> {
    net.link(link.tail, link.head)?;
    Ok(())
}

/// Whether a transmission by `w` can interfere with delivery over `link`.
pub fn node_link_conflicts(net: &Network, w: NodeId, link: Link) -> Result<bool, ConflictError> {
    net.check_node(w)?;
    check_link(net, link)?;
    Ok(node_link_conflicts_unchecked(net, w, link))
}

pub(crate) fn node_link_conflicts_unchecked(net: &Network, w: NodeId, link: Link) -> bool {
    w == link.tail || w == link.head || net.is_adjacent(w, link.head)
}

/// Whether `w` conflicts with at least one link of `tour`.
pub fn node_tour_conflicts(net: &Network, w: NodeId, tour: &Tour) -> Result<bool, ConflictError> {
    net.check_node(w)?;
    tour.validate(net)?;
    Ok(tour
        .links()
        .any(|link| node_link_conflicts_unchecked(net, w, link)))
}

/// Whether two tours conflict with one another.
pub fn tours_conflict(net: &Network, a: &Tour, b: &Tour) -> Result<bool, ConflictError> {
    a.validate(net)?;
    b.validate(net)?;
    let (a, b) = (TourFootprint::new(net, a), TourFootprint::new(net, b));
    Ok(a.conflicts_with(&b))
}

/// Nodes a tour occupies and nodes that conflict with it, as bitsets.
#[derive(Debug, Clone)]
pub(crate) struct TourFootprint {
    on_path: NodeSet,
    senders: NodeSet,
    conflicting: NodeSet,
}

impl TourFootprint {
    pub(crate) fn new(net: &Network, tour: &Tour) -> Self {
        let n = net.node_count();
        let mut on_path = NodeSet::new(n);
        let mut senders = NodeSet::new(n);
        let mut conflicting = NodeSet::new(n);
        for &v in tour.path() {
            on_path.insert(v);
            conflicting.insert(v);
        }
        for link in tour.links() {
            senders.insert(link.tail);
            for &w in net.neighbors_of(link.head) {
                conflicting.insert(w);
            }
        }
        Self {
            on_path,
            senders,
            conflicting,
        }
    }

    pub(crate) fn conflicting_nodes(&self) -> &NodeSet {
        &self.conflicting
    }

    pub(crate) fn conflicts_with(&self, other: &Self) -> bool {
        self.on_path.intersects(&other.on_path)
            || self.senders.intersects(&other.conflicting)
            || other.senders.intersects(&self.conflicting)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct NodeSet {
    words: Vec<u64>,
}

impl NodeSet {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub(crate) fn insert(&mut self, v: NodeId) {
        let i = v.index();
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub(crate) fn intersects(&self, other: &Self) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &bits)| {
            (0..64)
                .filter(move |b| bits & (1 << b) != 0)
                .map(move |b| NodeId::from_index(w * 64 + b))
        })
    }
}

/// Graph on tours with an edge between every conflicting pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictGraph {
    vertices: Vec<TourId>,
    adjacency: Vec<Vec<usize>>,
}

impl ConflictGraph {
    /// Builds the conflict graph of `tours` by checking every pair.
    pub fn build(net: &Network, tours: &[Tour]) -> Result<Self, ConflictError> {
        let mut ordered: Vec<&Tour> = tours.iter().collect();
        ordered.sort_by_key(|t| t.id);
        for pair in ordered.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(ConflictError::DuplicateTour(pair[0].id));
            }
        }
        for tour in &ordered {
            tour.validate(net)?;
        }
        let footprints: Vec<TourFootprint> =
            ordered.iter().map(|t| TourFootprint::new(net, t)).collect();
        let mut adjacency = vec![Vec::new(); ordered.len()];
        for i in 0..ordered.len() {
            for j in i + 1..ordered.len() {
                if footprints[i].conflicts_with(&footprints[j]) {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        Ok(Self {
            vertices: ordered.iter().map(|t| t.id).collect(),
            adjacency,
        })
    }

    /// Arbitrary graph over the given vertex ids. Edges naming unknown
    /// vertices or self-loops are rejected with `None`.
    pub fn from_edges(vertices: &[TourId], edges: &[(TourId, TourId)]) -> Option<Self> {
        let mut sorted = vertices.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != vertices.len() {
            return None;
        }
        let position: BTreeMap<TourId, usize> =
            sorted.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); sorted.len()];
        for &(a, b) in edges {
            let (&i, &j) = (position.get(&a)?, position.get(&b)?);
            if i == j {
                return None;
            }
            adj[i].insert(j);
            adj[j].insert(i);
        }
        Some(Self {
            vertices: sorted,
            adjacency: adj.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    /// Vertex ids in ascending order.
    pub fn vertices(&self) -> &[TourId] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub(crate) fn index_of(&self, id: TourId) -> Option<usize> {
        self.vertices.binary_search(&id).ok()
    }

    pub(crate) fn neighbor_indices(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn has_edge(&self, a: TourId, b: TourId) -> bool {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.adjacency[i].binary_search(&j).is_ok(),
            _ => false,
        }
    }

    pub fn degree(&self, id: TourId) -> Option<usize> {
        self.index_of(id).map(|i| self.adjacency[i].len())
    }

    /// Largest vertex degree, 0 for an empty or edgeless graph.
    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(TourId, TourId)> {
        let mut out = Vec::new();
        for (i, list) in self.adjacency.iter().enumerate() {
            out.extend(
                list.iter()
                    .filter(|&&j| j > i)
                    .map(|&j| (self.vertices[i], self.vertices[j])),
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::figure1;
    use crate::net::{make_clique, make_path};

    fn id(v: u32) -> NodeId {
        NodeId::new(v).unwrap()
    }

    #[test]
    fn tour_validation() {
        assert_eq!(
            Tour::from_names(1, 1, &[2]),
            Err(ConflictError::TooShort(TourId(1)))
        );
        assert!(matches!(
            Tour::from_names(1, 1, &[1, 2, 1]),
            Err(ConflictError::NotSimple { .. })
        ));
        let path = make_path(3).unwrap();
        let skip = Tour::from_names(1, 1, &[1, 3]).unwrap();
        assert!(matches!(
            skip.validate(&path),
            Err(ConflictError::InvalidPath { .. })
        ));
    }

    #[test]
    fn node_link_clauses() {
        let net = make_path(4).unwrap();
        let link = net.link(id(2), id(3)).unwrap();
        assert!(node_link_conflicts(&net, id(2), link).unwrap());
        assert!(node_link_conflicts(&net, id(3), link).unwrap());
        // 4 neighbors the head; 1 neighbors only the tail.
        assert!(node_link_conflicts(&net, id(4), link).unwrap());
        assert!(!node_link_conflicts(&net, id(1), link).unwrap());
        assert!(node_link_conflicts(&net, id(9), link).is_err());
        assert!(node_link_conflicts(
            &net,
            id(1),
            Link {
                tail: id(1),
                head: id(3)
            }
        )
        .is_err());
    }

    #[test]
    fn node_tour_clauses() {
        let net = make_path(6).unwrap();
        let tour = Tour::from_names(1, 1, &[1, 2]).unwrap();
        assert!(node_tour_conflicts(&net, id(1), &tour).unwrap());
        assert!(node_tour_conflicts(&net, id(3), &tour).unwrap());
        assert!(!node_tour_conflicts(&net, id(5), &tour).unwrap());
    }

    #[test]
    fn figure1_predicates() {
        let fig = figure1();
        let net = &fig.network;
        let link = net.link(fig.u, fig.s).unwrap();
        assert!(node_link_conflicts(net, fig.r, link).unwrap());
        assert!(node_tour_conflicts(net, fig.r, &fig.tours[0]).unwrap());
        let [f1, f2, f3, f4] = &fig.tours;
        assert!(!tours_conflict(net, f2, f3).unwrap());
        assert!(tours_conflict(net, f3, f4).unwrap());
        assert!(tours_conflict(net, f1, f4).unwrap());
        assert!(tours_conflict(net, f2, f4).unwrap());
    }

    #[test]
    fn figure1_graph() {
        let fig = figure1();
        let cg = ConflictGraph::build(&fig.network, &fig.tours).unwrap();
        let t = TourId;
        assert_eq!(
            cg.edges(),
            vec![
                (t(1), t(2)),
                (t(1), t(3)),
                (t(1), t(4)),
                (t(2), t(4)),
                (t(3), t(4))
            ]
        );
        assert_eq!(cg.max_degree(), 3);
        assert_eq!(cg.degree(t(1)), Some(3));
        assert_eq!(cg.degree(t(4)), Some(3));
    }

    #[test]
    fn small_graphs() {
        let net = make_clique(3).unwrap();
        let empty = ConflictGraph::build(&net, &[]).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.max_degree(), 0);
        let one = ConflictGraph::build(&net, &[Tour::from_names(7, 1, &[1, 2]).unwrap()]).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one.edges().is_empty());
        let dup = [
            Tour::from_names(7, 1, &[1, 2]).unwrap(),
            Tour::from_names(7, 2, &[2, 3]).unwrap(),
        ];
        assert_eq!(
            ConflictGraph::build(&net, &dup),
            Err(ConflictError::DuplicateTour(TourId(7)))
        );
        let edgeless =
            ConflictGraph::from_edges(&(1..=5).map(TourId).collect::<Vec<_>>(), &[]).unwrap();
        assert_eq!(edgeless.max_degree(), 0);
        let tri = ConflictGraph::from_edges(
            &[TourId(1), TourId(2), TourId(3)],
            &[
                (TourId(1), TourId(2)),
                (TourId(2), TourId(3)),
                (TourId(1), TourId(3)),
            ],
        )
        .unwrap();
        assert_eq!(tri.max_degree(), 2);
    }

    #[test]
    fn tour_line_format() {
        let tour = Tour::from_names(3, 17, &[4, 2, 9]).unwrap();
        assert_eq!(tour.to_line(), "t 3 17 4 2 9");
        assert_eq!(Tour::parse_line("t 3 17 4 2 9", 1).unwrap(), tour);
        assert!(matches!(
            Tour::parse_line("t 3 17 4", 5),
            Err(ConflictError::Parse { line: 5, .. })
        ));
    }

    #[test]
    fn remaining_suffix() {
        let tour = Tour::from_names(1, 1, &[1, 2, 3]).unwrap();
        assert_eq!(tour.remaining(1).unwrap().path(), &[id(2), id(3)]);
        assert!(tour.remaining(2).is_none());
    }

    mod props {
        use super::*;
        use crate::net::make_random_connected;
        use proptest::prelude::*;
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        fn random_tour(net: &Network, rng: &mut impl Rng, id: u64, max_len: usize) -> Tour {
            let n = net.node_count() as u32;
            let mut path = vec![NodeId::new(rng.random_range(1..=n)).unwrap()];
            let len = rng.random_range(1..=max_len);
            while path.len() <= len {
                let last = *path.last().unwrap();
                let free: Vec<NodeId> = net
                    .neighbors(last)
                    .unwrap()
                    .iter()
                    .copied()
                    .filter(|v| !path.contains(v))
                    .collect();
                if free.is_empty() {
                    break;
                }
                path.push(free[rng.random_range(0..free.len())]);
            }
            Tour::new(TourId(id), 1, path).unwrap()
        }

        fn reference_conflict(net: &Network, a: &Tour, b: &Tour) -> bool {
            let share = a.path().iter().any(|v| b.contains(*v));
            let one_way = |x: &Tour, y: &Tour| {
                x.path()[..x.len()]
                    .iter()
                    .any(|&w| node_tour_conflicts(net, w, y).unwrap())
            };
            share || one_way(a, b) || one_way(b, a)
        }

        proptest! {
            #[test]
            fn conflict_is_symmetric_and_matches_definition(
                n in 2usize..9, p in 0.0f64..0.6, seed in any::<u64>()
            ) {
                let net = make_random_connected(n, p, seed).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
                let tours: Vec<Tour> = (1..=8).map(|i| random_tour(&net, &mut rng, i, 3)).collect();
                let cg = ConflictGraph::build(&net, &tours).unwrap();
                for a in &tours {
                    for b in &tours {
                        if a.id == b.id {
                            continue;
                        }
                        let ab = tours_conflict(&net, a, b).unwrap();
                        prop_assert_eq!(ab, tours_conflict(&net, b, a).unwrap());
                        prop_assert_eq!(ab, reference_conflict(&net, a, b));
                        prop_assert_eq!(ab, cg.has_edge(a.id, b.id));
                        if a.path().iter().any(|v| b.contains(*v)) {
                            prop_assert!(ab);
                        }
                    }
                }
            }
        }
    }
}
