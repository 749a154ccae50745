//! Synchronous round engine with radio hearing semantics.
//!
//! In every round each node either transmits one message or listens. A
//! listening node hears a message exactly when one of its neighbors
//! transmits; two or more transmitting neighbors collide, and a node that
//! transmits hears nothing.
//!
//! Within a round the order is fixed: injections land in source queues,
//! every node picks its action from its own state, receptions are resolved,
//! heard packets move one hop, and then hearers are notified.

use std::collections::BTreeMap;
use std::io::{self, Write};

use thiserror::Error;

use crate::conflict::{ConflictError, Round, Tour, TourId};
use crate::net::{Network, NodeId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("expected {expected} actions, got {got}")]
    MissingAction { expected: usize, got: usize },
    #[error("round {round}: node {node} transmitted tour {tour}, which it does not hold")]
    NotResident {
        round: Round,
        node: NodeId,
        tour: TourId,
    },
    #[error("tour {tour} injected in round {round}; rounds start at 1")]
    BadInjectionRound { tour: TourId, round: Round },
    #[error(transparent)]
    Tour(#[from] ConflictError),
}

/// A message: at most one packet plus algorithm-defined control data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message<C> {
    pub packet: Option<TourId>,
    pub control: C,
}

impl<C: Default> Message<C> {
    pub fn packet(tour: TourId) -> Self {
        Self {
            packet: Some(tour),
            control: C::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action<C> {
    Listen,
    Transmit(Message<C>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reception<C> {
    Heard { sender: NodeId, message: Message<C> },
    Silence,
    Collision,
}

/// What every node perceived in one round, indexed by node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundOutcome<C> {
    receptions: Vec<Reception<C>>,
}

impl<C> RoundOutcome<C> {
    pub fn at(&self, v: NodeId) -> &Reception<C> {
        &self.receptions[v.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Reception<C>)> {
        self.receptions
            .iter()
            .enumerate()
            .map(|(i, r)| (NodeId::from_index(i), r))
    }
}

/// Resolves one round. `actions[i]` is the action of node `i + 1`.
pub fn step<C: Clone>(net: &Network, actions: &[Action<C>]) -> Result<RoundOutcome<C>, SimError> {
    if actions.len() != net.node_count() {
        return Err(SimError::MissingAction {
            expected: net.node_count(),
            got: actions.len(),
        });
    }
    let receptions = net
        .nodes()
        .map(|v| {
            if matches!(actions[v.index()], Action::Transmit(_)) {
                return Reception::Silence;
            }
            let mut transmitters =
                net.neighbors_of(v)
                    .iter()
                    .filter_map(|&u| match &actions[u.index()] {
                        Action::Transmit(m) => Some((u, m)),
                        Action::Listen => None,
                    });
            match (transmitters.next(), transmitters.next()) {
                (None, _) => Reception::Silence,
                (Some((sender, message)), None) => Reception::Heard {
                    sender,
                    message: message.clone(),
                },
                (Some(_), Some(_)) => Reception::Collision,
            }
        })
        .collect();
    Ok(RoundOutcome { receptions })
}

/// A tour sitting in a node's queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resident {
    pub tour: Tour,
    /// Index into the path of the node currently holding the tour.
    pub progress: usize,
    hops: Vec<Round>,
}

impl Resident {
    pub fn next_hop(&self) -> NodeId {
        self.tour.path()[self.progress + 1]
    }

    pub fn remaining_links(&self) -> usize {
        self.tour.len() - self.progress
    }

    /// The rest of the path, starting at the current node.
    pub fn remaining(&self) -> Tour {
        self.tour
            .remaining(self.progress)
            .expect("resident tours are never at their destination")
    }
}

/// Local state of one node as seen by its routing algorithm.
#[derive(Debug, Clone)]
pub struct NodeState {
    name: NodeId,
    n: usize,
    queue: BTreeMap<TourId, Resident>,
}

impl NodeState {
    pub fn name(&self) -> NodeId {
        self.name
    }

    /// Number of nodes in the network.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn queue(&self) -> &BTreeMap<TourId, Resident> {
        &self.queue
    }

    pub fn queue_size(&self) -> usize {
        self.queue.len()
    }

    /// Queued tour injected earliest, ties broken by id.
    pub fn oldest(&self) -> Option<&Resident> {
        self.queue
            .values()
            .min_by_key(|r| (r.tour.injected, r.tour.id))
    }
}

/// Per-node half of a distributed transmission policy. It sees only its
/// own node's state and the messages that node hears.
pub trait NodeAlgorithm {
    type Control: Clone;

    fn on_inject(&mut self, _state: &NodeState, _tour: &Tour) {}

    fn on_round(&mut self, state: &NodeState, round: Round) -> Action<Self::Control>;

    fn on_hear(&mut self, _state: &NodeState, _sender: NodeId, _message: &Message<Self::Control>) {}
}

/// Creates the per-node instances of an algorithm. Each node learns only
/// `n` and its own name.
pub trait RoutingAlgorithm {
    type Node: NodeAlgorithm;

    fn spawn(&self, name: NodeId, n: usize) -> Self::Node;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundStats {
    pub round: Round,
    pub backlog: usize,
    pub undelivered_hops: usize,
    pub max_queue: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub tour: TourId,
    pub injected: Round,
    pub delivered: Round,
    pub links: usize,
    /// Round of each hop, in path order.
    pub hops: Vec<Round>,
}

impl Delivery {
    pub fn latency(&self) -> Round {
        self.delivered - self.injected
    }
}

/// A packet transmission that the intended next hop did not hear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnheardPacket {
    pub round: Round,
    pub sender: NodeId,
    pub tour: TourId,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Metrics {
    pub rounds: Vec<RoundStats>,
    pub deliveries: Vec<Delivery>,
    pub max_queue_per_node: Vec<usize>,
    pub injected: usize,
    pub unheard_packets: Vec<UnheardPacket>,
    /// Tours still queued after the last simulated round, as
    /// `(id, injection round)`.
    pub pending: Vec<(TourId, Round)>,
}

impl Metrics {
    pub fn max_queue(&self) -> usize {
        self.max_queue_per_node.iter().copied().max().unwrap_or(0)
    }

    pub fn max_latency(&self) -> Option<Round> {
        self.deliveries.iter().map(Delivery::latency).max()
    }

    /// Backlog at the end of `round`; zero before round 1.
    pub fn backlog_at(&self, round: Round) -> usize {
        match round {
            0 => 0,
            r => self.rounds[r as usize - 1].backlog,
        }
    }

    pub fn undelivered_hops_at(&self, round: Round) -> usize {
        match round {
            0 => 0,
            r => self.rounds[r as usize - 1].undelivered_hops,
        }
    }

    pub fn write_rounds_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "round,backlog,undelivered_hops,max_queue")?;
        for r in &self.rounds {
            writeln!(
                out,
                "{},{},{},{}",
                r.round, r.backlog, r.undelivered_hops, r.max_queue
            )?;
        }
        Ok(())
    }

    pub fn write_deliveries_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "tour_id,injected,delivered,latency,links")?;
        for d in &self.deliveries {
            writeln!(
                out,
                "{},{},{},{},{}",
                d.tour,
                d.injected,
                d.delivered,
                d.latency(),
                d.links
            )?;
        }
        Ok(())
    }
}

/// Step-by-step executor for one run.
pub struct Simulator<'a, A> {
    net: &'a Network,
    nodes: Vec<NodeState>,
    algorithms: Vec<A>,
    injections: Vec<Tour>,
    next_injection: usize,
    round: Round,
    metrics: Metrics,
}

impl<'a, A: NodeAlgorithm> Simulator<'a, A> {
    pub fn new<R>(net: &'a Network, algorithm: &R, tours: &[Tour]) -> Result<Self, SimError>
    where
        R: RoutingAlgorithm<Node = A>,
    {
        let mut injections = tours.to_vec();
        injections.sort_by_key(|t| (t.injected, t.id));
        let mut ids: Vec<TourId> = injections.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(ConflictError::DuplicateTour(w[0]).into());
        }
        for tour in &injections {
            tour.validate(net)?;
            if tour.injected == 0 {
                return Err(SimError::BadInjectionRound {
                    tour: tour.id,
                    round: 0,
                });
            }
        }
        let n = net.node_count();
        Ok(Self {
            net,
            nodes: net
                .nodes()
                .map(|name| NodeState {
                    name,
                    n,
                    queue: BTreeMap::new(),
                })
                .collect(),
            algorithms: net.nodes().map(|name| algorithm.spawn(name, n)).collect(),
            injections,
            next_injection: 0,
            round: 0,
            metrics: Metrics {
                max_queue_per_node: vec![0; n],
                ..Metrics::default()
            },
        })
    }

    /// Last completed round.
    pub fn round(&self) -> Round {
        self.round
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn algorithms(&self) -> &[A] {
        &self.algorithms
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    /// Which node holds each queued tour, with its progress index.
    pub fn locations(&self) -> BTreeMap<TourId, (NodeId, usize)> {
        self.nodes
            .iter()
            .flat_map(|s| {
                s.queue
                    .values()
                    .map(move |r| (r.tour.id, (s.name, r.progress)))
            })
            .collect()
    }

    /// Executes one round.
    pub fn step_round(&mut self) -> Result<RoundStats, SimError> {
        self.round += 1;
        let round = self.round;

        while let Some(tour) = self.injections.get(self.next_injection) {
            if tour.injected > round {
                break;
            }
            let tour = tour.clone();
            self.next_injection += 1;
            self.metrics.injected += 1;
            let src = tour.source().index();
            self.algorithms[src].on_inject(&self.nodes[src], &tour);
            self.nodes[src].queue.insert(
                tour.id,
                Resident {
                    tour,
                    progress: 0,
                    hops: Vec::new(),
                },
            );
        }
        let mut peak: Vec<usize> = self.nodes.iter().map(NodeState::queue_size).collect();

        let mut actions = Vec::with_capacity(self.nodes.len());
        for (state, alg) in self.nodes.iter().zip(&mut self.algorithms) {
            let action = alg.on_round(state, round);
            if let Action::Transmit(Message {
                packet: Some(tour), ..
            }) = &action
            {
                if !state.queue.contains_key(tour) {
                    return Err(SimError::NotResident {
                        round,
                        node: state.name,
                        tour: *tour,
                    });
                }
            }
            actions.push(action);
        }

        let outcome = step(self.net, &actions)?;

        for (i, action) in actions.iter().enumerate() {
            let Action::Transmit(Message {
                packet: Some(id), ..
            }) = action
            else {
                continue;
            };
            let sender = NodeId::from_index(i);
            let next = self.nodes[i].queue[id].next_hop();
            let heard = matches!(
                outcome.at(next),
                Reception::Heard { sender: s, .. } if *s == sender
            );
            if !heard {
                self.metrics.unheard_packets.push(UnheardPacket {
                    round,
                    sender,
                    tour: *id,
                });
                continue;
            }
            let mut resident = self.nodes[i]
                .queue
                .remove(id)
                .expect("residency checked above");
            resident.progress += 1;
            resident.hops.push(round);
            if resident.progress == resident.tour.len() {
                self.metrics.deliveries.push(Delivery {
                    tour: resident.tour.id,
                    injected: resident.tour.injected,
                    delivered: round,
                    links: resident.tour.len(),
                    hops: resident.hops,
                });
            } else {
                self.nodes[next.index()].queue.insert(*id, resident);
            }
        }

        for (v, reception) in outcome.iter() {
            if let Reception::Heard { sender, message } = reception {
                self.algorithms[v.index()].on_hear(&self.nodes[v.index()], *sender, message);
            }
        }

        let mut backlog = 0;
        let mut undelivered_hops = 0;
        for (state, peak) in self.nodes.iter().zip(&mut peak) {
            backlog += state.queue.len();
            undelivered_hops += state
                .queue
                .values()
                .map(Resident::remaining_links)
                .sum::<usize>();
            *peak = (*peak).max(state.queue.len());
        }
        for (best, p) in self.metrics.max_queue_per_node.iter_mut().zip(&peak) {
            *best = (*best).max(*p);
        }
        let stats = RoundStats {
            round,
            backlog,
            undelivered_hops,
            max_queue: peak.iter().copied().max().unwrap_or(0),
        };
        self.metrics.rounds.push(stats);
        Ok(stats)
    }

    pub fn run_until(&mut self, horizon: Round) -> Result<(), SimError> {
        while self.round < horizon {
            self.step_round()?;
        }
        Ok(())
    }

    /// Final metrics and the per-node algorithm instances.
    pub fn finish(mut self) -> (Metrics, Vec<A>) {
        let mut pending: Vec<(TourId, Round)> = self
            .nodes
            .iter()
            .flat_map(|s| s.queue.values().map(|r| (r.tour.id, r.tour.injected)))
            .collect();
        pending.sort_unstable();
        self.metrics.pending = pending;
        (self.metrics, self.algorithms)
    }
}

/// Runs `algorithm` for rounds `1..=horizon`. Tours injected after the
/// horizon are ignored.
pub fn run<R: RoutingAlgorithm>(
    net: &Network,
    algorithm: &R,
    tours: &[Tour],
    horizon: Round,
) -> Result<Metrics, SimError> {
    let mut sim = Simulator::new(net, algorithm, tours)?;
    sim.run_until(horizon)?;
    Ok(sim.finish().0)
}

/// Simple policies used as baselines and in tests.
pub mod baselines {
    use super::*;

    /// Never transmits.
    #[derive(Debug, Clone, Copy, Default)]
    pub struct AlwaysListen;

    impl RoutingAlgorithm for AlwaysListen {
        type Node = AlwaysListen;

        fn spawn(&self, _name: NodeId, _n: usize) -> Self::Node {
            AlwaysListen
        }
    }

    impl NodeAlgorithm for AlwaysListen {
        type Control = ();

        fn on_round(&mut self, _state: &NodeState, _round: Round) -> Action<()> {
            Action::Listen
        }
    }

    /// Every node with a non-empty queue transmits its oldest tour in every
    /// round. Collides freely.
    #[derive(Debug, Clone, Copy, Default)]
    pub struct Eager;

    impl RoutingAlgorithm for Eager {
        type Node = Eager;

        fn spawn(&self, _name: NodeId, _n: usize) -> Self::Node {
            Eager
        }
    }

    impl NodeAlgorithm for Eager {
        type Control = ();

        fn on_round(&mut self, state: &NodeState, _round: Round) -> Action<()> {
            match state.oldest() {
                Some(r) => Action::Transmit(Message::packet(r.tour.id)),
                None => Action::Listen,
            }
        }
    }

    /// In round `r` only node `(r mod n) + 1` may transmit, sending its
    /// oldest tour. One transmitter per round, so nothing ever collides.
    #[derive(Debug, Clone, Copy, Default)]
    pub struct RoundRobin;

    #[derive(Debug, Clone, Copy)]
    pub struct RoundRobinNode {
        name: NodeId,
        n: usize,
    }

    impl RoutingAlgorithm for RoundRobin {
        type Node = RoundRobinNode;

        fn spawn(&self, name: NodeId, n: usize) -> Self::Node {
            RoundRobinNode { name, n }
        }
    }

    impl NodeAlgorithm for RoundRobinNode {
        type Control = ();

        fn on_round(&mut self, state: &NodeState, round: Round) -> Action<()> {
            let turn = NodeId::from_index((round % self.n as u64) as usize);
            match state.oldest() {
                Some(r) if turn == self.name => Action::Transmit(Message::packet(r.tour.id)),
                _ => Action::Listen,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::baselines::*;
    use super::*;
    use crate::net::{make_clique, make_path, make_random_connected};

    fn id(v: u32) -> NodeId {
        NodeId::new(v).unwrap()
    }

    fn tx(tour: u64) -> Action<()> {
        Action::Transmit(Message::packet(TourId(tour)))
    }

    #[test]
    fn single_transmitter_is_heard_by_all_neighbors() {
        let net = make_clique(4).unwrap();
        let actions = vec![tx(1), Action::Listen, Action::Listen, Action::Listen];
        let out = step(&net, &actions).unwrap();
        assert_eq!(out.at(id(1)), &Reception::Silence);
        for v in 2..=4 {
            assert!(matches!(out.at(id(v)), Reception::Heard { sender, .. } if *sender == id(1)));
        }
    }

    #[test]
    fn two_transmitters_collide() {
        let net = make_path(3).unwrap();
        let out = step(&net, &[tx(1), Action::Listen, tx(2)]).unwrap();
        assert_eq!(out.at(id(2)), &Reception::Collision);
    }

    #[test]
    fn transmitters_hear_nothing() {
        let net = make_path(2).unwrap();
        let out = step(&net, &[tx(1), tx(2)]).unwrap();
        assert_eq!(out.at(id(1)), &Reception::Silence);
        assert_eq!(out.at(id(2)), &Reception::Silence);
    }

    #[test]
    fn step_needs_every_action() {
        let net = make_path(3).unwrap();
        assert_eq!(
            step(&net, &[Action::<()>::Listen]),
            Err(SimError::MissingAction {
                expected: 3,
                got: 1
            })
        );
    }

    #[test]
    fn path_delivery_latency() {
        let net = make_path(3).unwrap();
        let tour = Tour::from_names(1, 1, &[1, 2, 3]).unwrap();
        let m = run(&net, &Eager, &[tour], 5).unwrap();
        assert_eq!(m.deliveries.len(), 1);
        let d = &m.deliveries[0];
        assert_eq!(d.hops, vec![1, 2]);
        assert_eq!(d.delivered, 2);
        assert_eq!(d.latency(), 1);
        assert_eq!(m.backlog_at(1), 1);
        assert_eq!(m.backlog_at(2), 0);
    }

    #[test]
    fn empty_trace_has_no_backlog() {
        let net = make_clique(3).unwrap();
        let m = run(&net, &RoundRobin, &[], 20).unwrap();
        assert!(m.rounds.iter().all(|r| r.backlog == 0));
        assert_eq!(m.rounds.len(), 20);
    }

    #[test]
    fn always_listen_never_delivers() {
        let net = make_clique(3).unwrap();
        let tour = Tour::from_names(1, 1, &[1, 2]).unwrap();
        let m = run(&net, &AlwaysListen, &[tour], 50).unwrap();
        assert!(m.deliveries.is_empty());
        assert_eq!(m.pending, vec![(TourId(1), 1)]);
    }

    #[test]
    fn non_resident_transmission_is_rejected() {
        struct Liar;
        impl RoutingAlgorithm for Liar {
            type Node = Liar;
            fn spawn(&self, _: NodeId, _: usize) -> Liar {
                Liar
            }
        }
        impl NodeAlgorithm for Liar {
            type Control = ();
            fn on_round(&mut self, _: &NodeState, _: Round) -> Action<()> {
                tx(99)
            }
        }
        let net = make_path(2).unwrap();
        assert!(matches!(
            run(&net, &Liar, &[], 3),
            Err(SimError::NotResident { round: 1, .. })
        ));
    }

    #[test]
    fn round_robin_never_collides() {
        let net = make_random_connected(7, 0.4, 3).unwrap();
        let tours: Vec<Tour> = (0..40)
            .map(|i| {
                let a = (i % 7) as u32 + 1;
                let b = net.neighbors(id(a)).unwrap()[0].get();
                Tour::from_names(i as u64 + 1, i as u64 / 3 + 1, &[a, b]).unwrap()
            })
            .collect();
        let m = run(&net, &RoundRobin, &tours, 400).unwrap();
        assert!(m.unheard_packets.is_empty());
        assert_eq!(m.deliveries.len(), 40);
    }

    #[test]
    fn run_is_deterministic_and_conserves_tours() {
        let net = make_random_connected(6, 0.3, 11).unwrap();
        let tours: Vec<Tour> = (0..30)
            .map(|i| {
                let a = (i % 6) as u32 + 1;
                let b = net.neighbors(id(a)).unwrap()[0];
                let mut path = vec![id(a), b];
                if let Some(c) = net.neighbors(b).unwrap().iter().find(|c| !path.contains(c)) {
                    path.push(*c);
                }
                Tour::new(TourId(i as u64 + 1), i as u64 / 2 + 1, path).unwrap()
            })
            .collect();
        let mut sim = Simulator::new(&net, &Eager, &tours).unwrap();
        let mut last: BTreeMap<TourId, (NodeId, usize)> = BTreeMap::new();
        for _ in 0..200 {
            let stats = sim.step_round().unwrap();
            let m = sim.metrics();
            assert_eq!(m.injected, stats.backlog + m.deliveries.len());
            let now = sim.locations();
            for (tour, (_, progress)) in &now {
                if let Some((_, before)) = last.get(tour) {
                    assert!(*progress == *before || *progress == before + 1);
                }
            }
            last = now;
        }
        let (a, _) = sim.finish();
        let b = run(&net, &Eager, &tours, 200).unwrap();
        assert_eq!(a, b);
        for d in &a.deliveries {
            assert!(d.hops.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(d.hops.len(), d.links);
            assert!(d.latency() + 1 >= d.links as u64);
        }
    }

    #[test]
    fn csv_schemas() {
        let net = make_path(3).unwrap();
        let tour = Tour::from_names(1, 1, &[1, 2, 3]).unwrap();
        let m = run(&net, &Eager, &[tour], 2).unwrap();
        let mut rounds = Vec::new();
        m.write_rounds_csv(&mut rounds).unwrap();
        assert_eq!(
            String::from_utf8(rounds).unwrap(),
            "round,backlog,undelivered_hops,max_queue\n1,1,1,1\n2,0,0,1\n"
        );
        let mut deliveries = Vec::new();
        m.write_deliveries_csv(&mut deliveries).unwrap();
        assert_eq!(
            String::from_utf8(deliveries).unwrap(),
            "tour_id,injected,delivered,latency,links\n1,1,2,1,2\n"
        );
    }
}
