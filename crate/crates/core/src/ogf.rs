//! Old-Go-First routing.
//!
//! Time is cut into windows of `w` rounds. Tours injected during a window
//! are new there; at the next window boundary they become old. Each window
//! runs two phases:
//!
//! 1. Gossip: every node learns the specification of every old tour. This
//!    costs `S_n` rounds.
//! 2. Every node builds the conflict graph of the old tours, colors it
//!    first-fit in ascending tour-id order (at most `delta + 1` colors), and
//!    the window continues with `L'` super-rounds of `delta + 1` rounds. A
//!    node holding an old tour of color `i` sends it in round `i` of every
//!    super-round. Same-colored tours do not conflict, so every such
//!    transmission is heard and each old tour moves one hop per super-round.
//!
//! New tours never move. Rounds left over in a window are spent listening.
//!
//! With `w = ceil((S_n + b L) / (1 - rho L))` every tour is delivered by the
//! end of the window after the one it was injected in, so latency stays
//! below `2w`.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;
use std::sync::Arc;

use num_rational::Rational64;
use num_traits::One;
use thiserror::Error;

use crate::adversary::{verify_admissible, AdversaryError, AdversaryType, Balance, InjectionTrace};
use crate::coloring::{greedy_color_by_id, Coloring};
use crate::conflict::{ConflictError, ConflictGraph, Round, Tour, TourId};
use crate::net::{Network, NodeId};
use crate::sim::{
    self, Action, Message, Metrics, NodeAlgorithm, NodeState, Reception, RoutingAlgorithm,
    SimError, Simulator, UnheardPacket,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OgfError {
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error("trace is not admissible: {0}")]
    Inadmissible(String),
    #[error("oracle gossip needs at least one round")]
    ZeroGossipRounds,
    #[error("window length must be positive")]
    ZeroWindow,
    #[error("gossip needs at least two nodes")]
    TooFewNodes,
    #[error("window bound {u} violates S_n + (rho u + b) L <= u")]
    BoundViolated { u: u64 },
    #[error("phase-2 transmission of tour {} by node {} in round {} was not heard", .0.tour, .0.sender, .0.round)]
    Unheard(UnheardPacket),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Conflict(#[from] ConflictError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GossipMode {
    /// Round-robin sweeps; every node sends its whole rumor set in its slot.
    Tdma,
    /// Knowledge is pooled at phase start; the phase still lasts `S_n`.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GossipConfig {
    pub mode: GossipMode,
    rounds: u64,
}

impl GossipConfig {
    /// `n - 1` sweeps of `n` rounds each.
    pub fn tdma(n: usize) -> Result<Self, OgfError> {
        if n < 2 {
            return Err(OgfError::TooFewNodes);
        }
        Ok(Self {
            mode: GossipMode::Tdma,
            rounds: (n * (n - 1)) as u64,
        })
    }

    pub fn oracle(rounds: u64) -> Result<Self, OgfError> {
        if rounds == 0 {
            return Err(OgfError::ZeroGossipRounds);
        }
        Ok(Self {
            mode: GossipMode::Oracle,
            rounds,
        })
    }

    /// `S_n`, the length of phase 1.
    pub fn rounds(&self) -> u64 {
        self.rounds
    }
}

/// `u = ceil((S_n + b L) / (1 - rho L))`, the window length.
pub fn compute_window_bound(adv: &AdversaryType, gossip_rounds: u64) -> Result<u64, OgfError> {
    adv.require(Balance::Balanced)?;
    let b = adv.burstiness() as i64;
    let l = adv.stretch() as i64;
    let numer = Rational64::from(gossip_rounds as i64 + b * l);
    let u = (numer / (Rational64::one() - adv.load_factor()))
        .ceil()
        .to_integer();
    let lhs = Rational64::from(gossip_rounds as i64)
        + (adv.rho() * Rational64::from(u) + Rational64::from(b)) * Rational64::from(l);
    if lhs > Rational64::from(u) {
        return Err(OgfError::BoundViolated { u: u as u64 });
    }
    Ok(u as u64)
}

/// Transmitter of each phase-1 round: node `((r - 1) mod n) + 1` in round
/// `r`, for `n (n - 1)` rounds.
pub fn tdma_gossip_schedule(n: usize) -> Result<Vec<NodeId>, OgfError> {
    if n < 2 {
        return Err(OgfError::TooFewNodes);
    }
    Ok((0..n * (n - 1))
        .map(|r| NodeId::from_index(r % n))
        .collect())
}

/// Plays the TDMA schedule through the hearing rule with each node starting
/// out knowing only its own rumor. Returns, after every sweep, the set of
/// rumor origins each node knows (indexed by node).
pub fn simulate_tdma_gossip(net: &Network) -> Result<Vec<Vec<BTreeSet<NodeId>>>, OgfError> {
    let n = net.node_count();
    let schedule = tdma_gossip_schedule(n)?;
    let mut known: Vec<BTreeSet<NodeId>> = net.nodes().map(|v| BTreeSet::from([v])).collect();
    let mut sweeps = Vec::with_capacity(n - 1);
    for (r, &speaker) in schedule.iter().enumerate() {
        let mut actions = vec![Action::Listen; n];
        actions[speaker.index()] = Action::Transmit(Message {
            packet: None,
            control: known[speaker.index()].clone(),
        });
        let outcome = sim::step(net, &actions)?;
        for (v, reception) in outcome.iter() {
            if let Reception::Heard { message, .. } = reception {
                known[v.index()].extend(message.control.iter().copied());
            }
        }
        if (r + 1) % n == 0 {
            sweeps.push(known.clone());
        }
    }
    Ok(sweeps)
}

/// Everything a node derives from the gossiped old tours.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub window: u64,
    /// `L'`: links left on the longest old tour.
    pub longest: usize,
    /// `delta`: maximum degree of the old tours' conflict graph.
    pub delta: usize,
    pub coloring: Coloring,
    /// `L' (delta + 1)`, or 0 without old tours.
    pub phase2_length: u64,
}

impl WindowPlan {
    pub fn super_round_length(&self) -> u64 {
        self.delta as u64 + 1
    }
}

/// Plans phase 2 for the given old tours, each given by its remaining path.
pub fn plan_window(net: &Network, old_tours: &[Tour], window: u64) -> Result<WindowPlan, OgfError> {
    let cg = ConflictGraph::build(net, old_tours)?;
    let coloring = greedy_color_by_id(&cg);
    let longest = old_tours.iter().map(Tour::len).max().unwrap_or(0);
    let delta = cg.max_degree();
    Ok(WindowPlan {
        window,
        longest,
        delta,
        coloring,
        phase2_length: if old_tours.is_empty() {
            0
        } else {
            longest as u64 * (delta as u64 + 1)
        },
    })
}

/// Control payload of Old-Go-First messages.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum OgfControl {
    #[default]
    None,
    /// Remaining paths of old tours known to the sender.
    Rumors(Vec<Tour>),
}

/// Phase-2 decision at `offset` rounds into phase 2.
pub fn phase2_action(plan: &WindowPlan, state: &NodeState, offset: u64) -> Action<OgfControl> {
    if offset >= plan.phase2_length {
        return Action::Listen;
    }
    let color = (offset % plan.super_round_length()) as u32 + 1;
    state
        .queue()
        .keys()
        .find(|&&id| plan.coloring.color(id) == Some(color))
        .map_or(Action::Listen, |&id| Action::Transmit(Message::packet(id)))
}

/// Summary of one window's plan, recorded by every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRecord {
    pub window: u64,
    pub start: Round,
    pub old_tours: usize,
    pub longest: usize,
    pub delta: usize,
    pub colors: u32,
    pub phase2_length: u64,
}

impl WindowRecord {
    /// Whether both phases fit in the window.
    pub fn fits(&self, gossip_rounds: u64, window_length: u64) -> bool {
        gossip_rounds + self.phase2_length <= window_length
    }
}

/// Two same-colored old tours found at one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColorClash {
    pub round: Round,
    pub node: NodeId,
    pub color: u32,
}

type OracleBoard = Rc<RefCell<BTreeMap<u64, BTreeMap<TourId, Tour>>>>;

/// Old-Go-First with a fixed window length.
pub struct OldGoFirst {
    net: Arc<Network>,
    window: u64,
    gossip: GossipConfig,
    board: OracleBoard,
}

impl OldGoFirst {
    pub fn new(net: Arc<Network>, window: u64, gossip: GossipConfig) -> Result<Self, OgfError> {
        if window == 0 {
            return Err(OgfError::ZeroWindow);
        }
        Ok(Self {
            net,
            window,
            gossip,
            board: Rc::default(),
        })
    }
}

impl RoutingAlgorithm for OldGoFirst {
    type Node = OgfNode;

    fn spawn(&self, name: NodeId, n: usize) -> OgfNode {
        OgfNode {
            name,
            n,
            net: Arc::clone(&self.net),
            window: self.window,
            gossip: self.gossip,
            board: Rc::clone(&self.board),
            knowledge: BTreeMap::new(),
            plan: None,
            records: Vec::new(),
            clashes: Vec::new(),
        }
    }
}

pub struct OgfNode {
    name: NodeId,
    n: usize,
    net: Arc<Network>,
    window: u64,
    gossip: GossipConfig,
    board: OracleBoard,
    knowledge: BTreeMap<TourId, Tour>,
    plan: Option<WindowPlan>,
    records: Vec<WindowRecord>,
    clashes: Vec<ColorClash>,
}

impl OgfNode {
    pub fn records(&self) -> &[WindowRecord] {
        &self.records
    }

    pub fn clashes(&self) -> &[ColorClash] {
        &self.clashes
    }

    pub fn plan(&self) -> Option<&WindowPlan> {
        self.plan.as_ref()
    }

    fn start_window(&mut self, state: &NodeState, window: u64, start: Round) {
        self.plan = None;
        // Everything injected before this window is old from now on.
        self.knowledge = state
            .queue()
            .values()
            .filter(|r| r.tour.injected < start)
            .map(|r| (r.tour.id, r.remaining()))
            .collect();
        if self.gossip.mode == GossipMode::Oracle {
            self.board
                .borrow_mut()
                .entry(window)
                .or_default()
                .extend(self.knowledge.iter().map(|(&id, t)| (id, t.clone())));
        }
    }

    fn make_plan(&mut self, window: u64, start: Round) {
        if self.gossip.mode == GossipMode::Oracle {
            let mut board = self.board.borrow_mut();
            self.knowledge = board.get(&window).cloned().unwrap_or_default();
            // Windows before this one are never read again.
            board.retain(|&w, _| w >= window);
        }
        let tours: Vec<Tour> = self.knowledge.values().cloned().collect();
        let plan = plan_window(&self.net, &tours, window)
            .expect("gossiped tours come from validated queues");
        self.records.push(WindowRecord {
            window,
            start,
            old_tours: tours.len(),
            longest: plan.longest,
            delta: plan.delta,
            colors: plan.coloring.num_colors(),
            phase2_length: plan.phase2_length,
        });
        self.plan = Some(plan);
    }

    fn check_colors(&mut self, state: &NodeState, round: Round) {
        let Some(plan) = &self.plan else { return };
        let mut seen = BTreeSet::new();
        for id in state.queue().keys() {
            if let Some(color) = plan.coloring.color(*id) {
                if !seen.insert(color) {
                    self.clashes.push(ColorClash {
                        round,
                        node: self.name,
                        color,
                    });
                }
            }
        }
    }
}

impl NodeAlgorithm for OgfNode {
    type Control = OgfControl;

    fn on_round(&mut self, state: &NodeState, round: Round) -> Action<OgfControl> {
        let window = (round - 1) / self.window;
        let offset = (round - 1) % self.window;
        let gossip_rounds = self.gossip.rounds();
        if offset == 0 {
            self.start_window(state, window, round);
        }
        if offset < gossip_rounds {
            return match self.gossip.mode {
                GossipMode::Tdma if offset % self.n as u64 == self.name.index() as u64 => {
                    Action::Transmit(Message {
                        packet: None,
                        control: OgfControl::Rumors(self.knowledge.values().cloned().collect()),
                    })
                }
                _ => Action::Listen,
            };
        }
        if offset == gossip_rounds {
            self.make_plan(window, round - offset);
        }
        self.check_colors(state, round);
        match &self.plan {
            Some(plan) => phase2_action(plan, state, offset - gossip_rounds),
            None => Action::Listen,
        }
    }

    fn on_hear(&mut self, _state: &NodeState, _sender: NodeId, message: &Message<OgfControl>) {
        if let OgfControl::Rumors(tours) = &message.control {
            for tour in tours {
                self.knowledge
                    .entry(tour.id)
                    .or_insert_with(|| tour.clone());
            }
        }
    }
}

/// Outcome of an Old-Go-First run.
#[derive(Debug, Clone)]
pub struct OgfRun {
    pub metrics: Metrics,
    pub gossip: GossipConfig,
    pub window: u64,
    /// Window bound for the adversary, when one was given.
    pub bound: Option<u64>,
    /// Plans as recorded by node 1.
    pub windows: Vec<WindowRecord>,
    /// Whether every node recorded identical plans.
    pub plans_agree: bool,
    pub clashes: Vec<ColorClash>,
}

impl OgfRun {
    /// Windows whose two phases did not fit.
    pub fn overfull_windows(&self) -> Vec<WindowRecord> {
        self.windows
            .iter()
            .filter(|r| !r.fits(self.gossip.rounds(), self.window))
            .copied()
            .collect()
    }
}

/// Runs Old-Go-First against a balanced adversary with `w = u`, or with
/// `window_override` when given.
pub fn run_ogf(
    net: &Network,
    adv: &AdversaryType,
    gossip: GossipConfig,
    trace: &InjectionTrace,
    horizon: Round,
    window_override: Option<u64>,
) -> Result<OgfRun, OgfError> {
    let bound = compute_window_bound(adv, gossip.rounds())?;
    if let Err(violation) = verify_admissible(net, trace, adv)? {
        return Err(OgfError::Inadmissible(violation.to_string()));
    }
    let mut run = run_with_window(
        net,
        gossip,
        window_override.unwrap_or(bound),
        trace,
        horizon,
    )?;
    run.bound = Some(bound);
    Ok(run)
}

/// Runs Old-Go-First with a given window length and no requirement on the
/// traffic. Windows that overflow simply cut phase 2 short; unfinished
/// tours stay old and are planned again in the next window.
pub fn run_with_window(
    net: &Network,
    gossip: GossipConfig,
    window: u64,
    trace: &InjectionTrace,
    horizon: Round,
) -> Result<OgfRun, OgfError> {
    let algorithm = OldGoFirst::new(Arc::new(net.clone()), window, gossip)?;
    let mut sim = Simulator::new(net, &algorithm, trace.tours())?;
    sim.run_until(horizon)?;
    let (metrics, nodes) = sim.finish();
    if let Some(&unheard) = metrics.unheard_packets.first() {
        return Err(OgfError::Unheard(unheard));
    }
    let windows = nodes[0].records().to_vec();
    let plans_agree = nodes
        .iter()
        .all(|node| node.records() == windows.as_slice());
    let clashes = nodes
        .iter()
        .flat_map(|node| node.clashes().iter().copied())
        .collect();
    Ok(OgfRun {
        metrics,
        gossip,
        window,
        bound: None,
        windows,
        plans_agree,
        clashes,
    })
}
