//! Conflict-graph coloring and static link scheduling.
//!
//! A one-link tour set can be routed in `T` rounds exactly when its conflict
//! graph has a proper `T`-coloring: color classes are the sets of tours
//! sent together. [`optimal_sls_length`] finds the optimum by searching
//! schedules against the hearing rule directly, so it can be compared with
//! [`exact_chromatic`] as an independent route.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::conflict::{ConflictError, ConflictGraph, Round, Tour, TourId};
use crate::net::Network;
use crate::sim::{self, Action, Message, Reception, SimError};

/// Vertex cap for [`exact_chromatic`].
pub const DEFAULT_EXACT_CAP: usize = 16;

/// Tour cap for [`optimal_sls_length`].
pub const MAX_SLS_TOURS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ColoringError {
    #[error("vertex order is not a permutation of the graph's vertices")]
    NotAPermutation,
    #[error("graph has {vertices} vertices, over the exact-search cap of {cap}")]
    TooLarge { vertices: usize, cap: usize },
    #[error("coloring is not proper: tours {0} and {1} conflict but share color")]
    Improper(TourId, TourId),
    #[error("coloring does not cover the graph's vertices")]
    Incomplete,
    #[error("tour {tour} has {links} links; link scheduling needs exactly one")]
    NotOneLink { tour: TourId, links: usize },
    #[error("tour {0} has no scheduled round")]
    Unscheduled(TourId),
    #[error("{0} tours exceed the brute-force limit of {MAX_SLS_TOURS}")]
    TooManyTours(usize),
    #[error(transparent)]
    Conflict(#[from] ConflictError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Colors are `1..=num_colors`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Coloring {
    colors: BTreeMap<TourId, u32>,
    num_colors: u32,
}

impl Coloring {
    /// Wraps an arbitrary assignment; `num_colors` is its largest color.
    pub fn from_assignment(colors: BTreeMap<TourId, u32>) -> Self {
        let num_colors = colors.values().copied().max().unwrap_or(0);
        Self { colors, num_colors }
    }

    pub fn color(&self, tour: TourId) -> Option<u32> {
        self.colors.get(&tour).copied()
    }

    pub fn num_colors(&self) -> u32 {
        self.num_colors
    }

    pub fn assignment(&self) -> &BTreeMap<TourId, u32> {
        &self.colors
    }

    /// Covers exactly the graph's vertices and separates every edge.
    pub fn check_proper(&self, cg: &ConflictGraph) -> Result<(), ColoringError> {
        if self.colors.len() != cg.len()
            || cg.vertices().iter().any(|v| !self.colors.contains_key(v))
        {
            return Err(ColoringError::Incomplete);
        }
        match cg
            .edges()
            .into_iter()
            .find(|(a, b)| self.colors[a] == self.colors[b])
        {
            Some((a, b)) => Err(ColoringError::Improper(a, b)),
            None => Ok(()),
        }
    }
}

/// First-fit coloring in the given vertex order: each vertex takes the
/// smallest color not used by an already colored neighbor. Uses at most
/// `max_degree + 1` colors.
pub fn greedy_color(cg: &ConflictGraph, order: &[TourId]) -> Result<Coloring, ColoringError> {
    let mut seen = vec![false; cg.len()];
    let mut indices = Vec::with_capacity(order.len());
    for &id in order {
        match cg.index_of(id) {
            Some(i) if !seen[i] => {
                seen[i] = true;
                indices.push(i);
            }
            _ => return Err(ColoringError::NotAPermutation),
        }
    }
    if indices.len() != cg.len() {
        return Err(ColoringError::NotAPermutation);
    }

    let mut color = vec![0u32; cg.len()];
    let mut taken = vec![false; cg.max_degree() + 2];
    for i in indices {
        for &j in cg.neighbor_indices(i) {
            if color[j] > 0 {
                taken[color[j] as usize] = true;
            }
        }
        let c = (1..taken.len()).find(|&c| !taken[c]).expect("degree bound");
        color[i] = c as u32;
        for &j in cg.neighbor_indices(i) {
            taken[color[j] as usize] = false;
        }
    }
    Ok(Coloring::from_assignment(
        cg.vertices().iter().copied().zip(color).collect(),
    ))
}

/// First-fit in ascending tour-id order.
pub fn greedy_color_by_id(cg: &ConflictGraph) -> Coloring {
    greedy_color(cg, cg.vertices()).expect("vertex list is a permutation")
}

/// Chromatic number by branch and bound, for graphs up to
/// [`DEFAULT_EXACT_CAP`] vertices.
pub fn exact_chromatic(cg: &ConflictGraph) -> Result<u32, ColoringError> {
    exact_chromatic_capped(cg, DEFAULT_EXACT_CAP)
}

pub fn exact_chromatic_capped(cg: &ConflictGraph, cap: usize) -> Result<u32, ColoringError> {
    let n = cg.len();
    if n > cap {
        return Err(ColoringError::TooLarge { vertices: n, cap });
    }
    if n == 0 {
        return Ok(0);
    }
    // Highest degree first tends to fail early.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(cg.neighbor_indices(i).len()));

    let lower = greedy_clique(cg, &order);
    let upper = greedy_color(
        cg,
        &order.iter().map(|&i| cg.vertices()[i]).collect::<Vec<_>>(),
    )?
    .num_colors();
    if lower == upper {
        return Ok(upper);
    }

    let mut search = Search {
        cg,
        order: &order,
        color: vec![0; n],
        best: upper,
        lower,
    };
    search.extend(0, 0);
    Ok(search.best)
}

fn greedy_clique(cg: &ConflictGraph, order: &[usize]) -> u32 {
    let mut best = 1;
    for &start in order {
        let mut clique = vec![start];
        for &v in order {
            if v != start
                && clique
                    .iter()
                    .all(|&c| cg.neighbor_indices(v).binary_search(&c).is_ok())
            {
                clique.push(v);
            }
        }
        best = best.max(clique.len() as u32);
    }
    best
}

struct Search<'a> {
    cg: &'a ConflictGraph,
    order: &'a [usize],
    color: Vec<u32>,
    best: u32,
    lower: u32,
}

impl Search<'_> {
    fn extend(&mut self, depth: usize, used: u32) {
        if self.best == self.lower {
            return;
        }
        if depth == self.order.len() {
            self.best = used;
            return;
        }
        let v = self.order[depth];
        // Colors beyond used + 1 are symmetric to used + 1.
        for c in 1..=(used + 1).min(self.best - 1) {
            if self
                .cg
                .neighbor_indices(v)
                .iter()
                .any(|&u| self.color[u] == c)
            {
                continue;
            }
            self.color[v] = c;
            self.extend(depth + 1, used.max(c));
            self.color[v] = 0;
            if self.best == self.lower {
                return;
            }
        }
    }
}

/// Round assigned to each tour; `length` is the largest assigned round.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schedule {
    rounds: BTreeMap<TourId, Round>,
    length: Round,
}

impl Schedule {
    pub fn from_assignment(rounds: BTreeMap<TourId, Round>) -> Self {
        let length = rounds.values().copied().max().unwrap_or(0);
        Self { rounds, length }
    }

    pub fn round_of(&self, tour: TourId) -> Option<Round> {
        self.rounds.get(&tour).copied()
    }

    pub fn length(&self) -> Round {
        self.length
    }

    pub fn assignment(&self) -> &BTreeMap<TourId, Round> {
        &self.rounds
    }
}

/// Tours of color `i` go out in round `i`.
pub fn schedule_from_coloring(
    cg: &ConflictGraph,
    coloring: &Coloring,
) -> Result<Schedule, ColoringError> {
    coloring.check_proper(cg)?;
    Ok(Schedule::from_assignment(
        coloring
            .assignment()
            .iter()
            .map(|(&t, &c)| (t, Round::from(c)))
            .collect(),
    ))
}

fn check_one_link(tours: &[Tour]) -> Result<(), ColoringError> {
    match tours.iter().find(|t| t.len() != 1) {
        Some(t) => Err(ColoringError::NotOneLink {
            tour: t.id,
            links: t.len(),
        }),
        None => Ok(()),
    }
}

/// Whether sending all of `batch` in one round, everyone else listening,
/// gets every packet heard at its head.
fn round_delivers(net: &Network, batch: &[&Tour]) -> Result<bool, ColoringError> {
    let mut actions = vec![Action::<()>::Listen; net.node_count()];
    for tour in batch {
        let slot = &mut actions[tour.source().index()];
        if matches!(slot, Action::Transmit(_)) {
            // One node, one message per round.
            return Ok(false);
        }
        *slot = Action::Transmit(Message::packet(tour.id));
    }
    let outcome = sim::step(net, &actions)?;
    Ok(batch.iter().all(|tour| {
        matches!(
            outcome.at(tour.destination()),
            Reception::Heard { sender, message }
                if *sender == tour.source() && message.packet == Some(tour.id)
        )
    }))
}

/// Plays the schedule round by round through the hearing rule.
pub fn verify_schedule(
    net: &Network,
    tours: &[Tour],
    schedule: &Schedule,
) -> Result<bool, ColoringError> {
    check_one_link(tours)?;
    for tour in tours {
        tour.validate(net)?;
    }
    let mut by_round: BTreeMap<Round, Vec<&Tour>> = BTreeMap::new();
    for tour in tours {
        let round = schedule
            .round_of(tour.id)
            .ok_or(ColoringError::Unscheduled(tour.id))?;
        by_round.entry(round).or_default().push(tour);
    }
    for batch in by_round.values() {
        if !round_delivers(net, batch)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Fewest rounds in which the one-link `tours` can all be delivered, with a
/// schedule achieving it. Exhaustive over all partitions of the tours into
/// rounds; at most [`MAX_SLS_TOURS`] tours.
pub fn optimal_sls_schedule(net: &Network, tours: &[Tour]) -> Result<Schedule, ColoringError> {
    if tours.len() > MAX_SLS_TOURS {
        return Err(ColoringError::TooManyTours(tours.len()));
    }
    check_one_link(tours)?;
    for tour in tours {
        tour.validate(net)?;
    }
    let m = tours.len();
    let full = (1usize << m) - 1;

    // Which subsets can share a single round.
    let mut feasible = vec![false; full + 1];
    for (mask, ok) in feasible.iter_mut().enumerate().skip(1) {
        let batch: Vec<&Tour> = (0..m)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| &tours[i])
            .collect();
        *ok = round_delivers(net, &batch)?;
    }

    // rounds[mask]: fewest rounds for the tours in `mask`. The block holding
    // the lowest tour is fixed first, which covers every partition once.
    let mut rounds = vec![usize::MAX; full + 1];
    let mut choice = vec![0usize; full + 1];
    rounds[0] = 0;
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let block = sub | low;
            if feasible[block] && rounds[mask ^ block] != usize::MAX {
                let cand = rounds[mask ^ block] + 1;
                if cand < rounds[mask] {
                    rounds[mask] = cand;
                    choice[mask] = block;
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }

    let mut assignment = BTreeMap::new();
    let mut mask = full;
    let mut round = 1;
    while mask != 0 {
        let block = choice[mask];
        for i in (0..m).filter(|i| block >> i & 1 == 1) {
            assignment.insert(tours[i].id, round);
        }
        mask ^= block;
        round += 1;
    }
    Ok(Schedule::from_assignment(assignment))
}

pub fn optimal_sls_length(net: &Network, tours: &[Tour]) -> Result<Round, ColoringError> {
    optimal_sls_schedule(net, tours).map(|s| s.length())
}
