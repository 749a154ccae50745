//! Slow reference implementations used as oracles by the integration tests.
#![allow(dead_code)]

use num_rational::Rational64;
use radio_route::adversary::{AdversaryType, InjectionTrace};
use radio_route::{Network, NodeId, Tour, TourId};
use rand::seq::IndexedRandom;
use rand::Rng;

pub fn id(v: u32) -> NodeId {
    NodeId::new(v).unwrap()
}

/// Every labelled connected graph on `n` nodes.
pub fn connected_graphs(n: usize) -> Vec<Network> {
    let pairs: Vec<(u32, u32)> = (1..=n as u32)
        .flat_map(|u| (u + 1..=n as u32).map(move |v| (u, v)))
        .collect();
    (0u32..1 << pairs.len())
        .filter_map(|mask| {
            let edges: Vec<(u32, u32)> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &e)| e)
                .collect();
            Network::new(n, &edges).ok()
        })
        .collect()
}

/// Node `w` conflicts with link `tail -> head`, straight from the definition.
pub fn node_hits_link(net: &Network, w: NodeId, tail: NodeId, head: NodeId) -> bool {
    w == tail || w == head || net.is_adjacent(w, head)
}

pub fn node_hits_tour(net: &Network, w: NodeId, tour: &Tour) -> bool {
    tour.path()
        .windows(2)
        .any(|l| node_hits_link(net, w, l[0], l[1]))
}

pub fn reference_conflict(net: &Network, a: &Tour, b: &Tour) -> bool {
    let shares = a.path().iter().any(|v| b.path().contains(v));
    let tails = |t: &Tour| t.path()[..t.path().len() - 1].to_vec();
    shares
        || tails(a).iter().any(|&w| node_hits_tour(net, w, b))
        || tails(b).iter().any(|&w| node_hits_tour(net, w, a))
}

/// What a node receives when exactly the nodes flagged in `transmitting`
/// transmit: `Some(Some(s))` hears `s`, `Some(None)` collision, `None`
/// silence.
pub fn hearing_rule(net: &Network, transmitting: &[bool], v: NodeId) -> Option<Option<NodeId>> {
    if transmitting[v.index()] {
        return None;
    }
    let senders: Vec<NodeId> = net
        .nodes()
        .filter(|&w| w != v && net.is_adjacent(w, v) && transmitting[w.index()])
        .collect();
    match senders.as_slice() {
        [] => None,
        [s] => Some(Some(*s)),
        _ => Some(None),
    }
}

/// Checks every interval `[first, last]` within the horizon at every node.
pub fn slow_admissible(net: &Network, trace: &InjectionTrace, adv: &AdversaryType) -> bool {
    if trace.tours().iter().any(|t| t.len() > adv.stretch()) {
        return false;
    }
    let horizon = trace.horizon() as usize;
    for v in net.nodes() {
        // count[r] = conflicting injections in rounds 1..=r.
        let mut count = vec![0i64; horizon + 1];
        for t in trace.tours().iter().filter(|t| node_hits_tour(net, v, t)) {
            count[t.injected as usize] += 1;
        }
        for r in 1..=horizon {
            count[r] += count[r - 1];
        }
        for first in 1..=horizon {
            for last in first..=horizon {
                let load = count[last] - count[first - 1];
                let budget = adv.rho() * Rational64::from((last - first + 1) as i64)
                    + Rational64::from(adv.burstiness() as i64);
                if Rational64::from(load) > budget {
                    return false;
                }
            }
        }
    }
    true
}

/// Every simple path with between 1 and `max_links` links.
pub fn simple_paths(net: &Network, max_links: usize) -> Vec<Vec<NodeId>> {
    fn extend(net: &Network, path: &mut Vec<NodeId>, max_links: usize, out: &mut Vec<Vec<NodeId>>) {
        if path.len() > 1 {
            out.push(path.clone());
        }
        if path.len() > max_links {
            return;
        }
        let last = *path.last().unwrap();
        for &w in net.neighbors(last).unwrap() {
            if !path.contains(&w) {
                path.push(w);
                extend(net, path, max_links, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    for v in net.nodes() {
        extend(net, &mut vec![v], max_links, &mut out);
    }
    out
}

/// Random simple path of between 1 and `max_links` links.
pub fn random_path<R: Rng>(net: &Network, max_links: usize, rng: &mut R) -> Vec<NodeId> {
    let nodes: Vec<NodeId> = net.nodes().collect();
    let mut path = vec![*nodes.choose(rng).unwrap()];
    let target = rng.random_range(1..=max_links);
    while path.len() <= target {
        let last = *path.last().unwrap();
        let next: Vec<NodeId> = net
            .neighbors(last)
            .unwrap()
            .iter()
            .copied()
            .filter(|w| !path.contains(w))
            .collect();
        match next.choose(rng) {
            Some(&w) => path.push(w),
            None => break,
        }
    }
    if path.len() == 1 {
        path.push(net.neighbors(path[0]).unwrap()[0]);
    }
    path
}

pub fn random_tour<R: Rng>(
    net: &Network,
    id: u64,
    round: u64,
    max_links: usize,
    rng: &mut R,
) -> Tour {
    Tour::new(TourId(id), round, random_path(net, max_links, rng)).unwrap()
}
