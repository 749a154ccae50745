//! Small hand-built instances shared by tests, examples and the CLI.

use crate::conflict::Tour;
use crate::net::{Network, NodeId};

/// Four-tour example network.
///
/// Nodes: `r = 1`, `s = 2`, `u = 3`, `w = 4`, `x = 5`; the cycle
/// `r - s - u - w - r` plus a pendant `x - u`.
///
/// * `f1 = <x, u, s>` shares `s` with `f2` and `u` with `f3`, and its link
///   `u -> s` conflicts with `r`, the start of `f4`.
/// * `f2 = <r, s>` and `f3 = <w, u>` share no node; only their destinations
///   `s` and `u` conflict with the other tour.
/// * `f4 = <r, w>` shares `r` with `f2` and `w` with `f3`.
#[derive(Debug, Clone)]
pub struct Figure1 {
    pub network: Network,
    pub r: NodeId,
    pub s: NodeId,
    pub u: NodeId,
    pub w: NodeId,
    pub x: NodeId,
    /// `f1..f4`, with tour ids `1..=4`, all injected in round 1.
    pub tours: [Tour; 4],
}

pub fn figure1() -> Figure1 {
    let network = Network::new(5, &[(1, 2), (2, 3), (3, 4), (4, 1), (5, 3)])
        .expect("fixture network is valid");
    let tour = |id, names: &[u32]| Tour::from_names(id, 1, names).expect("fixture tour is valid");
    let node = |v| NodeId::new(v).expect("fixture node is valid");
    Figure1 {
        network,
        r: node(1),
        s: node(2),
        u: node(3),
        w: node(4),
        x: node(5),
        tours: [
            tour(1, &[5, 3, 2]),
            tour(2, &[1, 2]),
            tour(3, &[4, 3]),
            tour(4, &[1, 4]),
        ],
    }
}

/// The same instance with `f1` cut down to its last link `u -> s`, so every
/// tour is a single link.
pub fn figure1_one_link() -> (Network, Vec<Tour>) {
    let fig = figure1();
    let mut tours = fig.tours.to_vec();
    tours[0] = Tour::from_names(1, 1, &[3, 2]).expect("fixture tour is valid");
    (fig.network, tours)
}
