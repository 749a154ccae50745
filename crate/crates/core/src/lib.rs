//! Packet routing in multi-hop radio networks under adversarial injection.
//!
//! The crate models a synchronous radio network, the conflict relation
//! between tours, static link scheduling by coloring, the `(rho, b, L)`
//! adversary, a round-based simulator and the Old-Go-First algorithm.

pub mod adversary;
pub mod coloring;
pub mod conflict;
pub mod fixtures;
pub mod harness;
pub mod net;
pub mod ogf;
pub mod sim;

pub use adversary::{AdversaryType, Balance, InjectionTrace, Violation};
pub use conflict::{ConflictGraph, Round, Tour, TourId};
pub use net::{Link, Network, NodeId};
pub use sim::{Metrics, Simulator};
