//! Experiment scenarios shared by the CLI and the acceptance suite.
//!
//! Each scenario takes a plain config, runs the relevant modules and returns
//! a report; reading and writing files is left to the caller.

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::adversary::{
    gen_balanced, gen_unbalanced_clique, verify_admissible, AdversaryError, AdversaryType, Balance,
    InjectionTrace, Violation,
};
use crate::coloring::{
    exact_chromatic, greedy_color_by_id, optimal_sls_schedule, schedule_from_coloring,
    ColoringError, Schedule,
};
use crate::conflict::{ConflictError, ConflictGraph, Round, Tour, TourId};
use crate::net::{make_clique, make_path, make_random_connected, NetError, Network, NodeId};
use crate::ogf::{
    compute_window_bound, run_ogf, run_with_window, simulate_tdma_gossip, GossipConfig, GossipMode,
    OgfError, OgfRun,
};
use crate::sim::{self, baselines::RoundRobin, Metrics, SimError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Conflict(#[from] ConflictError),
    #[error(transparent)]
    Coloring(#[from] ColoringError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ogf(#[from] OgfError),
    #[error("{0}")]
    Usage(String),
}

/// Derives an independent seed for one named component from the run seed.
pub fn sub_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Topology generator spec: `path:<n>`, `clique:<n>` or `random:<n>:<p>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    Path(usize),
    Clique(usize),
    Random { n: usize, extra_edge_prob: f64 },
}

impl Topology {
    /// Random topologies draw from the `topology` sub-seed.
    pub fn build(&self, seed: u64) -> Result<Network, NetError> {
        match *self {
            Topology::Path(n) => make_path(n),
            Topology::Clique(n) => make_clique(n),
            Topology::Random { n, extra_edge_prob } => {
                make_random_connected(n, extra_edge_prob, sub_seed(seed, "topology"))
            }
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Path(n) => write!(f, "path:{n}"),
            Topology::Clique(n) => write!(f, "clique:{n}"),
            Topology::Random { n, extra_edge_prob } => write!(f, "random:{n}:{extra_edge_prob}"),
        }
    }
}

impl FromStr for Topology {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let usage = || {
            HarnessError::Usage(format!(
                "bad topology `{s}`: use path:<n>, clique:<n> or random:<n>:<p>"
            ))
        };
        let parts: Vec<&str> = s.split(':').collect();
        let count = |x: &str| x.parse::<usize>().map_err(|_| usage());
        match parts.as_slice() {
            ["path", n] => Ok(Topology::Path(count(n)?)),
            ["clique", n] => Ok(Topology::Clique(count(n)?)),
            ["random", n, p] => Ok(Topology::Random {
                n: count(n)?,
                extra_edge_prob: p.parse().map_err(|_| usage())?,
            }),
            _ => Err(usage()),
        }
    }
}

/// `tdma` or `oracle:<S_n>`.
pub fn parse_gossip(spec: &str, n: usize) -> Result<GossipConfig, HarnessError> {
    match spec.split_once(':') {
        None if spec == "tdma" => Ok(GossipConfig::tdma(n)?),
        Some(("oracle", rounds)) => {
            let rounds = rounds
                .parse()
                .map_err(|_| HarnessError::Usage(format!("bad gossip rounds `{rounds}`")))?;
            Ok(GossipConfig::oracle(rounds)?)
        }
        _ => Err(HarnessError::Usage(format!(
            "bad gossip `{spec}`: use tdma or oracle:<S_n>"
        ))),
    }
}

/// Inverse of [`parse_gossip`].
pub fn gossip_spec(g: &GossipConfig) -> String {
    match g.mode {
        GossipMode::Tdma => "tdma".into(),
        GossipMode::Oracle => format!("oracle:{}", g.rounds()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Bounded,
    Growing,
}

impl fmt::Display for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trend::Bounded => "bounded",
            Trend::Growing => "growing",
        })
    }
}

/// Finite-run heuristic for stability: least-squares slope of the backlog
/// over the second half of the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    pub trend: Trend,
    pub max_backlog: usize,
    pub slope: f64,
    pub threshold: f64,
    pub rounds: usize,
}

pub const DEFAULT_SLOPE_THRESHOLD: f64 = 0.01;

impl StabilityVerdict {
    pub fn assess(backlog: &[usize], threshold: f64) -> Self {
        let tail = &backlog[backlog.len() / 2..];
        let slope = if tail.len() < 2 {
            0.0
        } else {
            let n = tail.len() as f64;
            let mean_x = (n - 1.0) / 2.0;
            let mean_y = tail.iter().sum::<usize>() as f64 / n;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (i, &y) in tail.iter().enumerate() {
                let dx = i as f64 - mean_x;
                sxy += dx * (y as f64 - mean_y);
                sxx += dx * dx;
            }
            sxy / sxx
        };
        Self {
            trend: if slope > threshold {
                Trend::Growing
            } else {
                Trend::Bounded
            },
            max_backlog: backlog.iter().copied().max().unwrap_or(0),
            slope,
            threshold,
            rounds: backlog.len(),
        }
    }

    pub fn from_metrics(metrics: &Metrics) -> Self {
        let backlog: Vec<usize> = metrics.rounds.iter().map(|r| r.backlog).collect();
        Self::assess(&backlog, DEFAULT_SLOPE_THRESHOLD)
    }
}

impl fmt::Display for StabilityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (heuristic: backlog slope {:.4}/round over the last {} of {} rounds, threshold {}, max backlog {})",
            self.trend,
            self.slope,
            self.rounds - self.rounds / 2,
            self.rounds,
            self.threshold,
            self.max_backlog
        )
    }
}

/// One line of the run summary CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub n: usize,
    pub adversary: Option<AdversaryType>,
    pub u: Option<u64>,
    pub max_latency: Option<Round>,
    pub max_queue: usize,
    pub verdict: String,
}

impl Summary {
    pub const HEADER: &'static str = "scenario,seed,n,rho,b,L,u,max_latency,max_queue,verdict";

    pub fn to_csv_row(&self) -> String {
        let (rho, b, l) = match &self.adversary {
            Some(a) => (
                format!("{}/{}", a.rho().numer(), a.rho().denom()),
                a.burstiness().to_string(),
                a.stretch().to_string(),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        let opt = |x: Option<u64>| x.map_or_else(|| "none".to_string(), |v| v.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.scenario,
            self.seed,
            self.n,
            rho,
            b,
            l,
            opt(self.u),
            opt(self.max_latency),
            self.max_queue,
            self.verdict
        )
    }
}

/// Static link scheduling: chromatic number against brute-force optimum.
#[derive(Debug, Clone)]
pub struct SlsReport {
    pub tours: usize,
    pub conflict_edges: Vec<(TourId, TourId)>,
    pub chromatic: u32,
    pub optimal: Schedule,
    pub from_coloring: Schedule,
}

impl SlsReport {
    pub fn agrees(&self) -> bool {
        Round::from(self.chromatic) == self.optimal.length()
    }
}

pub fn run_sls(net: &Network, tours: &[Tour]) -> Result<SlsReport, HarnessError> {
    let optimal = optimal_sls_schedule(net, tours)?;
    let cg = ConflictGraph::build(net, tours)?;
    let chromatic = exact_chromatic(&cg)?;
    let from_coloring = schedule_from_coloring(&cg, &greedy_color_by_id(&cg))?;
    Ok(SlsReport {
        tours: tours.len(),
        conflict_edges: cg.edges(),
        chromatic,
        optimal,
        from_coloring,
    })
}

/// Algorithm driven by the clique saturator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstabilityAlgorithm {
    RoundRobin,
    /// Old-Go-First with a forced window length.
    Ogf {
        gossip: GossipConfig,
        window: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstabilityConfig {
    pub adversary: AdversaryType,
    pub n: usize,
    pub interval: u64,
    pub intervals: u64,
    pub algorithm: InstabilityAlgorithm,
}

/// Smallest interval length `t` with `(L rho - 1) t >= 1` and `rho t`
/// integral.
pub fn default_interval(adv: &AdversaryType) -> Result<u64, HarnessError> {
    adv.require(Balance::Unbalanced)?;
    let den = *adv.rho().denom() as u64;
    let surplus = adv.load_factor() - Rational64::one();
    let mut t = den;
    while surplus * Rational64::from(t as i64) < Rational64::one() {
        t += den;
    }
    Ok(t)
}

/// Packet backlog lower bound after `k` intervals of `t` rounds:
/// `floor(((L rho - 1) k t - b L) / L)`, clamped at zero.
pub fn instability_lower_bound(adv: &AdversaryType, t: u64, k: u64) -> u64 {
    let l = Rational64::from(adv.stretch() as i64);
    let b = Rational64::from(adv.burstiness() as i64);
    let surplus = (adv.load_factor() - Rational64::one()) * Rational64::from((k * t) as i64);
    let bound = ((surplus - b * l) / l).floor();
    if bound < Rational64::zero() {
        0
    } else {
        bound.to_integer() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryPoint {
    pub interval: u64,
    pub round: Round,
    pub backlog: usize,
    pub undelivered_hops: usize,
    pub bound: u64,
}

#[derive(Debug, Clone)]
pub struct InstabilityReport {
    pub config: InstabilityConfig,
    pub injected: usize,
    pub metrics: Metrics,
    pub boundaries: Vec<BoundaryPoint>,
    pub verdict: StabilityVerdict,
}

impl InstabilityReport {
    pub fn final_point(&self) -> BoundaryPoint {
        *self.boundaries.last().expect("at least one interval")
    }

    /// Every interval boundary meets the counting bound.
    pub fn meets_bound(&self) -> bool {
        self.boundaries.iter().all(|p| p.backlog as u64 >= p.bound)
    }

    /// Unfinished hops never shrink from one interval boundary to the next,
    /// once the first interval is over.
    pub fn hops_nondecreasing(&self) -> bool {
        self.boundaries
            .windows(2)
            .all(|w| w[1].undelivered_hops >= w[0].undelivered_hops)
    }

    /// Backlog sampled every `stride` interval boundaries never decreases
    /// over the second half of the run.
    pub fn backlog_eventually_nondecreasing(&self, stride: usize) -> bool {
        let half = &self.boundaries[self.boundaries.len() / 2..];
        let sampled: Vec<usize> = half
            .iter()
            .step_by(stride.max(1))
            .map(|p| p.backlog)
            .collect();
        sampled.windows(2).all(|w| w[1] >= w[0])
    }
}

pub fn run_instability(config: &InstabilityConfig) -> Result<InstabilityReport, HarnessError> {
    let adv = &config.adversary;
    let horizon = config.interval * config.intervals;
    let (net, trace) = gen_unbalanced_clique(adv, config.n, config.interval, horizon)?;
    let metrics = match config.algorithm {
        InstabilityAlgorithm::RoundRobin => sim::run(&net, &RoundRobin, trace.tours(), horizon)?,
        InstabilityAlgorithm::Ogf { gossip, window } => {
            run_with_window(&net, gossip, window, &trace, horizon)?.metrics
        }
    };
    let boundaries = (1..=config.intervals)
        .map(|k| {
            let round = k * config.interval;
            BoundaryPoint {
                interval: k,
                round,
                backlog: metrics.backlog_at(round),
                undelivered_hops: metrics.undelivered_hops_at(round),
                bound: instability_lower_bound(adv, config.interval, k),
            }
        })
        .collect();
    Ok(InstabilityReport {
        config: *config,
        injected: trace.len(),
        verdict: StabilityVerdict::from_metrics(&metrics),
        metrics,
        boundaries,
    })
}

pub struct OgfConfig {
    pub network: Network,
    pub adversary: AdversaryType,
    pub gossip: GossipConfig,
    pub window_override: Option<u64>,
    pub seed: u64,
    pub horizon: Round,
    /// Traffic to replay; generated from the `traffic` sub-seed when absent.
    pub trace: Option<InjectionTrace>,
}

#[derive(Debug, Clone)]
pub struct OgfReport {
    pub u: u64,
    pub gossip: GossipConfig,
    pub run: OgfRun,
    /// `2w` for the window actually used (`2u` by default).
    pub latency_bound: Round,
    pub horizon: Round,
    pub injected: usize,
    pub trace: InjectionTrace,
    /// Delivered tours above the latency bound, as `(id, latency)`.
    pub late: Vec<(TourId, Round)>,
    /// Undelivered tours that have been in the network longer than the
    /// latency bound at the horizon.
    pub stale: Vec<(TourId, Round)>,
}

impl OgfReport {
    pub fn ok(&self) -> bool {
        self.late.is_empty()
            && self.stale.is_empty()
            && self.run.clashes.is_empty()
            && self.run.plans_agree
    }

    pub fn max_latency(&self) -> Option<Round> {
        self.run.metrics.max_latency()
    }
}

pub fn run_ogf_scenario(config: &OgfConfig) -> Result<OgfReport, HarnessError> {
    let adv = &config.adversary;
    let u = compute_window_bound(adv, config.gossip.rounds())?;
    let trace = match &config.trace {
        Some(t) => t.clone(),
        None => gen_balanced(
            &config.network,
            adv,
            sub_seed(config.seed, "traffic"),
            config.horizon,
        )?,
    };
    let run = run_ogf(
        &config.network,
        adv,
        config.gossip,
        &trace,
        config.horizon,
        config.window_override,
    )?;
    let latency_bound = 2 * run.window;
    let late = run
        .metrics
        .deliveries
        .iter()
        .filter(|d| d.latency() > latency_bound)
        .map(|d| (d.tour, d.latency()))
        .collect();
    let stale = run
        .metrics
        .pending
        .iter()
        .filter(|(_, injected)| config.horizon - injected > latency_bound)
        .map(|&(id, injected)| (id, config.horizon - injected))
        .collect();
    Ok(OgfReport {
        u,
        gossip: config.gossip,
        injected: trace
            .tours()
            .iter()
            .filter(|t| t.injected <= config.horizon)
            .count(),
        trace,
        run,
        latency_bound,
        horizon: config.horizon,
        late,
        stale,
    })
}

/// One entry of the Old-Go-First regression matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixCase {
    pub topology: Topology,
    pub adversary: AdversaryType,
    /// `None` for TDMA gossip, otherwise the oracle's `S_n`.
    pub oracle_rounds: Option<u64>,
    pub seed: u64,
}

impl MatrixCase {
    pub fn label(&self) -> String {
        let gossip = match self.oracle_rounds {
            None => "tdma".to_string(),
            Some(s) => format!("oracle:{s}"),
        };
        format!(
            "{} adv={} gossip={} seed={}",
            self.topology, self.adversary, gossip, self.seed
        )
    }

    /// Builds the scenario with a horizon of `horizon_factor * u`.
    pub fn config(&self, horizon_factor: u64) -> Result<OgfConfig, HarnessError> {
        let network = self.topology.build(self.seed)?;
        let gossip = match self.oracle_rounds {
            None => GossipConfig::tdma(network.node_count())?,
            Some(s) => GossipConfig::oracle(s)?,
        };
        let u = compute_window_bound(&self.adversary, gossip.rounds())?;
        Ok(OgfConfig {
            network,
            adversary: self.adversary,
            gossip,
            window_override: None,
            seed: self.seed,
            horizon: horizon_factor * u,
            trace: None,
        })
    }
}

/// 24 configurations: paths, cliques and random graphs up to 12 nodes,
/// `rho L` in {1/4, 1/2, 3/4}, both gossip modes.
pub fn regression_matrix() -> Vec<MatrixCase> {
    let adv =
        |num, den, b, l| AdversaryType::from_parts(num, den, b, l).expect("valid matrix type");
    let topologies = [
        Topology::Path(5),
        Topology::Path(9),
        Topology::Clique(4),
        Topology::Clique(7),
        Topology::Random {
            n: 8,
            extra_edge_prob: 0.25,
        },
        Topology::Random {
            n: 12,
            extra_edge_prob: 0.2,
        },
    ];
    // (rho, b, L) with rho * L = 1/4, 1/2, 3/4, 1/2.
    let types = [
        adv(1, 8, 2, 2),
        adv(1, 6, 1, 3),
        adv(3, 4, 1, 1),
        adv(1, 4, 2, 2),
    ];
    let mut cases = Vec::new();
    for (i, &topology) in topologies.iter().enumerate() {
        for (j, &adversary) in types.iter().enumerate() {
            cases.push(MatrixCase {
                topology,
                adversary,
                oracle_rounds: ((i + j) % 2 == 1).then_some(2 * (i as u64 + 3)),
                seed: 1000 + (4 * i + j) as u64,
            });
        }
    }
    cases
}

/// Whether TDMA gossip spreads every rumor everywhere, and after how many
/// sweeps that first happened.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GossipCheck {
    pub n: usize,
    pub sweeps: usize,
    pub complete_after: Option<usize>,
}

impl GossipCheck {
    pub fn complete(&self) -> bool {
        self.complete_after.is_some()
    }
}

pub fn run_gossip_check(net: &Network) -> Result<GossipCheck, HarnessError> {
    let sweeps = simulate_tdma_gossip(net)?;
    let n = net.node_count();
    let complete_after = sweeps
        .iter()
        .position(|k| k.iter().all(|s| s.len() == n))
        .map(|i| i + 1);
    Ok(GossipCheck {
        n,
        sweeps: sweeps.len(),
        complete_after,
    })
}

/// Trace verification result, for the CLI.
pub fn check_trace(
    net: &Network,
    trace: &InjectionTrace,
    adv: &AdversaryType,
) -> Result<Result<(), Violation>, HarnessError> {
    Ok(verify_admissible(net, trace, adv)?)
}

/// Parses a one-link SLS instance: `t` lines as in the trace format.
pub fn parse_tours(text: &str) -> Result<Vec<Tour>, HarnessError> {
    let mut tours = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        tours.push(Tour::parse_line(line, i + 1)?);
    }
    Ok(tours)
}

/// Convenience for reports: node ids as plain integers.
pub fn names(path: &[NodeId]) -> Vec<u32> {
    path.iter().map(|v| v.get()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(sub_seed(1, "topology"), sub_seed(1, "traffic"));
        assert_eq!(sub_seed(7, "traffic"), sub_seed(7, "traffic"));
    }

    #[test]
    fn topology_spec_round_trip() {
        for s in ["path:4", "clique:6", "random:10:0.3"] {
            assert_eq!(s.parse::<Topology>().unwrap().to_string(), s);
        }
        assert!("ring:4".parse::<Topology>().is_err());
    }

    #[test]
    fn gossip_spec() {
        assert_eq!(parse_gossip("tdma", 5).unwrap().rounds(), 20);
        assert_eq!(parse_gossip("oracle:7", 5).unwrap().rounds(), 7);
        assert!(parse_gossip("oracle:x", 5).is_err());
    }

    #[test]
    fn verdict_heuristic() {
        let flat = vec![3; 100];
        assert_eq!(StabilityVerdict::assess(&flat, 0.01).trend, Trend::Bounded);
        let ramp: Vec<usize> = (0..100).collect();
        let v = StabilityVerdict::assess(&ramp, 0.01);
        assert_eq!(v.trend, Trend::Growing);
        assert!((v.slope - 1.0).abs() < 1e-9);
    }

    #[test]
    fn instability_bound_arithmetic() {
        let adv = AdversaryType::from_parts(1, 2, 1, 3).unwrap();
        assert_eq!(instability_lower_bound(&adv, 2, 1000), 332);
        assert_eq!(instability_lower_bound(&adv, 2, 1), 0);
        assert_eq!(default_interval(&adv).unwrap(), 2);
        let balanced = AdversaryType::from_parts(1, 4, 1, 3).unwrap();
        assert!(default_interval(&balanced).is_err());
    }

    #[test]
    fn matrix_shape() {
        let m = regression_matrix();
        assert!(m.len() >= 20);
        assert!(m.iter().any(|c| c.oracle_rounds.is_none()));
        assert!(m.iter().any(|c| c.oracle_rounds.is_some()));
    }

    #[test]
    fn summary_row() {
        let s = Summary {
            scenario: "ogf".into(),
            seed: 3,
            n: 4,
            adversary: Some(AdversaryType::from_parts(1, 8, 1, 2).unwrap()),
            u: Some(19),
            max_latency: None,
            max_queue: 0,
            verdict: "ok".into(),
        };
        assert_eq!(s.to_csv_row(), "ogf,3,4,1/8,1,2,19,none,0,ok");
    }
}
