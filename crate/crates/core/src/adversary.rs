//! Adversarial traffic of type `(rho, b, L)`.
//!
//! For every node `v` and every interval of rounds, the number of injected
//! tours that `v` conflicts with (the load of `v`) is at most
//! `rho * |interval| + b`, where `|interval|` counts rounds. No tour has
//! more than `L` links. All budget arithmetic is exact.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::conflict::{ConflictError, Round, Tour, TourFootprint, TourId};
use crate::net::{make_clique, NetError, Network, NodeId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdversaryError {
    #[error("injection rate {0} outside [0, 1]")]
    InvalidRate(Rational64),
    #[error("burstiness must be at least 1")]
    InvalidBurstiness,
    #[error("stretch must be at least 1")]
    InvalidStretch,
    #[error("adversary {adv} is {class}, expected {expected}")]
    WrongClass {
        adv: AdversaryType,
        class: Balance,
        expected: Balance,
    },
    #[error("clique needs more than L = {stretch} nodes, got {n}")]
    CliqueTooSmall { n: usize, stretch: usize },
    #[error("interval length {t} too short: (L*rho - 1) * t = {surplus} < 1")]
    IntervalTooShort { t: u64, surplus: Rational64 },
    #[error("interval [{0}, {1}] is empty")]
    EmptyInterval(Round, Round),
    #[error("could not place {missing} tours within interval {interval}")]
    Unplaceable { interval: u64, missing: u64 },
    #[error(transparent)]
    Tour(#[from] ConflictError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Balance {
    /// `rho * L < 1`
    Balanced,
    /// `rho * L > 1`
    Unbalanced,
    /// `rho * L = 1`; neither theorem speaks about it.
    Critical,
}

impl fmt::Display for Balance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Balance::Balanced => "balanced",
            Balance::Unbalanced => "unbalanced",
            Balance::Critical => "critical",
        })
    }
}

/// Injection rate, burstiness and stretch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AdversaryType {
    rho: Rational64,
    burstiness: u64,
    stretch: usize,
}

impl AdversaryType {
    pub fn new(rho: Rational64, burstiness: u64, stretch: usize) -> Result<Self, AdversaryError> {
        if rho < Rational64::zero() || rho > Rational64::one() {
            return Err(AdversaryError::InvalidRate(rho));
        }
        if burstiness < 1 {
            return Err(AdversaryError::InvalidBurstiness);
        }
        if stretch < 1 {
            return Err(AdversaryError::InvalidStretch);
        }
        Ok(Self {
            rho,
            burstiness,
            stretch,
        })
    }

    /// `rho = num / den`.
    pub fn from_parts(
        num: i64,
        den: i64,
        burstiness: u64,
        stretch: usize,
    ) -> Result<Self, AdversaryError> {
        if den == 0 {
            return Err(AdversaryError::InvalidRate(Rational64::zero()));
        }
        Self::new(Rational64::new(num, den), burstiness, stretch)
    }

    pub fn rho(&self) -> Rational64 {
        self.rho
    }

    pub fn burstiness(&self) -> u64 {
        self.burstiness
    }

    pub fn stretch(&self) -> usize {
        self.stretch
    }

    /// `rho * L`
    pub fn load_factor(&self) -> Rational64 {
        self.rho * Rational64::from(self.stretch as i64)
    }

    pub fn classify(&self) -> Balance {
        match self.load_factor().cmp(&Rational64::one()) {
            Ordering::Less => Balance::Balanced,
            Ordering::Greater => Balance::Unbalanced,
            Ordering::Equal => Balance::Critical,
        }
    }

    pub fn require(&self, expected: Balance) -> Result<(), AdversaryError> {
        let class = self.classify();
        if class == expected {
            Ok(())
        } else {
            Err(AdversaryError::WrongClass {
                adv: *self,
                class,
                expected,
            })
        }
    }

    /// `rho * rounds + b`
    pub fn budget(&self, rounds: u64) -> Rational64 {
        self.rho * Rational64::from(rounds as i64) + Rational64::from(self.burstiness as i64)
    }
}

impl fmt::Display for AdversaryType {
    /// `<num>/<den>:<b>:<L>`, the CLI syntax.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}:{}:{}",
            self.rho.numer(),
            self.rho.denom(),
            self.burstiness,
            self.stretch
        )
    }
}

impl FromStr for AdversaryType {
    type Err = AdversaryError;

    /// Parses `<num>/<den>:<b>:<L>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |message: &str| AdversaryError::Parse {
            line: 0,
            message: format!("{message} in adversary `{s}`"),
        };
        let parts: Vec<&str> = s.split(':').collect();
        let [rho, b, l] = parts.as_slice() else {
            return Err(err("expected <num>/<den>:<b>:<L>"));
        };
        let (num, den) = rho.split_once('/').unwrap_or((rho, "1"));
        let num: i64 = num.parse().map_err(|_| err("bad rate numerator"))?;
        let den: i64 = den.parse().map_err(|_| err("bad rate denominator"))?;
        let b: u64 = b.parse().map_err(|_| err("bad burstiness"))?;
        let l: usize = l.parse().map_err(|_| err("bad stretch"))?;
        AdversaryType::from_parts(num, den, b, l)
    }
}

/// Injected tours in round order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InjectionTrace {
    tours: Vec<Tour>,
    horizon: Round,
}

impl InjectionTrace {
    /// Sorts by `(injection round, id)` and rejects duplicate ids. The
    /// horizon is raised to the last injection round if needed.
    pub fn new(mut tours: Vec<Tour>, horizon: Round) -> Result<Self, AdversaryError> {
        tours.sort_by_key(|t| (t.injected, t.id));
        let mut ids: Vec<TourId> = tours.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(ConflictError::DuplicateTour(w[0]).into());
        }
        let last = tours.last().map_or(0, |t| t.injected);
        Ok(Self {
            tours,
            horizon: horizon.max(last),
        })
    }

    pub fn tours(&self) -> &[Tour] {
        &self.tours
    }

    pub fn horizon(&self) -> Round {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.tours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tours.is_empty()
    }

    /// Header `adv <num>/<den> <b> <L>` followed by one `t` line per tour.
    pub fn to_text(&self, adv: &AdversaryType) -> String {
        let mut out = format!(
            "adv {}/{} {} {}\n",
            adv.rho.numer(),
            adv.rho.denom(),
            adv.burstiness,
            adv.stretch
        );
        for tour in &self.tours {
            out.push_str(&tour.to_line());
            out.push('\n');
        }
        out
    }

    /// Reads the format written by [`InjectionTrace::to_text`]. Blank lines
    /// and `#` comments are skipped. Tour lines may come in any order.
    pub fn parse(text: &str) -> Result<(AdversaryType, Self), AdversaryError> {
        let mut adv = None;
        let mut tours = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| AdversaryError::Parse {
                line: lineno,
                message,
            };
            if let Some(rest) = line.strip_prefix("adv ") {
                if adv.is_some() {
                    return Err(err("repeated `adv` header".into()));
                }
                let fields: Vec<&str> = rest.split_whitespace().collect();
                let [rho, b, l] = fields.as_slice() else {
                    return Err(err("expected `adv <num>/<den> <b> <L>`".into()));
                };
                adv = Some(
                    format!("{rho}:{b}:{l}")
                        .parse::<AdversaryType>()
                        .map_err(|e| err(e.to_string()))?,
                );
                continue;
            }
            if adv.is_none() {
                return Err(err("tour line before `adv` header".into()));
            }
            tours.push(Tour::parse_line(line, lineno)?);
        }
        let adv = adv.ok_or(AdversaryError::Parse {
            line: 0,
            message: "missing `adv` header".into(),
        })?;
        Ok((adv, InjectionTrace::new(tours, 0)?))
    }
}

/// Injection rounds of the tours each node conflicts with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadLedger {
    rounds: Vec<Vec<Round>>,
}

impl LoadLedger {
    pub fn new(net: &Network, trace: &InjectionTrace) -> Result<Self, AdversaryError> {
        let mut rounds = vec![Vec::new(); net.node_count()];
        for tour in trace.tours() {
            tour.validate(net)?;
            for v in TourFootprint::new(net, tour).conflicting_nodes().iter() {
                rounds[v.index()].push(tour.injected);
            }
        }
        for list in &mut rounds {
            list.sort_unstable();
        }
        Ok(Self { rounds })
    }

    /// Sorted injection rounds of the tours `v` conflicts with.
    pub fn rounds_of(&self, v: NodeId) -> &[Round] {
        &self.rounds[v.index()]
    }

    /// Load of `v` in the interval `[first, last]`.
    pub fn node_load(&self, v: NodeId, first: Round, last: Round) -> Result<usize, AdversaryError> {
        if first > last {
            return Err(AdversaryError::EmptyInterval(first, last));
        }
        let list = self.rounds.get(v.index()).ok_or(NetError::InvalidNode {
            node: v.get(),
            n: self.rounds.len(),
        })?;
        let lo = list.partition_point(|&r| r < first);
        let hi = list.partition_point(|&r| r <= last);
        Ok(hi - lo)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Stretch {
        tour: TourId,
        links: usize,
        limit: usize,
    },
    Load {
        node: NodeId,
        first: Round,
        last: Round,
        load: usize,
        budget: Rational64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Stretch { tour, links, limit } => {
                write!(f, "stretch: tour {tour} has {links} links, limit {limit}")
            }
            Violation::Load {
                node,
                first,
                last,
                load,
                budget,
            } => write!(
                f,
                "load: node {node} in [{first}, {last}] has load {load} > budget {budget}"
            ),
        }
    }
}

/// Checks a trace against an adversary type.
///
/// Only intervals that start and end at injection rounds of tours
/// conflicting with the node are inspected: moving an endpoint inward to
/// the nearest such round keeps the load and shrinks the budget.
pub fn verify_admissible(
    net: &Network,
    trace: &InjectionTrace,
    adv: &AdversaryType,
) -> Result<Result<(), Violation>, AdversaryError> {
    for tour in trace.tours() {
        tour.validate(net)?;
    }
    if let Some(tour) = trace.tours().iter().find(|t| t.len() > adv.stretch) {
        return Ok(Err(Violation::Stretch {
            tour: tour.id,
            links: tour.len(),
            limit: adv.stretch,
        }));
    }
    let ledger = LoadLedger::new(net, trace)?;
    for v in net.nodes() {
        // Distinct rounds with cumulative counts.
        let mut distinct: Vec<(Round, usize)> = Vec::new();
        for &r in ledger.rounds_of(v) {
            match distinct.last_mut() {
                Some((last, count)) if *last == r => *count += 1,
                _ => distinct.push((r, 1)),
            }
        }
        let mut prefix = vec![0usize; distinct.len() + 1];
        for (i, &(_, c)) in distinct.iter().enumerate() {
            prefix[i + 1] = prefix[i] + c;
        }
        let (num, den) = (*adv.rho.numer() as i128, *adv.rho.denom() as i128);
        let b = adv.burstiness as i128;
        for i in 0..distinct.len() {
            for j in i..distinct.len() {
                let (first, last) = (distinct[i].0, distinct[j].0);
                let load = prefix[j + 1] - prefix[i];
                // load > rho * len + b, cross-multiplied by den > 0
                if load as i128 * den > num * (last - first + 1) as i128 + b * den {
                    let budget = adv.budget(last - first + 1);
                    return Ok(Err(Violation::Load {
                        node: v,
                        first,
                        last,
                        load,
                        budget,
                    }));
                }
            }
        }
    }
    Ok(Ok(()))
}

/// Leaky-bucket state per node: the maximum over all intervals ending at
/// the current round of `load - rho * |interval|`. The interval constraint
/// holds up to the current round iff every bucket stays at or below `b`.
struct Buckets {
    level: Vec<Rational64>,
    rho: Rational64,
    cap: Rational64,
}

impl Buckets {
    fn new(n: usize, adv: &AdversaryType) -> Self {
        Self {
            level: vec![Rational64::zero(); n],
            rho: adv.rho,
            cap: Rational64::from(adv.burstiness as i64),
        }
    }

    /// Moves to the next round with no injections yet.
    fn tick(&mut self) {
        for level in &mut self.level {
            *level = (*level).max(Rational64::zero()) - self.rho;
        }
    }

    fn admits(&self, nodes: &[NodeId]) -> bool {
        nodes
            .iter()
            .all(|v| self.level[v.index()] + Rational64::one() <= self.cap)
    }

    fn charge(&mut self, nodes: &[NodeId]) {
        for v in nodes {
            self.level[v.index()] += Rational64::one();
        }
    }
}

/// Random simple path from `source` with between 1 and `max_links` links.
fn random_path(net: &Network, source: NodeId, max_links: usize, rng: &mut impl Rng) -> Vec<NodeId> {
    let target = rng.random_range(1..=max_links);
    let mut path = vec![source];
    while path.len() <= target {
        let last = path[path.len() - 1];
        let free: Vec<NodeId> = net
            .neighbors_of(last)
            .iter()
            .copied()
            .filter(|v| !path.contains(v))
            .collect();
        match free.as_slice() {
            [] => break,
            _ => path.push(free[rng.random_range(0..free.len())]),
        }
    }
    path
}

/// Greedy admissible traffic for a balanced adversary.
///
/// Every round, each node in a freshly shuffled order proposes one tour
/// along a random simple path of at most `L` links. A proposal is injected
/// only if every node conflicting with it keeps its bucket within `b`, so
/// the result always passes [`verify_admissible`].
pub fn gen_balanced(
    net: &Network,
    adv: &AdversaryType,
    seed: u64,
    horizon: Round,
) -> Result<InjectionTrace, AdversaryError> {
    adv.require(Balance::Balanced)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buckets = Buckets::new(net.node_count(), adv);
    let mut order: Vec<NodeId> = net.nodes().collect();
    let mut tours = Vec::new();
    for round in 1..=horizon {
        buckets.tick();
        order.shuffle(&mut rng);
        for &source in &order {
            let path = random_path(net, source, adv.stretch, &mut rng);
            let tour = Tour::new(TourId(tours.len() as u64 + 1), round, path)?;
            let hit: Vec<NodeId> = TourFootprint::new(net, &tour)
                .conflicting_nodes()
                .iter()
                .collect();
            if buckets.admits(&hit) {
                buckets.charge(&hit);
                tours.push(tour);
            }
        }
    }
    InjectionTrace::new(tours, horizon)
}

/// Clique saturation traffic for an unbalanced adversary.
///
/// Rounds are cut into consecutive intervals of `t` rounds. The first
/// interval carries `floor(rho * t) + b` tours and every later one
/// `floor(rho * t)`, each tour a simple path of exactly `L` links. Within an
/// interval each tour goes out as early as the load constraint allows. On a
/// clique every tour loads every node, so this is the fastest admissible
/// pace.
pub fn gen_unbalanced_clique(
    adv: &AdversaryType,
    n: usize,
    t: u64,
    horizon: Round,
) -> Result<(Network, InjectionTrace), AdversaryError> {
    adv.require(Balance::Unbalanced)?;
    if n <= adv.stretch {
        return Err(AdversaryError::CliqueTooSmall {
            n,
            stretch: adv.stretch,
        });
    }
    let surplus = (adv.load_factor() - Rational64::one()) * Rational64::from(t as i64);
    if surplus < Rational64::one() {
        return Err(AdversaryError::IntervalTooShort { t, surplus });
    }
    let net = make_clique(n)?;
    let everyone: Vec<NodeId> = net.nodes().collect();
    let per_interval = (adv.rho * Rational64::from(t as i64)).floor().to_integer() as u64;

    let mut buckets = Buckets::new(n, adv);
    let mut tours: Vec<Tour> = Vec::new();
    let mut round = 0;
    let mut interval = 0;
    while round < horizon {
        interval += 1;
        let mut quota = per_interval + if interval == 1 { adv.burstiness } else { 0 };
        let end = (interval * t).min(horizon);
        while round < end {
            round += 1;
            buckets.tick();
            while quota > 0 && buckets.admits(&everyone) {
                buckets.charge(&everyone);
                quota -= 1;
                let k = tours.len();
                let path = (0..=adv.stretch)
                    .map(|i| NodeId::from_index((k + i) % n))
                    .collect();
                tours.push(Tour::new(TourId(k as u64 + 1), round, path)?);
            }
        }
        if quota > 0 && end == interval * t {
            return Err(AdversaryError::Unplaceable {
                interval,
                missing: quota,
            });
        }
    }
    let trace = InjectionTrace::new(tours, horizon)?;
    Ok((net, trace))
}

/// Injected tours per interval of `t` rounds, for reports.
pub fn tours_per_interval(trace: &InjectionTrace, t: u64) -> BTreeMap<u64, usize> {
    let mut out = BTreeMap::new();
    for tour in trace.tours() {
        *out.entry((tour.injected - 1) / t + 1).or_insert(0) += 1;
    }
    out
}
