//! Hop-by-hop forwarding of a single packet under NF, LFA, RF-CF or RF-LF.
//!
//! The RF methods follow three rules. A dead primary egress generates a
//! reverse flow, whose reference direction is the dead egress. An arrival
//! whose routing egress equals its ingress is relayed, with the ingress as
//! reference. Any other arrival annihilates the reverse flow and resumes
//! normal forwarding. After more than `sst` consecutive reverse hops the
//! priority policy flips.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{PotentialField, RoutingTable, RoutingTables};
use crate::topology::{Direction, FailureScenario, NodeId, TorusTopology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "NF")]
    Nf,
    #[serde(rename = "LFA")]
    Lfa,
    #[serde(rename = "RF-CF")]
    RfCf,
    #[serde(rename = "RF-LF")]
    RfLf,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Nf, Method::Lfa, Method::RfCf, Method::RfLf];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Nf => "NF",
            Method::Lfa => "LFA",
            Method::RfCf => "RF-CF",
            Method::RfLf => "RF-LF",
        }
    }

    /// Starting policy for the reverse-flow methods.
    pub fn base_policy(self) -> Option<Policy> {
        match self {
            Method::RfCf => Some(Policy::OppositeFirst),
            Method::RfLf => Some(Policy::SideFirst),
            Method::Nf | Method::Lfa => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| Error::config("methods", format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Policy {
    OppositeFirst,
    SideFirst,
}

impl Policy {
    pub fn switched(self) -> Policy {
        match self {
            Policy::OppositeFirst => Policy::SideFirst,
            Policy::SideFirst => Policy::OppositeFirst,
        }
    }

    /// Candidate interfaces relative to `reference`, in priority order.
    fn candidates(self, reference: Direction) -> [Direction; 3] {
        let (o, s1, s2) = (
            reference.opposite(),
            reference.clockwise(),
            reference.counterclockwise(),
        );
        match self {
            Policy::OppositeFirst => [o, s1, s2],
            Policy::SideFirst => [s1, s2, o],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Reverse hops tolerated before the policy flips.
    pub sst: usize,
    /// Total hop budget per packet.
    pub ttl: usize,
}

impl EngineConfig {
    pub fn new(sst: usize, ttl: usize) -> Result<Self> {
        if sst == 0 {
            return Err(Error::config("sst", "must be at least 1"));
        }
        if ttl < sst {
            return Err(Error::config("ttl", format!("{ttl} is below sst {sst}")));
        }
        Ok(EngineConfig { sst, ttl })
    }

    /// `sst = 2 × diameter`, `ttl = 16 × diameter`.
    pub fn for_topology(topo: &TorusTopology) -> Self {
        let diameter = topo.diameter();
        EngineConfig {
            sst: 2 * diameter,
            ttl: 16 * diameter,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HopKind {
    Forward,
    Reverse,
}

impl HopKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HopKind::Forward => "forward",
            HopKind::Reverse => "reverse",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HopRecord {
    pub from: NodeId,
    pub to: NodeId,
    pub dir: Direction,
    pub kind: HopKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Delivered,
    DroppedNoEgress,
    DroppedTtl,
    DroppedUnreachableDest,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Delivered => "delivered",
            Verdict::DroppedNoEgress => "dropped_no_egress",
            Verdict::DroppedTtl => "dropped_ttl",
            Verdict::DroppedUnreachableDest => "dropped_unreachable_dest",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PacketOutcome {
    pub verdict: Verdict,
    pub trace: Vec<HopRecord>,
    pub total_hops: usize,
    pub reverse_hops: usize,
    pub used_reverse: bool,
    pub annihilation_points: Vec<NodeId>,
}

/// Simulator-side bookkeeping for one packet in flight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PacketState {
    pub src: NodeId,
    pub dst: NodeId,
    pub at: NodeId,
    /// Interface of `at` the packet arrived on; `None` at origination.
    pub ingress: Option<Direction>,
    pub policy: Policy,
    /// Hops taken since the reverse flow started, was annihilated or
    /// switched policy.
    pub reverse_hops_since_event: usize,
    pub in_reverse: bool,
    pub trace: Vec<HopRecord>,
    pub annihilation_points: Vec<NodeId>,
}

impl PacketState {
    pub fn new(src: NodeId, dst: NodeId, policy: Policy) -> Self {
        PacketState {
            src,
            dst,
            at: src,
            ingress: None,
            policy,
            reverse_hops_since_event: 0,
            in_reverse: false,
            trace: Vec::new(),
            annihilation_points: Vec::new(),
        }
    }

    pub fn total_hops(&self) -> usize {
        self.trace.len()
    }
}

/// Egress decision at one node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Hop(Direction),
    /// Loop back through the ingress interface.
    Bounce(Direction),
    Drop,
}

fn primary(routing: &RoutingTable, state: &PacketState) -> Direction {
    routing
        .next(state.at)
        .expect("forwarding is never invoked at the destination")
}

pub fn step_nf(scenario: &FailureScenario, routing: &RoutingTable, state: &PacketState) -> Step {
    let egress = primary(routing, state);
    if scenario.link_alive(state.at, egress) {
        Step::Hop(egress)
    } else {
        Step::Drop
    }
}

/// Primary egress, else the first live strictly-downhill neighbour.
pub fn step_lfa(
    scenario: &FailureScenario,
    routing: &RoutingTable,
    potential: &PotentialField,
    state: &PacketState,
) -> Step {
    if let Step::Hop(d) = step_nf(scenario, routing, state) {
        return Step::Hop(d);
    }
    let topo = scenario.topology();
    let here = potential.phi(state.at);
    Direction::ALL
        .into_iter()
        .find(|&d| {
            scenario.link_alive(state.at, d) && potential.phi(topo.neighbor(state.at, d)) < here
        })
        .map_or(Step::Drop, Step::Hop)
}

/// Alternate egress when the primary egress at `state.at` is dead.
pub fn rf_generate(
    scenario: &FailureScenario,
    routing: &RoutingTable,
    state: &PacketState,
    policy: Policy,
) -> Step {
    let reference = primary(routing, state);
    let at = state.at;
    match scenario.alive_degree(at) {
        0 | 1 => Step::Drop,
        2 => {
            let o = reference.opposite();
            if scenario.link_alive(at, o) {
                Step::Hop(o)
            } else {
                Step::Drop
            }
        }
        _ => policy
            .candidates(reference)
            .into_iter()
            .find(|&d| scenario.link_alive(at, d))
            .map_or(Step::Drop, Step::Hop),
    }
}

/// True when the routing egress points back through the ingress.
pub fn detect_reverse(routing: &RoutingTable, state: &PacketState) -> bool {
    state.ingress.is_some() && routing.next(state.at) == state.ingress
}

/// Egress for a packet identified as reverse flow at `state.at`.
pub fn rf_relay(
    scenario: &FailureScenario,
    state: &PacketState,
    policy: Policy,
) -> Result<Step> {
    let ingress = state
        .ingress
        .ok_or_else(|| Error::Contract("relay requires an ingress interface".into()))?;
    let at = state.at;
    let step = match scenario.alive_degree(at) {
        0 | 1 => Step::Bounce(ingress),
        2 => {
            let o = ingress.opposite();
            if scenario.link_alive(at, o) {
                Step::Hop(o)
            } else {
                Step::Bounce(ingress)
            }
        }
        _ => policy
            .candidates(ingress)
            .into_iter()
            .find(|&d| scenario.link_alive(at, d))
            .map_or(Step::Bounce(ingress), Step::Hop),
    };
    Ok(step)
}

/// Ends reverse mode when the routing egress no longer matches the ingress.
pub fn annihilate_check(routing: &RoutingTable, state: &mut PacketState) -> bool {
    if detect_reverse(routing, state) {
        return false;
    }
    state.in_reverse = false;
    state.reverse_hops_since_event = 0;
    state.annihilation_points.push(state.at);
    true
}

/// Flips the policy once the reverse-hop counter exceeds `sst`.
pub fn oscillation_check(state: &mut PacketState, config: &EngineConfig) -> Policy {
    if state.reverse_hops_since_event > config.sst {
        state.policy = state.policy.switched();
        state.reverse_hops_since_event = 0;
    }
    state.policy
}

fn finish(state: PacketState, verdict: Verdict) -> PacketOutcome {
    let reverse_hops = state
        .trace
        .iter()
        .filter(|h| h.kind == HopKind::Reverse)
        .count();
    PacketOutcome {
        verdict,
        total_hops: state.trace.len(),
        reverse_hops,
        used_reverse: reverse_hops > 0,
        trace: state.trace,
        annihilation_points: state.annihilation_points,
    }
}

/// Routes one packet from `src` to `dst` over the live graph of `scenario`.
pub fn route_packet(
    scenario: &FailureScenario,
    tables: &RoutingTables,
    method: Method,
    src: NodeId,
    dst: NodeId,
    config: &EngineConfig,
) -> Result<PacketOutcome> {
    let topo = scenario.topology();
    if tables.topology() != topo {
        return Err(Error::Contract("routing tables built for another torus".into()));
    }
    if src == dst {
        return Err(Error::Contract(format!("source equals destination {src}")));
    }
    for v in [src, dst] {
        if !topo.contains(v) || !scenario.node_alive(v) {
            return Err(Error::Contract(format!("endpoint {v} is not an alive node")));
        }
    }
    let routing = tables.table(dst);
    let potential = tables.potential(dst);
    let mut state = PacketState::new(src, dst, method.base_policy().unwrap_or(Policy::OppositeFirst));

    loop {
        if state.at == dst {
            return Ok(finish(state, Verdict::Delivered));
        }
        if state.total_hops() >= config.ttl {
            return Ok(finish(state, Verdict::DroppedTtl));
        }
        let (step, reverse) = match method {
            Method::Nf => (step_nf(scenario, routing, &state), false),
            Method::Lfa => (step_lfa(scenario, routing, potential, &state), false),
            Method::RfCf | Method::RfLf => {
                if detect_reverse(routing, &state) {
                    let policy = oscillation_check(&mut state, config);
                    (rf_relay(scenario, &state, policy)?, true)
                } else {
                    if state.in_reverse {
                        annihilate_check(routing, &mut state);
                    }
                    match step_nf(scenario, routing, &state) {
                        Step::Hop(d) => (Step::Hop(d), false),
                        _ => (rf_generate(scenario, routing, &state, state.policy), true),
                    }
                }
            }
        };
        let dir = match step {
            Step::Hop(d) | Step::Bounce(d) => d,
            Step::Drop => return Ok(finish(state, Verdict::DroppedNoEgress)),
        };
        if reverse {
            state.in_reverse = true;
            state.reverse_hops_since_event += 1;
        }
        let to = topo.neighbor(state.at, dir);
        debug_assert!(scenario.link_alive(state.at, dir));
        let kind = if potential.phi(to) < potential.phi(state.at) {
            HopKind::Forward
        } else {
            HopKind::Reverse
        };
        state.trace.push(HopRecord {
            from: state.at,
            to,
            dir,
            kind,
        });
        state.at = to;
        state.ingress = Some(dir.opposite());
    }
}
