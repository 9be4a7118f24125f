//! Topological potentials, frozen routing tables and flow-field geometry.
//!
//! Everything here is computed on the fault-free torus. Routing tables never
//! change after failures; only the forwarding engine sees link state.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{Direction, FailureScenario, NodeId, TorusTopology};

/// Hop-count potential toward one destination.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PotentialField {
    topology: TorusTopology,
    dest: NodeId,
    phi: Vec<u32>,
}

impl PotentialField {
    pub fn dest(&self) -> NodeId {
        self.dest
    }

    pub fn phi(&self, v: NodeId) -> u32 {
        self.phi[self.topology.index(v)]
    }

    pub fn max(&self) -> u32 {
        self.phi.iter().copied().max().unwrap_or(0)
    }
}

/// Breadth-first potential from `dest` over the fault-free torus.
pub fn compute_potential(topo: &TorusTopology, dest: NodeId) -> PotentialField {
    let mut phi = vec![u32::MAX; topo.node_count()];
    phi[topo.index(dest)] = 0;
    let mut queue = VecDeque::from([dest]);
    while let Some(v) = queue.pop_front() {
        let next = phi[topo.index(v)] + 1;
        for d in Direction::ALL {
            let w = topo.neighbor(v, d);
            let slot = &mut phi[topo.index(w)];
            if *slot == u32::MAX {
                *slot = next;
                queue.push_back(w);
            }
        }
    }
    PotentialField {
        topology: *topo,
        dest,
        phi,
    }
}

/// First direction in N, E, S, W order whose neighbour is one step downhill.
pub fn next_hop(topo: &TorusTopology, potential: &PotentialField, v: NodeId) -> Result<Direction> {
    if v == potential.dest {
        return Err(Error::Contract(format!("next hop requested at destination {v}")));
    }
    let here = potential.phi(v);
    Direction::ALL
        .into_iter()
        .find(|&d| potential.phi(topo.neighbor(v, d)) + 1 == here)
        .ok_or_else(|| Error::Contract(format!("no downhill neighbour at {v}")))
}

pub fn is_forward_edge(potential: &PotentialField, u: NodeId, v: NodeId) -> bool {
    potential.phi(v) < potential.phi(u)
}

/// Deterministic next-hop table toward one destination.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoutingTable {
    topology: TorusTopology,
    dest: NodeId,
    next: Vec<Option<Direction>>,
}

impl RoutingTable {
    pub fn from_potential(topo: &TorusTopology, potential: &PotentialField) -> Self {
        let next = topo
            .nodes()
            .map(|v| next_hop(topo, potential, v).ok())
            .collect();
        RoutingTable {
            topology: *topo,
            dest: potential.dest,
            next,
        }
    }

    pub fn dest(&self) -> NodeId {
        self.dest
    }

    /// Primary egress at `v`; `None` only at the destination.
    pub fn next(&self, v: NodeId) -> Option<Direction> {
        self.next[self.topology.index(v)]
    }
}

/// Potentials and routing tables for every destination of a torus.
#[derive(Clone, Debug)]
pub struct RoutingTables {
    topology: TorusTopology,
    entries: Vec<(PotentialField, RoutingTable)>,
}

impl RoutingTables {
    pub fn build(topo: &TorusTopology) -> Self {
        let entries = topo
            .nodes()
            .map(|dest| {
                let phi = compute_potential(topo, dest);
                let table = RoutingTable::from_potential(topo, &phi);
                (phi, table)
            })
            .collect();
        RoutingTables {
            topology: *topo,
            entries,
        }
    }

    pub fn topology(&self) -> &TorusTopology {
        &self.topology
    }

    pub fn potential(&self, dest: NodeId) -> &PotentialField {
        &self.entries[self.topology.index(dest)].0
    }

    pub fn table(&self, dest: NodeId) -> &RoutingTable {
        &self.entries[self.topology.index(dest)].1
    }
}

/// Region of a node relative to a destination, from the signed minimal
/// offsets `dr ∈ (-rows/2, rows/2]`, `dc ∈ (-cols/2, cols/2]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlowFieldClass {
    /// dr > 0, dc > 0
    FieldA,
    /// dr > 0, dc < 0
    FieldB,
    /// dr < 0, dc < 0
    FieldC,
    /// dr < 0, dc > 0
    FieldD,
    BoundaryRow,
    BoundaryCol,
    BoundaryAntipodal,
    Dest,
}

fn signed_offset(from: usize, to: usize, size: usize) -> (isize, bool) {
    let raw = (to + size - from) % size;
    let antipodal = size % 2 == 0 && raw == size / 2;
    let signed = if raw > size / 2 {
        raw as isize - size as isize
    } else {
        raw as isize
    };
    (signed, antipodal)
}

pub fn classify_flow_field(topo: &TorusTopology, dest: NodeId, v: NodeId) -> FlowFieldClass {
    let (dr, row_antipodal) = signed_offset(dest.row, v.row, topo.rows());
    let (dc, col_antipodal) = signed_offset(dest.col, v.col, topo.cols());
    match (dr, dc) {
        (0, 0) => FlowFieldClass::Dest,
        _ if row_antipodal || col_antipodal => FlowFieldClass::BoundaryAntipodal,
        (0, _) => FlowFieldClass::BoundaryRow,
        (_, 0) => FlowFieldClass::BoundaryCol,
        (r, c) if r > 0 && c > 0 => FlowFieldClass::FieldA,
        (r, _) if r > 0 => FlowFieldClass::FieldB,
        (_, c) if c < 0 => FlowFieldClass::FieldC,
        _ => FlowFieldClass::FieldD,
    }
}

/// Alive nodes with a strictly potential-decreasing live path to `dest`.
pub fn forward_reachable_set(
    scenario: &FailureScenario,
    potential: &PotentialField,
) -> Result<BTreeSet<NodeId>> {
    let topo = scenario.topology();
    let dest = potential.dest();
    if !scenario.node_alive(dest) {
        return Err(Error::Contract(format!("destination {dest} has failed")));
    }
    let mut reached = vec![false; topo.node_count()];
    reached[topo.index(dest)] = true;
    let mut queue = VecDeque::from([dest]);
    while let Some(w) = queue.pop_front() {
        for d in Direction::ALL {
            let u = topo.neighbor(w, d);
            if scenario.link_alive(w, d)
                && scenario.node_alive(u)
                && potential.phi(u) > potential.phi(w)
                && !reached[topo.index(u)]
            {
                reached[topo.index(u)] = true;
                queue.push_back(u);
            }
        }
    }
    Ok(topo.nodes().filter(|&v| reached[topo.index(v)]).collect())
}
