//! Fault-free 2D torus and percolation failure scenarios on top of it.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub row: usize,
    pub col: usize,
}

impl NodeId {
    pub const fn new(row: usize, col: usize) -> Self {
        NodeId { row, col }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.row, self.col)
    }
}

/// Interface of a torus node. `N` decrements the row, `E` increments the
/// column; clockwise order is N, E, S, W.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    N,
    E,
    S,
    W,
}

impl Direction {
    /// Fixed tie-break order used everywhere a "smallest port" is needed.
    pub const ALL: [Direction; 4] = [Direction::N, Direction::E, Direction::S, Direction::W];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn from_index(i: usize) -> Direction {
        Direction::ALL[i % 4]
    }

    /// Counter-facing interface.
    pub const fn opposite(self) -> Direction {
        Direction::from_index(self.index() + 2)
    }

    pub const fn clockwise(self) -> Direction {
        Direction::from_index(self.index() + 1)
    }

    pub const fn counterclockwise(self) -> Direction {
        Direction::from_index(self.index() + 3)
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            Direction::N => "N",
            Direction::E => "E",
            Direction::S => "S",
            Direction::W => "W",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Canonical undirected link identifier: every link is owned by exactly one
/// endpoint as its `E` or `S` interface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusTopology {
    rows: usize,
    cols: usize,
}

pub fn build_torus(rows: usize, cols: usize) -> Result<TorusTopology> {
    TorusTopology::new(rows, cols)
}

impl TorusTopology {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows < 3 {
            return Err(Error::Dimension {
                name: "rows",
                value: rows,
            });
        }
        if cols < 3 {
            return Err(Error::Dimension {
                name: "cols",
                value: cols,
            });
        }
        Ok(TorusTopology { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn node_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn link_count(&self) -> usize {
        2 * self.node_count()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.row < self.rows && v.col < self.cols
    }

    pub fn index(&self, v: NodeId) -> usize {
        debug_assert!(self.contains(v), "{v} outside {}x{}", self.rows, self.cols);
        v.row * self.cols + v.col
    }

    pub fn node(&self, index: usize) -> NodeId {
        NodeId::new(index / self.cols, index % self.cols)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.node_count()).map(|i| self.node(i))
    }

    pub fn neighbor(&self, v: NodeId, d: Direction) -> NodeId {
        match d {
            Direction::N => NodeId::new((v.row + self.rows - 1) % self.rows, v.col),
            Direction::S => NodeId::new((v.row + 1) % self.rows, v.col),
            Direction::E => NodeId::new(v.row, (v.col + 1) % self.cols),
            Direction::W => NodeId::new(v.row, (v.col + self.cols - 1) % self.cols),
        }
    }

    /// Hop distance on the fault-free torus.
    pub fn distance(&self, a: NodeId, b: NodeId) -> usize {
        let dr = a.row.abs_diff(b.row);
        let dc = a.col.abs_diff(b.col);
        dr.min(self.rows - dr) + dc.min(self.cols - dc)
    }

    pub fn diameter(&self) -> usize {
        self.rows / 2 + self.cols / 2
    }

    pub fn link_id(&self, v: NodeId, d: Direction) -> LinkId {
        let (owner, horizontal) = match d {
            Direction::E => (v, true),
            Direction::S => (v, false),
            Direction::W => (self.neighbor(v, Direction::W), true),
            Direction::N => (self.neighbor(v, Direction::N), false),
        };
        LinkId(2 * self.index(owner) + usize::from(!horizontal))
    }

    /// Endpoints of a link as (owner, owner's neighbour, owner's interface).
    pub fn link_endpoints(&self, link: LinkId) -> (NodeId, NodeId, Direction) {
        let owner = self.node(link.0 / 2);
        let d = if link.0 % 2 == 0 {
            Direction::E
        } else {
            Direction::S
        };
        (owner, self.neighbor(owner, d), d)
    }

    /// The link joining two adjacent nodes, if they are adjacent.
    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<LinkId> {
        Direction::ALL
            .into_iter()
            .find(|&d| self.neighbor(a, d) == b)
            .map(|d| self.link_id(a, d))
    }
}

pub fn torus_distance(topo: &TorusTopology, a: NodeId, b: NodeId) -> usize {
    topo.distance(a, b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureMode {
    Bond,
    Site,
}

impl FailureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureMode::Bond => "bond",
            FailureMode::Site => "site",
        }
    }
}

impl fmt::Display for FailureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FailureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bond" => Ok(FailureMode::Bond),
            "site" => Ok(FailureMode::Site),
            other => Err(Error::config("mode", format!("expected bond|site, got {other:?}"))),
        }
    }
}

/// One realised failure set on a torus. The live graph is the torus minus
/// `failed_links`; in site mode those are exactly the links incident to
/// failed nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct FailureScenario {
    topology: TorusTopology,
    mode: FailureMode,
    p: f64,
    seed: u64,
    failed_links: Vec<bool>,
    failed_nodes: Vec<bool>,
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Probability(p))
    }
}

pub fn apply_bond_failures(topo: &TorusTopology, p: f64, seed: u64) -> Result<FailureScenario> {
    check_probability(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let failed_links = (0..topo.link_count()).map(|_| rng.gen_bool(p)).collect();
    Ok(FailureScenario {
        topology: *topo,
        mode: FailureMode::Bond,
        p,
        seed,
        failed_links,
        failed_nodes: vec![false; topo.node_count()],
    })
}

pub fn apply_site_failures(topo: &TorusTopology, p: f64, seed: u64) -> Result<FailureScenario> {
    check_probability(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let failed = (0..topo.node_count())
        .filter(|_| rng.gen_bool(p))
        .map(|i| topo.node(i));
    let mut scenario = FailureScenario::with_failed_nodes(topo, failed);
    scenario.p = p;
    scenario.seed = seed;
    Ok(scenario)
}

impl FailureScenario {
    pub fn generate(topo: &TorusTopology, mode: FailureMode, p: f64, seed: u64) -> Result<Self> {
        match mode {
            FailureMode::Bond => apply_bond_failures(topo, p, seed),
            FailureMode::Site => apply_site_failures(topo, p, seed),
        }
    }

    pub fn pristine(topo: &TorusTopology) -> Self {
        Self::with_failed_links(topo, std::iter::empty())
    }

    /// Bond-mode scenario with an explicit failed-link set.
    pub fn with_failed_links(topo: &TorusTopology, links: impl IntoIterator<Item = LinkId>) -> Self {
        let mut failed_links = vec![false; topo.link_count()];
        for l in links {
            failed_links[l.0] = true;
        }
        FailureScenario {
            topology: *topo,
            mode: FailureMode::Bond,
            p: 0.0,
            seed: 0,
            failed_links,
            failed_nodes: vec![false; topo.node_count()],
        }
    }

    /// Site-mode scenario with an explicit failed-node set.
    pub fn with_failed_nodes(topo: &TorusTopology, nodes: impl IntoIterator<Item = NodeId>) -> Self {
        let mut failed_links = vec![false; topo.link_count()];
        let mut failed_nodes = vec![false; topo.node_count()];
        for v in nodes {
            failed_nodes[topo.index(v)] = true;
            for d in Direction::ALL {
                failed_links[topo.link_id(v, d).0] = true;
            }
        }
        FailureScenario {
            topology: *topo,
            mode: FailureMode::Site,
            p: 0.0,
            seed: 0,
            failed_links,
            failed_nodes,
        }
    }

    pub fn topology(&self) -> &TorusTopology {
        &self.topology
    }

    pub fn mode(&self) -> FailureMode {
        self.mode
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn failed_links(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.failed_links
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(i, _)| LinkId(i))
    }

    pub fn failed_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.failed_nodes
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(i, _)| self.topology.node(i))
    }

    pub fn failed_link_count(&self) -> usize {
        self.failed_links.iter().filter(|&&f| f).count()
    }

    pub fn failed_node_count(&self) -> usize {
        self.failed_nodes.iter().filter(|&&f| f).count()
    }

    pub fn is_link_failed(&self, link: LinkId) -> bool {
        self.failed_links[link.0]
    }

    pub fn link_alive(&self, v: NodeId, d: Direction) -> bool {
        !self.failed_links[self.topology.link_id(v, d).0]
    }

    pub fn node_alive(&self, v: NodeId) -> bool {
        !self.failed_nodes[self.topology.index(v)]
    }

    pub fn alive_nodes(&self) -> Vec<NodeId> {
        self.topology.nodes().filter(|&v| self.node_alive(v)).collect()
    }

    pub fn alive_degree(&self, v: NodeId) -> usize {
        if !self.node_alive(v) {
            return 0;
        }
        Direction::ALL
            .into_iter()
            .filter(|&d| self.link_alive(v, d))
            .count()
    }

    /// Connected components of the live graph. Failed nodes are singletons
    /// and are excluded from every size count.
    pub fn components(&self) -> Components {
        let topo = &self.topology;
        let mut uf = UnionFind::new(topo.node_count());
        for (i, &failed) in self.failed_links.iter().enumerate() {
            if !failed {
                let (a, b, _) = topo.link_endpoints(LinkId(i));
                uf.union(topo.index(a), topo.index(b));
            }
        }
        let mut size = vec![0usize; topo.node_count()];
        let root: Vec<usize> = (0..topo.node_count()).map(|i| uf.find(i)).collect();
        for (i, &r) in root.iter().enumerate() {
            if !self.failed_nodes[i] {
                size[r] += 1;
            }
        }
        Components { root, size }
    }

    pub fn largest_component_fraction(&self) -> f64 {
        let largest = self.components().largest();
        largest as f64 / self.topology.node_count() as f64
    }

    pub fn is_connected_pair(&self, a: NodeId, b: NodeId) -> bool {
        self.components().same(&self.topology, a, b)
    }
}

pub fn alive_degree(scenario: &FailureScenario, v: NodeId) -> usize {
    scenario.alive_degree(v)
}

pub fn largest_component_fraction(scenario: &FailureScenario) -> f64 {
    scenario.largest_component_fraction()
}

pub fn is_connected_pair(scenario: &FailureScenario, a: NodeId, b: NodeId) -> bool {
    scenario.is_connected_pair(a, b)
}

/// Component labelling of a scenario's live graph.
#[derive(Clone, Debug)]
pub struct Components {
    root: Vec<usize>,
    size: Vec<usize>,
}

impl Components {
    pub fn same(&self, topo: &TorusTopology, a: NodeId, b: NodeId) -> bool {
        self.root[topo.index(a)] == self.root[topo.index(b)]
    }

    pub fn largest(&self) -> usize {
        self.size.iter().copied().max().unwrap_or(0)
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}
