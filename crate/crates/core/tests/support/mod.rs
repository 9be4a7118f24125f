#![allow(dead_code)]

pub mod reference;

use std::collections::BTreeSet;

use reference::{Coord, RefMethod, RefTorus, RefVerdict};
use torus_rf::engine::{route_packet, EngineConfig, Method, Verdict};
use torus_rf::potential::RoutingTables;
use torus_rf::topology::{FailureScenario, NodeId, TorusTopology};

fn coord(v: NodeId) -> Coord {
    (v.row, v.col)
}

fn ref_method(m: Method) -> RefMethod {
    match m {
        Method::Nf => RefMethod::Nf,
        Method::Lfa => RefMethod::Lfa,
        Method::RfCf => RefMethod::CounterFacing,
        Method::RfLf => RefMethod::LateralFacing,
    }
}

/// A failure set described without the library's link numbering.
#[derive(Clone, Debug, Default)]
pub struct FailureSet {
    pub links: Vec<(Coord, Coord)>,
    pub nodes: Vec<Coord>,
}

impl FailureSet {
    pub fn link_up(&self, a: Coord, b: Coord) -> bool {
        !self.nodes.contains(&a)
            && !self.nodes.contains(&b)
            && !self.links.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
    }

    pub fn scenario(&self, topo: &TorusTopology) -> FailureScenario {
        if self.nodes.is_empty() {
            let ids = self.links.iter().map(|&(a, b)| {
                topo.link_between(NodeId::new(a.0, a.1), NodeId::new(b.0, b.1))
                    .expect("adjacent pair")
            });
            FailureScenario::with_failed_links(topo, ids)
        } else {
            assert!(self.links.is_empty(), "mixed failure sets are not supported");
            FailureScenario::with_failed_nodes(topo, self.nodes.iter().map(|&(r, c)| NodeId::new(r, c)))
        }
    }
}

/// Every link set and every node set of size at most `k` on the torus.
pub fn failure_sets(rows: usize, cols: usize, k: usize) -> Vec<FailureSet> {
    let mut links = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            links.push(((r, c), (r, (c + 1) % cols)));
            links.push(((r, c), ((r + 1) % rows, c)));
        }
    }
    let nodes: Vec<Coord> = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect();
    let mut out = vec![FailureSet::default()];
    for size in 1..=k {
        for combo in combinations(links.len(), size) {
            out.push(FailureSet { links: combo.iter().map(|&i| links[i]).collect(), nodes: vec![] });
        }
        for combo in combinations(nodes.len(), size) {
            out.push(FailureSet { links: vec![], nodes: combo.iter().map(|&i| nodes[i]).collect() });
        }
    }
    out
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Routes every alive ordered pair with every method through both the
/// library and the reference interpreter; returns mismatch descriptions.
pub fn compare_all_pairs(
    topo: &TorusTopology,
    tables: &RoutingTables,
    set: &FailureSet,
    config: &EngineConfig,
) -> (usize, Vec<String>) {
    let scenario = set.scenario(topo);
    let link_up = |a: Coord, b: Coord| set.link_up(a, b);
    let oracle = RefTorus { rows: topo.rows(), cols: topo.cols(), link_up: &link_up };
    let dead: BTreeSet<Coord> = set.nodes.iter().copied().collect();
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for src in topo.nodes() {
        for dst in topo.nodes() {
            if src == dst || dead.contains(&coord(src)) || dead.contains(&coord(dst)) {
                continue;
            }
            for method in Method::ALL {
                checked += 1;
                let got = route_packet(&scenario, tables, method, src, dst, config).expect("valid packet");
                let want = oracle.route(ref_method(method), coord(src), coord(dst), config.sst, config.ttl);
                let verdict_ok = matches!(
                    (got.verdict, want.verdict),
                    (Verdict::Delivered, RefVerdict::Delivered)
                        | (Verdict::DroppedNoEgress, RefVerdict::NoEgress)
                        | (Verdict::DroppedTtl, RefVerdict::Ttl)
                );
                let hops: Vec<(Coord, Coord, usize)> =
                    got.trace.iter().map(|h| (coord(h.from), coord(h.to), h.dir.index())).collect();
                let ann: Vec<Coord> = got.annihilation_points.iter().map(|&v| coord(v)).collect();
                if !verdict_ok || hops != want.hops || got.reverse_hops != want.reverse_hops || ann != want.annihilations {
                    mismatches.push(format!(
                        "{method} {src}->{dst} failures={set:?}: engine {:?} {} hops, reference {:?} {} hops",
                        got.verdict,
                        hops.len(),
                        want.verdict,
                        want.hops.len()
                    ));
                }
            }
        }
    }
    (checked, mismatches)
}
