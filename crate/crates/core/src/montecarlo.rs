//! Seeded replicate batches over a failure-probability sweep.
//!
//! Each (p, replicate) cell is a pure function of the configuration and the
//! master seed. Every method in a cell sees the same failure scenario and
//! the same packet list.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{route_packet, EngineConfig, Method, PacketOutcome, Verdict};
use crate::error::{Error, Result};
use crate::potential::RoutingTables;
use crate::topology::{FailureMode, FailureScenario, NodeId, TorusTopology};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub rows: usize,
    pub cols: usize,
    pub mode: FailureMode,
    pub methods: Vec<Method>,
    pub p_values: Vec<f64>,
    pub replicates: usize,
    pub packets_per_replicate: usize,
    pub engine: EngineConfig,
    pub master_seed: u64,
}

impl ExperimentConfig {
    /// All four methods, 100 packets per replicate, default engine limits.
    pub fn new(
        rows: usize,
        cols: usize,
        mode: FailureMode,
        p_values: Vec<f64>,
        replicates: usize,
        master_seed: u64,
    ) -> Result<Self> {
        let topo = TorusTopology::new(rows, cols)?;
        let config = ExperimentConfig {
            rows,
            cols,
            mode,
            methods: Method::ALL.to_vec(),
            p_values,
            replicates,
            packets_per_replicate: 100,
            engine: EngineConfig::for_topology(&topo),
            master_seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn topology(&self) -> Result<TorusTopology> {
        TorusTopology::new(self.rows, self.cols)
    }

    pub fn validate(&self) -> Result<()> {
        self.topology()?;
        EngineConfig::new(self.engine.sst, self.engine.ttl)?;
        if self.methods.is_empty() {
            return Err(Error::config("methods", "at least one method is required"));
        }
        if self.p_values.is_empty() {
            return Err(Error::config("p", "the sweep needs at least one value"));
        }
        if let Some(&p) = self.p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Probability(p));
        }
        if self.p_values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config("p", "values must be sorted ascending"));
        }
        if self.replicates == 0 {
            return Err(Error::config("replicates", "must be at least 1"));
        }
        if self.packets_per_replicate == 0 {
            return Err(Error::config("packets", "must be at least 1"));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-cell seed. For a fixed master seed the map is injective over
/// indices below 2^32, since each stage is a bijection on u64.
pub fn seed_for(master_seed: u64, p_index: usize, replicate_index: usize) -> u64 {
    debug_assert!(p_index < 1 << 32 && replicate_index < 1 << 32);
    let cell = ((p_index as u64) << 32) | replicate_index as u64;
    splitmix64(master_seed.wrapping_add(splitmix64(cell)))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodTally {
    pub delivered: u64,
    pub dropped_no_egress: u64,
    pub dropped_ttl: u64,
    pub dropped_unreachable_dest: u64,
    pub max_hops_delivered: Option<u64>,
    pub total_hops_delivered: u64,
    pub reverse_hops_delivered: u64,
    pub delivered_with_reverse: u64,
}

impl MethodTally {
    pub fn lost(&self) -> u64 {
        self.dropped_no_egress + self.dropped_ttl + self.dropped_unreachable_dest
    }

    pub fn packets(&self) -> u64 {
        self.delivered + self.lost()
    }

    pub fn record(&mut self, outcome: &PacketOutcome) {
        match outcome.verdict {
            Verdict::Delivered => {
                let hops = outcome.total_hops as u64;
                self.delivered += 1;
                self.max_hops_delivered = Some(self.max_hops_delivered.map_or(hops, |m| m.max(hops)));
                self.total_hops_delivered += hops;
                self.reverse_hops_delivered += outcome.reverse_hops as u64;
                self.delivered_with_reverse += u64::from(outcome.used_reverse);
            }
            Verdict::DroppedNoEgress => self.dropped_no_egress += 1,
            Verdict::DroppedTtl => self.dropped_ttl += 1,
            Verdict::DroppedUnreachableDest => self.dropped_unreachable_dest += 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub p: f64,
    pub p_index: usize,
    pub replicate_index: usize,
    pub tallies: BTreeMap<Method, MethodTally>,
    pub largest_cc_fraction: f64,
    pub structurally_unreachable_pairs: u64,
}

/// One routed (src, dst) pair with every method's outcome.
#[derive(Clone, Debug)]
pub struct PacketRun {
    pub src: NodeId,
    pub dst: NodeId,
    pub outcomes: Vec<(Method, PacketOutcome)>,
}

/// A replicate together with the scenario and per-packet outcomes behind it.
#[derive(Clone, Debug)]
pub struct ReplicateDetail {
    pub result: ReplicateResult,
    pub scenario: FailureScenario,
    pub packets: Vec<PacketRun>,
}

/// A validated configuration with its torus and routing tables prepared.
#[derive(Clone, Debug)]
pub struct Experiment {
    config: ExperimentConfig,
    tables: RoutingTables,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let tables = RoutingTables::build(&config.topology()?);
        Ok(Experiment { config, tables })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn tables(&self) -> &RoutingTables {
        &self.tables
    }

    pub fn run_replicate(&self, p_index: usize, replicate_index: usize) -> Result<ReplicateResult> {
        self.replicate(p_index, replicate_index, false).map(|d| d.result)
    }

    pub fn replicate_detail(&self, p_index: usize, replicate_index: usize) -> Result<ReplicateDetail> {
        self.replicate(p_index, replicate_index, true)
    }

    fn replicate(&self, p_index: usize, replicate_index: usize, keep: bool) -> Result<ReplicateDetail> {
        let cfg = &self.config;
        let p = *cfg
            .p_values
            .get(p_index)
            .ok_or_else(|| Error::Contract(format!("p index {p_index} out of range")))?;
        let topo = self.tables.topology();
        let seed = seed_for(cfg.master_seed, p_index, replicate_index);
        let scenario = FailureScenario::generate(topo, cfg.mode, p, seed)?;
        let components = scenario.components();
        let alive = scenario.alive_nodes();

        let mut tallies: BTreeMap<Method, MethodTally> =
            cfg.methods.iter().map(|&m| (m, MethodTally::default())).collect();
        let mut unreachable = 0u64;
        let mut packets = Vec::new();

        if alive.len() < 2 {
            for tally in tallies.values_mut() {
                tally.dropped_unreachable_dest = cfg.packets_per_replicate as u64;
            }
            unreachable = cfg.packets_per_replicate as u64;
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            for _ in 0..cfg.packets_per_replicate {
                let src = alive[rng.gen_range(0..alive.len())];
                let dst = loop {
                    let d = alive[rng.gen_range(0..alive.len())];
                    if d != src {
                        break d;
                    }
                };
                if !components.same(topo, src, dst) {
                    unreachable += 1;
                }
                let mut outcomes = Vec::new();
                for &method in &cfg.methods {
                    let outcome = route_packet(&scenario, &self.tables, method, src, dst, &cfg.engine)?;
                    tallies.get_mut(&method).expect("tally per method").record(&outcome);
                    if keep {
                        outcomes.push((method, outcome));
                    }
                }
                if keep {
                    packets.push(PacketRun { src, dst, outcomes });
                }
            }
        }

        let result = ReplicateResult {
            p,
            p_index,
            replicate_index,
            tallies,
            largest_cc_fraction: components.largest() as f64 / topo.node_count() as f64,
            structurally_unreachable_pairs: unreachable,
        };
        Ok(ReplicateDetail {
            result,
            scenario,
            packets,
        })
    }

    /// Every (p, replicate) cell, ordered by p index then replicate index.
    pub fn run_sweep(&self) -> Result<Vec<ReplicateResult>> {
        let reps = self.config.replicates;
        let cells = self.config.p_values.len() * reps;
        (0..cells)
            .into_par_iter()
            .map(|cell| self.run_replicate(cell / reps, cell % reps))
            .collect()
    }

    /// `run_sweep` on a dedicated pool; `threads = 1` runs sequentially.
    pub fn run_sweep_with_threads(&self, threads: usize) -> Result<Vec<ReplicateResult>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::config("threads", e.to_string()))?;
        pool.install(|| self.run_sweep())
    }
}

pub fn run_replicate(
    config: &ExperimentConfig,
    p_index: usize,
    replicate_index: usize,
) -> Result<ReplicateResult> {
    Experiment::new(config.clone())?.run_replicate(p_index, replicate_index)
}

pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ReplicateResult>> {
    Experiment::new(config.clone())?.run_sweep()
}
