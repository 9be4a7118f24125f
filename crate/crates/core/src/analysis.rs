//! Aggregation of replicate tallies into per-(method, mode, p) metrics.

use serde::{Deserialize, Serialize};

use crate::engine::Method;
use crate::error::{Error, Result};
use crate::montecarlo::{ExperimentConfig, ReplicateResult};
use crate::topology::FailureMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub method: Method,
    pub mode: FailureMode,
    pub p: f64,
    pub n_replicates: usize,
    pub n_packets_total: u64,
    pub loss_rate: f64,
    /// Standard error of the per-replicate loss rate.
    pub loss_rate_stderr: f64,
    /// Loss-rate reduction against NF in percentage points; `None` when NF
    /// was not part of the run.
    pub improvement_pts: Option<f64>,
    /// Mean over replicates with at least one delivery.
    pub max_hops_mean: Option<f64>,
    pub max_hops_max: Option<u64>,
    pub rf_packet_ratio: f64,
    pub rf_hops_ratio: f64,
    pub largest_cc_fraction_mean: f64,
    /// Fraction of packets whose endpoints were disconnected in the live graph.
    pub unreachable_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointEstimate {
    pub p_at_max_hops_peak: f64,
    pub peak_value: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn aggregate(
    results: &[ReplicateResult],
    method: Method,
    mode: FailureMode,
    p: f64,
) -> Result<AggregateMetrics> {
    if let Some(r) = results.iter().find(|r| r.p != p) {
        return Err(Error::Contract(format!(
            "replicate at p={} mixed into aggregate for p={p}",
            r.p
        )));
    }
    let mut packets = 0u64;
    let mut lost = 0u64;
    let mut delivered = 0u64;
    let mut with_reverse = 0u64;
    let mut hops = 0u64;
    let mut reverse_hops = 0u64;
    let mut unreachable = 0u64;
    let mut max_sum = 0u64;
    let mut max_count = 0usize;
    let mut max_max: Option<u64> = None;
    let mut cc_sum = 0.0;
    let mut rates = Vec::with_capacity(results.len());

    for r in results {
        let t = r.tallies.get(&method).ok_or_else(|| {
            Error::Contract(format!("method {method} missing from replicate {}", r.replicate_index))
        })?;
        packets += t.packets();
        lost += t.lost();
        delivered += t.delivered;
        with_reverse += t.delivered_with_reverse;
        hops += t.total_hops_delivered;
        reverse_hops += t.reverse_hops_delivered;
        unreachable += r.structurally_unreachable_pairs;
        if let Some(m) = t.max_hops_delivered {
            max_sum += m;
            max_count += 1;
            max_max = Some(max_max.map_or(m, |x| x.max(m)));
        }
        cc_sum += r.largest_cc_fraction;
        rates.push(ratio(t.lost(), t.packets()));
    }

    let n = results.len();
    let stderr = if n > 1 {
        let mean = rates.iter().sum::<f64>() / n as f64;
        let var = rates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };

    Ok(AggregateMetrics {
        method,
        mode,
        p,
        n_replicates: n,
        n_packets_total: packets,
        loss_rate: ratio(lost, packets),
        loss_rate_stderr: stderr,
        improvement_pts: None,
        max_hops_mean: (max_count > 0).then(|| max_sum as f64 / max_count as f64),
        max_hops_max: max_max,
        rf_packet_ratio: ratio(with_reverse, delivered),
        rf_hops_ratio: ratio(reverse_hops, hops),
        largest_cc_fraction_mean: if n == 0 { 0.0 } else { cc_sum / n as f64 },
        unreachable_fraction: ratio(unreachable, packets),
    })
}

/// Loss-rate reduction relative to NF, in percentage points.
pub fn improvement_vs_nf(method: &AggregateMetrics, nf: &AggregateMetrics) -> Result<f64> {
    if method.mode != nf.mode || method.p != nf.p || nf.method != Method::Nf {
        return Err(Error::Contract(format!(
            "cannot compare {} at {} p={} with {} at {} p={}",
            method.method, method.mode, method.p, nf.method, nf.mode, nf.p
        )));
    }
    Ok((nf.loss_rate - method.loss_rate) * 100.0)
}

/// Argmax over sweep samples; ties resolve to the smaller p.
pub fn estimate_peak(p_values: &[f64], values: &[f64]) -> Result<CriticalPointEstimate> {
    if p_values.len() != values.len() || p_values.len() < 3 {
        return Err(Error::Contract(format!(
            "peak estimation needs equal-length series of at least 3 (got {} and {})",
            p_values.len(),
            values.len()
        )));
    }
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    Ok(CriticalPointEstimate {
        p_at_max_hops_peak: p_values[best],
        peak_value: values[best],
    })
}

/// One row per (method, p), in method order then ascending p, with
/// improvements filled in against NF.
pub fn summarize(config: &ExperimentConfig, results: &[ReplicateResult]) -> Result<Vec<AggregateMetrics>> {
    let mut methods = config.methods.clone();
    methods.sort();
    methods.dedup();
    let mut rows = Vec::with_capacity(methods.len() * config.p_values.len());
    for &method in &methods {
        for (p_index, &p) in config.p_values.iter().enumerate() {
            let cell: Vec<ReplicateResult> = results
                .iter()
                .filter(|r| r.p_index == p_index)
                .cloned()
                .collect();
            rows.push(aggregate(&cell, method, config.mode, p)?);
        }
    }
    let baseline: Vec<AggregateMetrics> = rows
        .iter()
        .filter(|m| m.method == Method::Nf)
        .cloned()
        .collect();
    if !baseline.is_empty() {
        for (i, row) in rows.iter_mut().enumerate() {
            let nf = &baseline[i % config.p_values.len()];
            row.improvement_pts = Some(improvement_vs_nf(row, nf)?);
        }
    }
    Ok(rows)
}

/// Rows of one method, in ascending p.
pub fn series(rows: &[AggregateMetrics], method: Method) -> Vec<&AggregateMetrics> {
    rows.iter().filter(|m| m.method == method).collect()
}
