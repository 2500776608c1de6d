// SPDX-License-Identifier: Apache-2.0

//! Weighted k-shell decomposition of the market and the core/periphery split.
//!
//! Nodes are peeled in order of current weighted degree (contract count over
//! surviving edges). A peeled node gets core number `max(d, previous)` where
//! `d` is its current weighted degree and `previous` the core number of the
//! node peeled before it. Issuers (winners) whose core number strictly
//! exceeds the mean issuer (winner) weighted degree form the core.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;

use serde::Serialize;

use crate::graph::{MarketGraph, Role};
use crate::{fmt_opt, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoreNumbers {
    pub issuers: Vec<u64>,
    pub winners: Vec<u64>,
}

impl CoreNumbers {
    pub fn get(&self, role: Role, idx: u32) -> u64 {
        match role {
            Role::Issuer => self.issuers[idx as usize],
            Role::Winner => self.winners[idx as usize],
        }
    }
}

/// Weighted core numbers with ties broken by node order (issuers first, each
/// role sorted by label).
pub fn weighted_core_numbers(graph: &MarketGraph) -> CoreNumbers {
    let ranks: Vec<u32> = (0..graph.n_nodes() as u32).collect();
    weighted_core_numbers_with_ranks(graph, &ranks)
}

/// Peeling with an explicit tie-break: among nodes of equal current degree
/// the one with the smallest `ranks[node]` goes first. Node `i` is issuer `i`
/// for `i < n_issuers`, else winner `i - n_issuers`. The result does not
/// depend on the ranks.
pub fn weighted_core_numbers_with_ranks(graph: &MarketGraph, ranks: &[u32]) -> CoreNumbers {
    let ni = graph.n_issuers();
    let n = graph.n_nodes();
    assert_eq!(ranks.len(), n, "one rank per node");
    let node_role = |v: usize| {
        if v < ni {
            (Role::Issuer, v as u32)
        } else {
            (Role::Winner, (v - ni) as u32)
        }
    };

    let mut degree: Vec<u64> = (0..n)
        .map(|v| {
            let (role, idx) = node_role(v);
            graph.strength(role, idx)
        })
        .collect();
    let mut removed = vec![false; n];
    let mut core = vec![0u64; n];
    let mut heap: BinaryHeap<Reverse<(u64, u32, u32)>> = (0..n)
        .map(|v| Reverse((degree[v], ranks[v], v as u32)))
        .collect();

    let mut level = 0u64;
    while let Some(Reverse((d, _, v))) = heap.pop() {
        let v = v as usize;
        if removed[v] || d != degree[v] {
            continue;
        }
        removed[v] = true;
        level = level.max(d);
        core[v] = level;
        let (role, idx) = node_role(v);
        for &e in graph.incident(role, idx) {
            let edge = graph.edge(e);
            let u = match role {
                Role::Issuer => ni + edge.winner as usize,
                Role::Winner => edge.issuer as usize,
            };
            if !removed[u] {
                degree[u] -= edge.weight;
                heap.push(Reverse((degree[u], ranks[u], u as u32)));
            }
        }
    }
    let winners = core.split_off(ni);
    CoreNumbers {
        issuers: core,
        winners,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdKind {
    /// Mean weighted degree (contract count) of the role.
    #[default]
    Weighted,
    /// Mean number of distinct partners, for sensitivity checks.
    Unweighted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorePartition {
    pub core_numbers: CoreNumbers,
    pub issuer_threshold: f64,
    pub winner_threshold: f64,
    pub core_issuers: Vec<bool>,
    pub core_winners: Vec<bool>,
}

impl CorePartition {
    pub fn is_core(&self, role: Role, idx: u32) -> bool {
        match role {
            Role::Issuer => self.core_issuers[idx as usize],
            Role::Winner => self.core_winners[idx as usize],
        }
    }

    /// A contract on this edge is a core contract.
    pub fn is_core_edge(&self, graph: &MarketGraph, e: u32) -> bool {
        let edge = graph.edge(e);
        self.core_issuers[edge.issuer as usize] && self.core_winners[edge.winner as usize]
    }
}

fn mean(xs: &[u64]) -> f64 {
    xs.iter().map(|&x| x as f64).sum::<f64>() / xs.len() as f64
}

pub fn core_membership(graph: &MarketGraph, core_numbers: &CoreNumbers) -> CorePartition {
    core_membership_with(graph, core_numbers, ThresholdKind::Weighted)
}

pub fn core_membership_with(
    graph: &MarketGraph,
    core_numbers: &CoreNumbers,
    kind: ThresholdKind,
) -> CorePartition {
    let class_mean = |role| match kind {
        ThresholdKind::Weighted => mean(&graph.strengths(role)),
        ThresholdKind::Unweighted => mean(&graph.degrees(role)),
    };
    let issuer_threshold = class_mean(Role::Issuer);
    let winner_threshold = class_mean(Role::Winner);
    let above = |cores: &[u64], t: f64| cores.iter().map(|&c| c as f64 > t).collect();
    CorePartition {
        core_issuers: above(&core_numbers.issuers, issuer_threshold),
        core_winners: above(&core_numbers.winners, winner_threshold),
        core_numbers: core_numbers.clone(),
        issuer_threshold,
        winner_threshold,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoreStats {
    pub core_contracts: u64,
    pub core_share: f64,
    pub core_n_winners: u64,
    pub core_n_issuers: u64,
    pub core_n_edges: u64,
    /// `None` when the core has no contracts.
    pub core_single_bidding_rate: Option<f64>,
}

pub fn core_stats(graph: &MarketGraph, partition: &CorePartition) -> CoreStats {
    let mut contracts = 0u64;
    let mut single = 0u64;
    let mut n_edges = 0u64;
    for (e, edge) in graph.edges().iter().enumerate() {
        if partition.is_core_edge(graph, e as u32) {
            contracts += edge.weight;
            single += edge.single_bid_count;
            n_edges += 1;
        }
    }
    let count = |v: &[bool]| v.iter().filter(|&&b| b).count() as u64;
    CoreStats {
        core_contracts: contracts,
        core_share: contracts as f64 / graph.n_contracts() as f64,
        core_n_winners: count(&partition.core_winners),
        core_n_issuers: count(&partition.core_issuers),
        core_n_edges: n_edges,
        core_single_bidding_rate: (contracts > 0).then(|| single as f64 / contracts as f64),
    }
}

/// `node_id,role,core_number,is_core`, issuers first.
pub fn write_core_nodes<W: Write>(
    graph: &MarketGraph,
    partition: &CorePartition,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["node_id", "role", "core_number", "is_core"])?;
    for role in [Role::Issuer, Role::Winner] {
        let cores = match role {
            Role::Issuer => &partition.core_numbers.issuers,
            Role::Winner => &partition.core_numbers.winners,
        };
        for (idx, &c) in cores.iter().enumerate() {
            let idx = idx as u32;
            w.write_record([
                graph.label(role, idx),
                role.as_str(),
                &c.to_string(),
                if partition.is_core(role, idx) { "true" } else { "false" },
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<core writer>", e))?;
    Ok(())
}

pub const CORE_STATS_HEADER: [&str; 6] = [
    "core_contracts",
    "share",
    "n_winners",
    "n_issuers",
    "n_edges",
    "sb_rate",
];

pub(crate) fn core_stats_fields(s: &CoreStats) -> Vec<String> {
    vec![
        s.core_contracts.to_string(),
        s.core_share.to_string(),
        s.core_n_winners.to_string(),
        s.core_n_issuers.to_string(),
        s.core_n_edges.to_string(),
        fmt_opt(s.core_single_bidding_rate),
    ]
}
