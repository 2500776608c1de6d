// SPDX-License-Identifier: Apache-2.0

//! Weighted bipartite issuer–winner market graph.
//!
//! Nodes are kept in two index spaces, one per role, each sorted by label.
//! Edges are sorted by `(issuer, winner)`; an edge's weight is the number of
//! contracts between the pair.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::ingest::ContractTable;
use crate::{fmt_opt, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Issuer = 0,
    Winner = 1,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Issuer => "issuer",
            Role::Winner => "winner",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStats {
    pub issuer: u32,
    pub winner: u32,
    pub contract_ids: Vec<String>,
    pub weight: u64,
    pub single_bid_count: u64,
}

/// Per-contract view used by the null model.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractEntry {
    pub contract_id: String,
    pub edge: u32,
    pub cpv_class: String,
    pub single_bid: bool,
}

#[derive(Debug, Clone)]
pub struct MarketGraph {
    issuers: Vec<String>,
    winners: Vec<String>,
    edges: Vec<EdgeStats>,
    issuer_edges: Vec<Vec<u32>>,
    winner_edges: Vec<Vec<u32>>,
    contracts: Vec<ContractEntry>,
}

/// Sorted labels and a label → index map.
fn index_labels<'a>(labels: impl Iterator<Item = &'a str>) -> (Vec<String>, HashMap<&'a str, u32>) {
    let sorted: Vec<&str> = labels
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let map = sorted
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, i as u32))
        .collect();
    (sorted.into_iter().map(str::to_string).collect(), map)
}

impl MarketGraph {
    /// Builds the graph from contract records. Node labels are the entity ids;
    /// when the table spans several countries they are prefixed `CC:` so that
    /// equal names from different countries stay distinct.
    pub fn build(table: &ContractTable) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::EmptyMarket);
        }
        let multi_country = table
            .records
            .iter()
            .any(|r| r.country != table.records[0].country);
        let label = |country: &str, id: &str| {
            if multi_country {
                format!("{country}:{id}")
            } else {
                id.to_string()
            }
        };
        let issuer_labels: Vec<String> = table
            .records
            .iter()
            .map(|r| label(&r.country, &r.issuer_id))
            .collect();
        let winner_labels: Vec<String> = table
            .records
            .iter()
            .map(|r| label(&r.country, &r.winner_id))
            .collect();
        let (issuers, issuer_idx) = index_labels(issuer_labels.iter().map(String::as_str));
        let (winners, winner_idx) = index_labels(winner_labels.iter().map(String::as_str));

        let mut pair_of = Vec::with_capacity(table.len());
        let mut pairs: BTreeMap<(u32, u32), ()> = BTreeMap::new();
        for (i, w) in issuer_labels.iter().zip(&winner_labels) {
            let key = (issuer_idx[i.as_str()], winner_idx[w.as_str()]);
            pairs.insert(key, ());
            pair_of.push(key);
        }
        let edge_id: HashMap<(u32, u32), u32> = pairs
            .keys()
            .enumerate()
            .map(|(e, &k)| (k, e as u32))
            .collect();
        let mut edges: Vec<EdgeStats> = pairs
            .keys()
            .map(|&(issuer, winner)| EdgeStats {
                issuer,
                winner,
                contract_ids: Vec::new(),
                weight: 0,
                single_bid_count: 0,
            })
            .collect();

        let mut contracts = Vec::with_capacity(table.len());
        for (rec, key) in table.records.iter().zip(pair_of) {
            let e = edge_id[&key];
            let edge = &mut edges[e as usize];
            edge.contract_ids.push(rec.contract_id.clone());
            edge.weight += 1;
            edge.single_bid_count += u64::from(rec.single_bid);
            contracts.push(ContractEntry {
                contract_id: rec.contract_id.clone(),
                edge: e,
                cpv_class: rec.cpv.class2().to_string(),
                single_bid: rec.single_bid,
            });
        }
        Ok(Self::assemble(issuers, winners, edges, contracts))
    }

    /// Builds a graph directly from `(issuer, winner, weight, single_bid_count)`
    /// tuples. Contracts are synthesized (`e<edge>-<k>`, CPV class `00`), the
    /// first `single_bid_count` of each edge being single bid. Repeated pairs
    /// are merged.
    pub fn from_weighted_edges(edges: &[(&str, &str, u64, u64)]) -> Result<Self> {
        let mut merged: BTreeMap<(&str, &str), (u64, u64)> = BTreeMap::new();
        for &(i, w, weight, sb) in edges {
            if weight == 0 || sb > weight {
                return Err(Error::Invalid(format!(
                    "edge ({i}, {w}): need 0 <= single_bid_count <= weight and weight >= 1"
                )));
            }
            let slot = merged.entry((i, w)).or_default();
            slot.0 += weight;
            slot.1 += sb;
        }
        if merged.is_empty() {
            return Err(Error::EmptyMarket);
        }
        let (issuers, issuer_idx) = index_labels(merged.keys().map(|k| k.0));
        let (winners, winner_idx) = index_labels(merged.keys().map(|k| k.1));
        let mut keyed: Vec<((u32, u32), u64, u64)> = merged
            .iter()
            .map(|(&(i, w), &(weight, sb))| ((issuer_idx[i], winner_idx[w]), weight, sb))
            .collect();
        keyed.sort_by_key(|k| k.0);
        let mut out_edges = Vec::with_capacity(keyed.len());
        let mut contracts = Vec::new();
        for (e, ((issuer, winner), weight, sb)) in keyed.into_iter().enumerate() {
            let ids: Vec<String> = (0..weight).map(|k| format!("e{e}-{k}")).collect();
            for (k, id) in ids.iter().enumerate() {
                contracts.push(ContractEntry {
                    contract_id: id.clone(),
                    edge: e as u32,
                    cpv_class: "00".into(),
                    single_bid: (k as u64) < sb,
                });
            }
            out_edges.push(EdgeStats {
                issuer,
                winner,
                contract_ids: ids,
                weight,
                single_bid_count: sb,
            });
        }
        Ok(Self::assemble(issuers, winners, out_edges, contracts))
    }

    fn assemble(
        issuers: Vec<String>,
        winners: Vec<String>,
        edges: Vec<EdgeStats>,
        contracts: Vec<ContractEntry>,
    ) -> Self {
        let mut issuer_edges = vec![Vec::new(); issuers.len()];
        let mut winner_edges = vec![Vec::new(); winners.len()];
        for (e, edge) in edges.iter().enumerate() {
            issuer_edges[edge.issuer as usize].push(e as u32);
            winner_edges[edge.winner as usize].push(e as u32);
        }
        Self {
            issuers,
            winners,
            edges,
            issuer_edges,
            winner_edges,
            contracts,
        }
    }

    pub fn n_issuers(&self) -> usize {
        self.issuers.len()
    }

    pub fn n_winners(&self) -> usize {
        self.winners.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.issuers.len() + self.winners.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_contracts(&self) -> usize {
        self.contracts.len()
    }

    pub fn issuer_label(&self, i: u32) -> &str {
        &self.issuers[i as usize]
    }

    pub fn winner_label(&self, w: u32) -> &str {
        &self.winners[w as usize]
    }

    pub fn label(&self, role: Role, idx: u32) -> &str {
        match role {
            Role::Issuer => self.issuer_label(idx),
            Role::Winner => self.winner_label(idx),
        }
    }

    pub fn edges(&self) -> &[EdgeStats] {
        &self.edges
    }

    pub fn edge(&self, e: u32) -> &EdgeStats {
        &self.edges[e as usize]
    }

    pub fn find_edge(&self, issuer: &str, winner: &str) -> Option<&EdgeStats> {
        let i = self.issuers.binary_search_by(|l| l.as_str().cmp(issuer)).ok()? as u32;
        let w = self.winners.binary_search_by(|l| l.as_str().cmp(winner)).ok()? as u32;
        self.issuer_edges[i as usize]
            .iter()
            .map(|&e| &self.edges[e as usize])
            .find(|edge| edge.winner == w)
    }

    /// Ids of the edges incident to a node.
    pub fn incident(&self, role: Role, idx: u32) -> &[u32] {
        match role {
            Role::Issuer => &self.issuer_edges[idx as usize],
            Role::Winner => &self.winner_edges[idx as usize],
        }
    }

    pub fn contracts(&self) -> &[ContractEntry] {
        &self.contracts
    }

    pub fn single_bid_flags(&self) -> Vec<bool> {
        self.contracts.iter().map(|c| c.single_bid).collect()
    }

    pub fn n_single_bid(&self) -> u64 {
        self.edges.iter().map(|e| e.single_bid_count).sum()
    }

    /// Weighted degree (contract count) of a node.
    pub fn strength(&self, role: Role, idx: u32) -> u64 {
        self.incident(role, idx)
            .iter()
            .map(|&e| self.edges[e as usize].weight)
            .sum()
    }

    pub fn strengths(&self, role: Role) -> Vec<u64> {
        let n = match role {
            Role::Issuer => self.n_issuers(),
            Role::Winner => self.n_winners(),
        };
        (0..n as u32).map(|i| self.strength(role, i)).collect()
    }

    pub fn degrees(&self, role: Role) -> Vec<u64> {
        match role {
            Role::Issuer => self.issuer_edges.iter().map(|v| v.len() as u64).collect(),
            Role::Winner => self.winner_edges.iter().map(|v| v.len() as u64).collect(),
        }
    }
}

/// Descriptive statistics of one market graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketStats {
    pub n_contracts: u64,
    pub n_winners: u64,
    pub n_issuers: u64,
    pub n_edges: u64,
    pub density: f64,
    pub ra_clustering: Option<f64>,
    pub winner_strength_mean: f64,
    pub winner_strength_std: f64,
    pub issuer_strength_mean: f64,
    pub issuer_strength_std: f64,
    pub single_bidding_rate: f64,
}

/// Mean and population standard deviation.
pub(crate) fn mean_std_population(xs: &[u64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn market_stats(graph: &MarketGraph) -> MarketStats {
    let (wm, ws) = mean_std_population(&graph.strengths(Role::Winner));
    let (im, is) = mean_std_population(&graph.strengths(Role::Issuer));
    let n_contracts = graph.n_contracts() as u64;
    MarketStats {
        n_contracts,
        n_winners: graph.n_winners() as u64,
        n_issuers: graph.n_issuers() as u64,
        n_edges: graph.n_edges() as u64,
        density: graph.n_edges() as f64 / (graph.n_issuers() as f64 * graph.n_winners() as f64),
        ra_clustering: robins_alexander_clustering(graph),
        winner_strength_mean: wm,
        winner_strength_std: ws,
        issuer_strength_mean: im,
        issuer_strength_std: is,
        single_bidding_rate: graph.n_single_bid() as f64 / n_contracts as f64,
    }
}

/// Counts of 4-cycles and 3-edge paths, edge weights ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CycleCounts {
    pub four_cycles: u64,
    pub three_paths: u64,
}

/// Each 4-cycle is a pair of nodes on one side with two common neighbours,
/// so C4 = Σ over same-side pairs of C(common, 2). The side whose pairs are
/// enumerated is the one reached through the cheaper opposite side.
pub fn cycle_counts(graph: &MarketGraph) -> CycleCounts {
    let sq = |lists: &[Vec<u32>]| lists.iter().map(|l| (l.len() as u64).pow(2)).sum::<u64>();
    // pairs of `pair_role` nodes are found through nodes of the other role
    let (pair_role, n_pair) = if sq(&graph.winner_edges) <= sq(&graph.issuer_edges) {
        (Role::Issuer, graph.n_issuers())
    } else {
        (Role::Winner, graph.n_winners())
    };
    let other = |e: &EdgeStats| match pair_role {
        Role::Issuer => (Role::Winner, e.winner),
        Role::Winner => (Role::Issuer, e.issuer),
    };
    let endpoint = |e: &EdgeStats| match pair_role {
        Role::Issuer => e.issuer,
        Role::Winner => e.winner,
    };

    let mut common = vec![0u64; n_pair];
    let mut touched = Vec::new();
    let mut four_cycles = 0u64;
    for a in 0..n_pair as u32 {
        for &e in graph.incident(pair_role, a) {
            let (orole, mid) = other(&graph.edges[e as usize]);
            for &f in graph.incident(orole, mid) {
                let b = endpoint(&graph.edges[f as usize]);
                if b > a {
                    if common[b as usize] == 0 {
                        touched.push(b);
                    }
                    common[b as usize] += 1;
                }
            }
        }
        for &b in &touched {
            let c = common[b as usize];
            four_cycles += c * (c - 1) / 2;
            common[b as usize] = 0;
        }
        touched.clear();
    }

    // a 3-path has a unique middle edge (u, v); its ends are any other
    // neighbour of u and any other neighbour of v, distinct by bipartiteness
    let three_paths = graph
        .edges
        .iter()
        .map(|e| {
            let du = graph.issuer_edges[e.issuer as usize].len() as u64;
            let dv = graph.winner_edges[e.winner as usize].len() as u64;
            (du - 1) * (dv - 1)
        })
        .sum();
    CycleCounts {
        four_cycles,
        three_paths,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RaScaling {
    /// 4·C4/L3, equal to 1 on complete bipartite graphs.
    #[default]
    Conventional,
    /// C4/L3.
    Literal,
}

/// Robins–Alexander bipartite clustering; `None` when the graph has no
/// path of length three.
pub fn robins_alexander_clustering(graph: &MarketGraph) -> Option<f64> {
    robins_alexander_with(graph, RaScaling::Conventional)
}

pub fn robins_alexander_with(graph: &MarketGraph, scaling: RaScaling) -> Option<f64> {
    let c = cycle_counts(graph);
    if c.three_paths == 0 {
        return None;
    }
    let factor = match scaling {
        RaScaling::Conventional => 4.0,
        RaScaling::Literal => 1.0,
    };
    Some(factor * c.four_cycles as f64 / c.three_paths as f64)
}

/// Edge list `issuer_id,winner_id,weight,single_bid_count`.
pub fn write_edge_list<W: Write>(graph: &MarketGraph, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["issuer_id", "winner_id", "weight", "single_bid_count"])?;
    for e in &graph.edges {
        w.write_record([
            graph.issuer_label(e.issuer),
            graph.winner_label(e.winner),
            &e.weight.to_string(),
            &e.single_bid_count.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<edge list writer>", e))?;
    Ok(())
}

pub const MARKET_STATS_HEADER: [&str; 12] = [
    "n_contracts",
    "n_winners",
    "n_issuers",
    "n_edges",
    "density",
    "ra_clustering",
    "mean_deg_w",
    "std_deg_w",
    "mean_deg_i",
    "std_deg_i",
    "sb_rate",
    "std_normalization",
];

pub(crate) fn market_stats_fields(s: &MarketStats) -> Vec<String> {
    vec![
        s.n_contracts.to_string(),
        s.n_winners.to_string(),
        s.n_issuers.to_string(),
        s.n_edges.to_string(),
        s.density.to_string(),
        fmt_opt(s.ra_clustering),
        s.winner_strength_mean.to_string(),
        s.winner_strength_std.to_string(),
        s.issuer_strength_mean.to_string(),
        s.issuer_strength_std.to_string(),
        s.single_bidding_rate.to_string(),
        "population".to_string(),
    ]
}

/// Single-row statistics CSV.
pub fn write_market_stats<W: Write>(stats: &MarketStats, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MARKET_STATS_HEADER)?;
    w.write_record(market_stats_fields(stats))?;
    w.flush().map_err(|e| Error::io("<stats writer>", e))?;
    Ok(())
}
