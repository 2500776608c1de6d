// SPDX-License-Identifier: Apache-2.0

//! Link communities: Louvain on the line graph of the market, so every
//! issuer–winner edge (and every contract on it) lands in one community.

mod line_graph;
mod louvain;

use std::io::Write;

use serde::Serialize;

use crate::graph::MarketGraph;
use crate::{fmt_opt, Error, Result};

pub use line_graph::{LineGraph, DEFAULT_LINE_EDGE_CAP};
pub use louvain::louvain_labels;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgePartition {
    /// Community of each market edge, dense ids from 0.
    pub community: Vec<u32>,
    pub n_communities: usize,
    pub modularity: f64,
}

pub fn louvain(lg: &LineGraph, seed: u64) -> EdgePartition {
    if lg.n_edges() == 0 {
        log::info!("line graph has no edges: singleton communities, modularity 0");
    }
    let labels = louvain_labels(lg, seed);
    let community: Vec<u32> = (0..lg.n_nodes() as u32)
        .map(|v| labels[lg.market_edge(v) as usize] as u32)
        .collect();
    let n_communities = labels.iter().max().map_or(0, |&m| m + 1);
    let modularity = modularity(lg, &community);
    EdgePartition {
        community,
        n_communities,
        modularity,
    }
}

/// Newman–Girvan modularity of an unweighted graph partition,
/// `Σ_c e_c/m − (d_c/2m)²`. Zero when the graph has no edges.
pub fn modularity(lg: &LineGraph, partition: &[u32]) -> f64 {
    assert_eq!(partition.len(), lg.n_nodes(), "partition must cover every node");
    let m = lg.n_edges() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let k = partition.iter().max().map_or(0, |&c| c as usize + 1);
    let mut internal = vec![0u64; k];
    let mut degree = vec![0u64; k];
    for v in 0..lg.n_nodes() as u32 {
        let c = partition[v as usize];
        degree[c as usize] += lg.degree(v) as u64;
        internal[c as usize] += lg
            .neighbors(v)
            .iter()
            .filter(|&&u| u > v && partition[u as usize] == c)
            .count() as u64;
    }
    internal
        .iter()
        .zip(&degree)
        .map(|(&e, &d)| e as f64 / m - (d as f64 / (2.0 * m)).powi(2))
        .sum()
}

/// Mean and standard deviation of modularity over `seeds`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModularitySpread {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

pub fn modularity_across_seeds(lg: &LineGraph, seeds: &[u64]) -> ModularitySpread {
    let values: Vec<f64> = seeds.iter().map(|&s| louvain(lg, s).modularity).collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / n).sqrt();
    ModularitySpread { mean, std, values }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SbMoments {
    pub mu_w: f64,
    /// `None` with fewer than two clusters.
    pub sigma_w: Option<f64>,
}

/// Size-weighted mean and standard deviation of single-bidding rates across
/// clusters:
///
/// ```text
/// μ = Σ|c|·sb_c / Σ|c|
/// σ = sqrt( Σ|c|·(sb_c − μ)² / ( (|C|−1)/|C| · Σ|c| ) )
/// ```
pub fn weighted_sb_moments(clusters: &[(u64, f64)]) -> Result<SbMoments> {
    if clusters.is_empty() {
        return Err(Error::Invalid("no clusters".into()));
    }
    if clusters.iter().any(|&(size, _)| size == 0) {
        return Err(Error::Invalid("cluster sizes must be positive".into()));
    }
    let total: f64 = clusters.iter().map(|&(s, _)| s as f64).sum();
    let mu_w = clusters.iter().map(|&(s, r)| s as f64 * r).sum::<f64>() / total;
    let n_c = clusters.len() as f64;
    let sigma_w = (clusters.len() >= 2).then(|| {
        let num: f64 = clusters
            .iter()
            .map(|&(s, r)| s as f64 * (r - mu_w).powi(2))
            .sum();
        (num / ((n_c - 1.0) / n_c * total)).sqrt()
    });
    Ok(SbMoments { mu_w, sigma_w })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskClusteringResult {
    pub mu_w: f64,
    pub sigma_w: Option<f64>,
    /// `σ/μ`; `None` when σ is undefined or μ is zero.
    pub cv: Option<f64>,
    /// Contracts per community.
    pub cluster_sizes: Vec<u64>,
    /// Single-bidding rate per community.
    pub cluster_sb: Vec<f64>,
}

/// Contract-level view of an edge partition, reusable across relabelings.
#[derive(Debug, Clone)]
pub struct ContractClusters {
    contract_cluster: Vec<u32>,
    sizes: Vec<u64>,
}

impl ContractClusters {
    pub fn new(graph: &MarketGraph, partition: &EdgePartition) -> Self {
        assert_eq!(partition.community.len(), graph.n_edges(), "partition must cover every edge");
        let contract_cluster: Vec<u32> = graph
            .contracts()
            .iter()
            .map(|c| partition.community[c.edge as usize])
            .collect();
        let mut sizes = vec![0u64; partition.n_communities];
        for &c in &contract_cluster {
            sizes[c as usize] += 1;
        }
        Self {
            contract_cluster,
            sizes,
        }
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    /// Single-bid counts per cluster under the given contract flags.
    pub fn single_bid_counts(&self, flags: &[bool]) -> Vec<u64> {
        let mut counts = vec![0u64; self.sizes.len()];
        for (&c, &f) in self.contract_cluster.iter().zip(flags) {
            counts[c as usize] += u64::from(f);
        }
        counts
    }

    pub fn evaluate(&self, flags: &[bool]) -> RiskClusteringResult {
        let counts = self.single_bid_counts(flags);
        let cluster_sb: Vec<f64> = counts
            .iter()
            .zip(&self.sizes)
            .map(|(&k, &s)| k as f64 / s as f64)
            .collect();
        let clusters: Vec<(u64, f64)> = self.sizes.iter().copied().zip(cluster_sb.iter().copied()).collect();
        let SbMoments { mu_w, sigma_w } =
            weighted_sb_moments(&clusters).expect("clusters are non-empty with positive sizes");
        let cv = match sigma_w {
            Some(s) if mu_w > 0.0 => Some(s / mu_w),
            _ => None,
        };
        RiskClusteringResult {
            mu_w,
            sigma_w,
            cv,
            cluster_sizes: self.sizes.clone(),
            cluster_sb,
        }
    }
}

/// Clustering of single bidding: weighted coefficient of variation of
/// single-bid rates across the contract clusters induced by the partition.
pub fn sb_clustering_cv(graph: &MarketGraph, partition: &EdgePartition) -> RiskClusteringResult {
    ContractClusters::new(graph, partition).evaluate(&graph.single_bid_flags())
}

/// `issuer_id,winner_id,community`.
pub fn write_partition<W: Write>(
    graph: &MarketGraph,
    partition: &EdgePartition,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["issuer_id", "winner_id", "community"])?;
    for (edge, c) in graph.edges().iter().zip(&partition.community) {
        w.write_record([
            graph.issuer_label(edge.issuer),
            graph.winner_label(edge.winner),
            &c.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<partition writer>", e))?;
    Ok(())
}

/// `community,n_contracts,sb_rate`.
pub fn write_cluster_summary<W: Write>(result: &RiskClusteringResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["community", "n_contracts", "sb_rate"])?;
    for (c, (size, rate)) in result.cluster_sizes.iter().zip(&result.cluster_sb).enumerate() {
        w.write_record([c.to_string(), size.to_string(), rate.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<cluster writer>", e))?;
    Ok(())
}

pub(crate) fn clustering_fields(r: &RiskClusteringResult) -> [String; 3] {
    [r.mu_w.to_string(), fmt_opt(r.sigma_w), fmt_opt(r.cv)]
}
