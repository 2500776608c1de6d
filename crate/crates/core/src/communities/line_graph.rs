// SPDX-License-Identifier: Apache-2.0

use std::cmp::Reverse;

use rayon::prelude::*;

use crate::graph::{MarketGraph, Role};
use crate::{Error, Result};

/// Default cap on line-graph edges.
pub const DEFAULT_LINE_EDGE_CAP: u64 = 100_000_000;

/// Unweighted line graph of a market: one node per market edge (same ids),
/// adjacent when the market edges share an issuer or a winner. Stored as
/// compressed adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineGraph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    n_line_edges: u64,
}

fn pairs(deg: usize) -> u64 {
    let d = deg as u64;
    d * d.saturating_sub(1) / 2
}

impl LineGraph {
    pub fn build(graph: &MarketGraph) -> Result<Self> {
        Self::build_with_cap(graph, DEFAULT_LINE_EDGE_CAP)
    }

    /// Fails before allocating when the line graph would exceed `cap` edges,
    /// naming the market nodes contributing most.
    pub fn build_with_cap(graph: &MarketGraph, cap: u64) -> Result<Self> {
        if graph.n_edges() == 0 {
            return Err(Error::EmptyMarket);
        }
        let mut contributions: Vec<(u64, Role, u32)> = Vec::with_capacity(graph.n_nodes());
        for role in [Role::Issuer, Role::Winner] {
            for (idx, d) in graph.degrees(role).into_iter().enumerate() {
                contributions.push((pairs(d as usize), role, idx as u32));
            }
        }
        let projected: u64 = contributions.iter().map(|c| c.0).sum();
        if projected > cap {
            contributions.sort_by_key(|c| Reverse(c.0));
            let hubs = contributions
                .iter()
                .take(5)
                .map(|&(p, role, idx)| format!("{} {} ({p})", role, graph.label(role, idx)))
                .collect();
            return Err(Error::LineGraphTooLarge {
                projected,
                cap,
                hubs,
            });
        }

        let lists: Vec<Vec<u32>> = (0..graph.n_edges() as u32)
            .into_par_iter()
            .map(|e| {
                let edge = graph.edge(e);
                graph
                    .incident(Role::Issuer, edge.issuer)
                    .iter()
                    .chain(graph.incident(Role::Winner, edge.winner))
                    .copied()
                    .filter(|&f| f != e)
                    .collect()
            })
            .collect();
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut neighbors = Vec::with_capacity(2 * projected as usize);
        for l in lists {
            neighbors.extend_from_slice(&l);
            offsets.push(neighbors.len());
        }
        debug_assert_eq!(neighbors.len() as u64, 2 * projected);
        Ok(Self {
            offsets,
            neighbors,
            n_line_edges: projected,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_edges(&self) -> u64 {
        self.n_line_edges
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.neighbors[self.offsets[v as usize]..self.offsets[v as usize + 1]]
    }

    pub fn degree(&self, v: u32) -> usize {
        self.offsets[v as usize + 1] - self.offsets[v as usize]
    }

    /// Market edge behind a line node.
    pub fn market_edge(&self, v: u32) -> u32 {
        v
    }

    /// Undirected edge list `(u, v)` with `u < v`.
    pub fn edge_list(&self) -> Vec<(u32, u32)> {
        (0..self.n_nodes() as u32)
            .flat_map(|u| self.neighbors(u).iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<(u32, u32)>) -> Vec<(u32, u32)> {
        v.sort_unstable();
        v
    }

    #[test]
    fn path_shares_middle_winner() {
        let g = MarketGraph::from_weighted_edges(&[("I1", "W1", 1, 0), ("I2", "W1", 2, 0)]).unwrap();
        let lg = LineGraph::build(&g).unwrap();
        assert_eq!((lg.n_nodes(), lg.n_edges()), (2, 1));
        assert_eq!(lg.edge_list(), [(0, 1)]);
    }

    #[test]
    fn disjoint_edges_are_isolated() {
        let g = MarketGraph::from_weighted_edges(&[("I1", "W1", 1, 0), ("I2", "W2", 1, 0)]).unwrap();
        let lg = LineGraph::build(&g).unwrap();
        assert_eq!((lg.n_nodes(), lg.n_edges()), (2, 0));
    }

    #[test]
    fn complete_bipartite_2_2_gives_4_cycle() {
        let g = MarketGraph::from_weighted_edges(&[
            ("I1", "W1", 1, 0),
            ("I1", "W2", 1, 0),
            ("I2", "W1", 1, 0),
            ("I2", "W2", 1, 0),
        ])
        .unwrap();
        let lg = LineGraph::build(&g).unwrap();
        // edges sorted: 0=(I1,W1) 1=(I1,W2) 2=(I2,W1) 3=(I2,W2)
        assert_eq!(sorted(lg.edge_list()), [(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert!((0..4).all(|v| lg.degree(v) == 2));
    }

    #[test]
    fn cap_names_hubs() {
        let edges: Vec<(String, u64)> = (0..20).map(|k| (format!("W{k:02}"), 1)).collect();
        let e: Vec<(&str, &str, u64, u64)> = edges.iter().map(|(w, n)| ("HUB", w.as_str(), *n, 0)).collect();
        let g = MarketGraph::from_weighted_edges(&e).unwrap();
        match LineGraph::build_with_cap(&g, 100) {
            Err(Error::LineGraphTooLarge { projected, hubs, .. }) => {
                assert_eq!(projected, 190);
                assert!(hubs[0].contains("HUB"));
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }
}
